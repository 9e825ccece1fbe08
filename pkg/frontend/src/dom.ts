/** Browser implementation of the trial view.
 *
 * Playback pre-fetches the whole frame sequence and drives it from a
 * requestAnimationFrame loop at the declared fps, so the displayed frames
 * are exactly the analysed ones and the client fully controls timing.
 * Ground-truth labels never reach this module.
 */

import type { TrialView } from "./trialRunner.js";
import type { MediaBundle } from "./types.js";

export class DomView implements TrialView {
  private readonly stage: HTMLDivElement;
  private readonly img: HTMLImageElement;
  private readonly fixation: HTMLDivElement;
  private readonly promptBox: HTMLDivElement;
  private readonly input: HTMLInputElement;
  private readonly hintLine: HTMLDivElement;
  private readonly status: HTMLDivElement;
  private raf = 0;
  private frames: HTMLImageElement[] = [];

  constructor(root: HTMLElement, private readonly baseUrl: string) {
    root.innerHTML = "";
    root.style.background = "#ffffff";
    this.stage = document.createElement("div");
    this.stage.style.cssText =
      "display:flex;align-items:center;justify-content:center;min-height:60vh;background:#fff";
    this.fixation = document.createElement("div");
    this.fixation.textContent = "+";
    this.fixation.style.cssText = "font-size:64px;font-family:monospace";
    this.img = document.createElement("img");
    this.img.style.imageRendering = "pixelated";
    this.img.style.transform = "scale(4)";
    this.promptBox = document.createElement("div");
    this.promptBox.style.cssText = "text-align:center;margin-top:16px";
    this.hintLine = document.createElement("div");
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.size = 40;
    this.status = document.createElement("div");
    this.status.style.cssText = "color:#666;margin-top:12px;text-align:center";
    root.append(this.stage, this.promptBox, this.status);
  }

  showFixation(): void {
    this.promptBox.innerHTML = "";
    this.stage.replaceChildren(this.fixation);
  }

  startPlayback(bundle: MediaBundle): void {
    this.frames = bundle.frame_urls.map((url) => {
      const img = new Image();
      img.src = `${this.baseUrl}${url}`;
      return img;
    });
    this.stage.replaceChildren(this.img);
    const start = performance.now();
    const frameMs = 1000 / bundle.fps;
    const tick = () => {
      const elapsed = performance.now() - start;
      let idx = Math.floor(elapsed / frameMs);
      idx = bundle.loop
        ? idx % this.frames.length
        : Math.min(idx, this.frames.length - 1);
      const frame = this.frames[idx];
      if (frame.complete && frame.src !== this.img.src) this.img.src = frame.src;
      this.raf = requestAnimationFrame(tick);
    };
    this.raf = requestAnimationFrame(tick);
  }

  stopPlayback(): void {
    cancelAnimationFrame(this.raf);
  }

  showPrompt(hint: string): Promise<string> {
    this.hintLine.textContent = hint;
    this.input.value = "";
    const button = document.createElement("button");
    button.textContent = "submit";
    this.promptBox.replaceChildren(this.hintLine, this.input, button);
    this.input.focus();
    return new Promise((resolve) => {
      const finish = () => {
        const text = this.input.value.trim();
        if (!text) return;
        this.promptBox.innerHTML = "";
        resolve(text);
      };
      button.addEventListener("click", finish);
      this.input.addEventListener("keydown", (ev) => {
        if (ev.key === "Enter") finish();
      });
    });
  }

  showCompletion(code: string): void {
    this.stage.replaceChildren();
    this.promptBox.innerHTML = "";
    this.status.textContent = `all done — your completion code is ${code}`;
  }

  showExcluded(): void {
    this.stage.replaceChildren();
    this.promptBox.innerHTML = "";
    this.status.textContent = "the session has ended; thank you for taking part";
  }

  notify(message: string): void {
    this.status.textContent = message;
  }
}
