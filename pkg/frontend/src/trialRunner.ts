/** Trial presentation state machine.
 *
 * One trial runs: fixation cross for fixation_ms, then frame-sequence
 * playback on a white background (the response input is not mounted yet,
 * so early submission is impossible), then at prompt_delay_ms after
 * playback start the free-text box appears with the three-word guidance
 * hint.  The submitted response_time_ms counts from playback start, so the
 * server's before-prompt audit stays meaningful; the portion measured from
 * prompt appearance is kept alongside.
 *
 * Media failures flag the trial and submit a sentinel answer so the
 * session can continue; the server scores it incorrect.
 */

import type { ApiClient } from "./api.js";
import type { Scheduler } from "./timing.js";
import type { MediaBundle, TrialDescriptor, TrialResult } from "./types.js";

export const RESPONSE_HINT = "one action and one object, up to three words";
export const MEDIA_FAILURE_TEXT = "media failure";
export const SOFT_WORD_LIMIT = 3;

export interface TrialView {
  showFixation(): void;
  startPlayback(bundle: MediaBundle): void;
  stopPlayback(): void;
  /** mounts the input; resolves with the participant's text */
  showPrompt(hint: string): Promise<string>;
  showCompletion(code: string): void;
  showExcluded(): void;
  notify(message: string): void;
}

export function countWords(text: string): number {
  return text.trim().split(/\s+/).filter(Boolean).length;
}

export class TrialRunner {
  constructor(
    private readonly api: ApiClient,
    private readonly view: TrialView,
    private readonly scheduler: Scheduler,
  ) {}

  async runTrial(trial: TrialDescriptor): Promise<TrialResult> {
    this.view.showFixation();
    await this.scheduler.delay(trial.timing.fixation_ms);

    let bundle: MediaBundle | null = null;
    try {
      bundle = await this.api.mediaBundle(trial.media);
    } catch {
      bundle = null;
    }
    if (bundle === null) {
      this.view.notify(`media unavailable for ${trial.node_id}; trial flagged`);
      return {
        nodeId: trial.node_id,
        text: MEDIA_FAILURE_TEXT,
        responseTimeMs: trial.timing.prompt_delay_ms,
        msFromPrompt: 0,
        mediaFailed: true,
      };
    }

    this.view.startPlayback(bundle);
    await this.scheduler.delay(trial.timing.prompt_delay_ms);
    const promptShownAt = this.scheduler.now();

    const text = await this.view.showPrompt(RESPONSE_HINT);
    const msFromPrompt = Math.round(this.scheduler.now() - promptShownAt);
    this.view.stopPlayback();

    if (countWords(text) > SOFT_WORD_LIMIT) {
      // soft limit: warn, never block or truncate
      this.view.notify(`response has more than ${SOFT_WORD_LIMIT} words`);
    }
    return {
      nodeId: trial.node_id,
      text,
      // from-playback-start time is the prompt delay plus the measured
      // from-prompt portion, immune to timer wake-up jitter
      responseTimeMs: trial.timing.prompt_delay_ms + msFromPrompt,
      msFromPrompt,
      mediaFailed: false,
    };
  }

  /** Runs trials until the server reports done or excluded. */
  async runSession(sessionId: string): Promise<TrialResult[]> {
    const log: TrialResult[] = [];
    for (;;) {
      const next = await this.api.next(sessionId);
      if (next.status === "done") {
        this.view.showCompletion(sessionId);
        return log;
      }
      if (next.status === "excluded") {
        this.view.showExcluded();
        return log;
      }
      const result = await this.runTrial(next.trial);
      log.push(result);
      const ack = await this.api.submit(
        sessionId,
        result.nodeId,
        result.text,
        result.responseTimeMs,
      );
      if (ack.excluded) {
        this.view.showExcluded();
        return log;
      }
    }
  }
}
