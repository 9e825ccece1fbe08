/** Scripted participant against a live service instance.
 *
 * Spawns the Python experiment service over a generated 36-clip protocol
 * dataset (plus 5 practice and 2 catch clips), completes a full
 * 5 + 36 + 2 session through the real TrialRunner state machine, and
 * checks the server-visible invariants: one node per source clip per
 * session, and exclusion after failing both catch trials.
 *
 * Trial pacing is accelerated through the study config (the timing
 * parameters are data, not code); the spec-value timing itself is covered
 * by the virtual-clock unit tests.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { RealScheduler } from "../src/timing.js";
import { TrialRunner, type TrialView } from "../src/trialRunner.js";
import type { MediaBundle } from "../src/types.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const WRONG = "dance floor";

let server: ChildProcess | null = null;
let labels: Record<string, string> = {};
let studyId = "";

class HeadlessView implements TrialView {
  kinds: string[] = [];
  nodes: string[] = [];
  last = "";
  answer: (nodeId: string, kind: string) => string = () => "x";

  showFixation() {}
  startPlayback(_b: MediaBundle) {}
  stopPlayback() {}
  async showPrompt(_hint: string): Promise<string> {
    return this.answer(this.nodes.at(-1)!, this.kinds.at(-1)!);
  }
  showCompletion(code: string) {
    this.last = `done:${code}`;
  }
  showExcluded() {
    this.last = "excluded";
  }
  notify(_message: string) {}
}

/** TrialRunner wired to record each trial before answering. */
function makeRunner(view: HeadlessView): { api: ApiClient; runner: TrialRunner } {
  const api = new ApiClient(BASE, { retries: 5, retryDelayMs: 100 });
  const realNext = api.next.bind(api);
  api.next = async (sessionId: string) => {
    const out = await realNext(sessionId);
    if (out.status === "trial") {
      view.nodes.push(out.trial.node_id);
      view.kinds.push(out.trial.kind);
    }
    return out;
  };
  return { api, runner: new TrialRunner(api, view, new RealScheduler()) };
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "mirc-frontend-"));
  const gen = spawnSync(
    "python3",
    [join(__dirname, "..", "scripts", "make_protocol_data.py"), dataDir],
    { encoding: "utf-8" },
  );
  if (gen.status !== 0) throw new Error(`data generation failed: ${gen.stderr}`);
  labels = JSON.parse(readFileSync(join(dataDir, "labels.json"), "utf-8"));

  server = spawn(
    "python3",
    [
      "-c",
      `import uvicorn; from mirc_lab.service import create_app; ` +
        `uvicorn.run(create_app(r"${dataDir}/studies"), host="127.0.0.1", port=${PORT}, log_level="warning")`,
    ],
    { stdio: ["ignore", "inherit", "inherit"] },
  );

  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/openapi.json`);
      if (resp.ok) break;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 100));
  }

  const resp = await fetch(`${BASE}/v1/studies`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({
      manifest: join(dataDir, "manifest.json"),
      config: {
        set_size: 36,
        response_quota: 3,
        seed: 21,
        fixation_ms: 1,
        prompt_delay_ms: 5,
        scoring: {
          penalty_constant: 0.3,
          bonus_constant: 0.3,
          correctness_threshold: 0.5,
        },
      },
    }),
  });
  if (!resp.ok) throw new Error(`study setup failed: ${await resp.text()}`);
  studyId = (await resp.json()).study_id;
}, 60_000);

afterAll(() => {
  server?.kill();
});

describe("live protocol", () => {
  it("a diligent participant completes 5 practice + 36 main + 2 catch trials", async () => {
    const view = new HeadlessView();
    view.answer = (nodeId) => labels[nodeId.split("/")[0]];
    const { api, runner } = makeRunner(view);
    const created = await api.createParticipant(studyId);
    expect(created.trial_count).toBe(43);

    const log = await runner.runSession(created.session_id);
    expect(view.last).toBe(`done:${created.session_id}`);
    expect(log).toHaveLength(43);
    expect(view.kinds.slice(0, 5)).toEqual(Array(5).fill("practice"));
    expect(view.kinds.filter((k) => k === "main")).toHaveLength(36);
    expect(view.kinds.filter((k) => k === "catch")).toHaveLength(2);

    // one node per source clip within the session
    const mainClips = view.nodes
      .filter((_, i) => view.kinds[i] === "main")
      .map((n) => n.split("/")[0]);
    expect(new Set(mainClips).size).toBe(36);

    // every submitted response passed the server's prompt-delay audit
    for (const result of log) {
      expect(result.responseTimeMs).toBeGreaterThanOrEqual(5);
    }
  }, 120_000);

  it("failing both catch trials excludes the participant server-side", async () => {
    const view = new HeadlessView();
    view.answer = (nodeId, kind) =>
      kind === "catch" ? WRONG : labels[nodeId.split("/")[0]];
    const { api, runner } = makeRunner(view);
    const created = await api.createParticipant(studyId);
    await runner.runSession(created.session_id);

    const progress = await (await fetch(`${BASE}/v1/studies/${studyId}/progress`)).json();
    expect(progress.sessions[created.session_id].excluded).toBe(true);
    // and the server refuses further trials for that session
    const next = await api.next(created.session_id);
    expect(next.status).toBe("excluded");
  }, 120_000);

  it("serves cropped frames for playback", async () => {
    const bundleResp = await fetch(
      `${BASE}/v1/studies/${studyId}/bundle?node=${encodeURIComponent("t00/L0/")}`,
    );
    expect(bundleResp.ok).toBe(true);
    const bundle = (await bundleResp.json()) as MediaBundle;
    expect(bundle.frame_urls.length).toBe(6);
    const frame = await fetch(`${BASE}${bundle.frame_urls[0]}`);
    expect(frame.ok).toBe(true);
    expect(frame.headers.get("content-type")).toBe("image/png");
  }, 30_000);
});
