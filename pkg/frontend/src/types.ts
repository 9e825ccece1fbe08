/** Wire types of the /v1 experiment API. */

export interface TrialTiming {
  fixation_ms: number;
  prompt_delay_ms: number;
}

export interface TrialDescriptor {
  node_id: string;
  kind: "practice" | "catch" | "main";
  index: number;
  total: number;
  media: string;
  timing: TrialTiming;
  loop: boolean;
  frame_count: number;
  rect: number[];
}

export type NextResponse =
  | { status: "trial"; trial: TrialDescriptor }
  | { status: "done" }
  | { status: "excluded" };

export interface MediaBundle {
  frame_urls: string[];
  fps: number;
  loop: boolean;
}

export interface SubmitAck {
  ack: boolean;
  progress: { cursor: number; total: number };
  excluded: boolean;
}

export interface TrialResult {
  nodeId: string;
  text: string;
  /** total time from playback start, as submitted to the server */
  responseTimeMs: number;
  /** portion measured from prompt appearance */
  msFromPrompt: number;
  mediaFailed: boolean;
}
