/** Thin client for the /v1 experiment API.
 *
 * Every mutating call carries an idempotency key derived from the session
 * and node, and network failures are retried; if a retry finds the first
 * attempt already recorded server-side, that conflict is treated as
 * success, so a response is never double-counted or lost.
 */

import type { MediaBundle, NextResponse, SubmitAck } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export interface ApiClientOptions {
  retries?: number;
  retryDelayMs?: number;
  fetchFn?: FetchLike;
  sleep?: (ms: number) => Promise<void>;
}

export class ApiClient {
  private readonly fetchFn: FetchLike;
  private readonly retries: number;
  private readonly retryDelayMs: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    readonly baseUrl: string,
    options: ApiClientOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.retries = options.retries ?? 3;
    this.retryDelayMs = options.retryDelayMs ?? 250;
    this.sleep =
      options.sleep ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.retries; attempt++) {
      try {
        return await this.fetchFn(`${this.baseUrl}${path}`, init);
      } catch (err) {
        lastError = err;
        if (attempt < this.retries) await this.sleep(this.retryDelayMs);
      }
    }
    throw lastError;
  }

  private async json<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      const body = await resp.text();
      throw new ApiError(`${resp.status}: ${body}`, resp.status);
    }
    return (await resp.json()) as T;
  }

  async createParticipant(
    studyId: string,
    participantId?: string,
  ): Promise<{ session_id: string; participant_id: string; trial_count: number }> {
    const resp = await this.request(`/v1/studies/${studyId}/participants`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ participant_id: participantId ?? null }),
    });
    return this.json(resp);
  }

  async next(sessionId: string): Promise<NextResponse> {
    const resp = await this.request(`/v1/sessions/${sessionId}/next`);
    return this.json(resp);
  }

  async mediaBundle(path: string): Promise<MediaBundle> {
    const resp = await this.request(path);
    return this.json(resp);
  }

  async submit(
    sessionId: string,
    nodeId: string,
    rawText: string,
    responseTimeMs: number,
  ): Promise<SubmitAck> {
    const resp = await this.request(`/v1/sessions/${sessionId}/responses`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "Idempotency-Key": `${sessionId}:${nodeId}`,
      },
      body: JSON.stringify({
        node_id: nodeId,
        raw_text: rawText,
        response_time_ms: responseTimeMs,
      }),
    });
    if (resp.status === 409) {
      const body = await resp.text();
      if (body.includes("already recorded")) {
        // the lost first attempt landed; carry on
        return { ack: true, progress: { cursor: -1, total: -1 }, excluded: false };
      }
      throw new ApiError(`409: ${body}`, 409);
    }
    return this.json(resp);
  }
}
