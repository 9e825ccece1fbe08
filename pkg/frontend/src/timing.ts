/** Clock and delay abstraction so trial timing is testable without real time.
 *
 * The runner only ever asks "what time is it" and "wake me in N ms"; the
 * browser build uses performance.now and setTimeout, tests use a virtual
 * scheduler that advances instantly but keeps exact arithmetic.
 */

export interface Scheduler {
  now(): number;
  delay(ms: number): Promise<void>;
}

export class RealScheduler implements Scheduler {
  now(): number {
    return performance.now();
  }

  delay(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
  }
}

interface PendingWake {
  at: number;
  resolve: () => void;
}

/** Deterministic virtual time for tests. */
export class VirtualScheduler implements Scheduler {
  private t = 0;
  private pending: PendingWake[] = [];

  now(): number {
    return this.t;
  }

  delay(ms: number): Promise<void> {
    return new Promise((resolve) => {
      this.pending.push({ at: this.t + ms, resolve });
    });
  }

  /** Advance time step by step until nothing is scheduled. */
  async drain(): Promise<void> {
    // a bounded number of microtask yields lets await-chains queue their
    // next delay before we decide the queue is empty
    for (let guard = 0; guard < 10_000; guard++) {
      if (this.pending.length === 0) {
        for (let i = 0; i < 20; i++) await Promise.resolve();
        if (this.pending.length === 0) return;
      }
      this.pending.sort((a, b) => a.at - b.at);
      const next = this.pending.shift()!;
      this.t = Math.max(this.t, next.at);
      next.resolve();
      for (let i = 0; i < 20; i++) await Promise.resolve();
    }
    throw new Error("virtual scheduler did not settle");
  }
}
