// Live run board state. Two guards keep the display honest under polling:
// out-of-order or canceled polls are dropped whole (no stale writes), and a
// fresh snapshot is only applied if its cost did not regress -- the API
// contract says cost never decreases, so a regressing snapshot is stale.

import type { RunStatus } from './types.js';

export interface PollTicket {
  runId: string;
  sequence: number;
}

export class RunBoard {
  private rows = new Map<string, RunStatus>();
  private sequences = new Map<string, number>();
  private applied = new Map<string, number>();

  /** Start a poll; the ticket must accompany the snapshot on apply. */
  beginPoll(runId: string): PollTicket {
    const next = (this.sequences.get(runId) ?? 0) + 1;
    this.sequences.set(runId, next);
    return { runId, sequence: next };
  }

  /** Invalidate every in-flight poll for a run (e.g. the view closed). */
  cancelPolls(runId: string): void {
    const next = (this.sequences.get(runId) ?? 0) + 1;
    this.sequences.set(runId, next);
    this.applied.set(runId, next);
  }

  /**
   * Apply a snapshot if its ticket is still current. Returns true when the
   * board changed. Stale tickets and cost regressions are ignored.
   */
  apply(ticket: PollTicket, snapshot: RunStatus): boolean {
    const appliedSeq = this.applied.get(ticket.runId) ?? 0;
    if (ticket.sequence <= appliedSeq) return false; // canceled or out of order
    const previous = this.rows.get(ticket.runId);
    if (previous && snapshot.cost_microdollars < previous.cost_microdollars) {
      return false; // stale data: the server's cost series is monotone
    }
    this.rows.set(ticket.runId, snapshot);
    this.applied.set(ticket.runId, ticket.sequence);
    return true;
  }

  row(runId: string): RunStatus | undefined {
    return this.rows.get(runId);
  }

  allRows(): RunStatus[] {
    return [...this.rows.values()];
  }

  costSeriesIsMonotone(history: number[]): boolean {
    return history.every((value, index) => index === 0 || value >= history[index - 1]);
  }
}
