/**
 * Single UI store fed by SSE events and tick-record backfill.
 *
 * Everything the page renders lives here, so live events and
 * reconnect backfill converge on one state. Deduplication key is the
 * tick number throughout: one timeline row, one chart point, and at
 * most one outgoing chat bubble per tick, no matter how often the
 * same tick arrives.
 */

import { PHASES } from "./types.js";
import type {
  ApiEvent,
  CompressionInfo,
  ErrorInfo,
  StateSnapshot,
  TickRecord,
} from "./types.js";

export type InStatus = "staged" | "consumed";

export interface ChatEntry {
  direction: "in" | "out";
  text: string;
  /** Consuming tick for "in", dispatching tick for "out"; null while staged. */
  tick: number | null;
  status: InStatus | "final";
  /** Tick whose perception phase drained this entry; cleared if that attempt aborts. */
  candidateTick: number | null;
  /** Highest committed tick when staged; lets backfill settle entries we never saw drain. */
  stagedAfterTick: number;
}

export interface TimelineRow {
  tick: number;
  phases: string[];
  committed: boolean;
  record: TickRecord | null;
  error: ErrorInfo | null;
  compression: CompressionInfo | null;
}

export interface SeriesPoint {
  tick: number;
  entropy: number;
  temperature: number;
}

export interface WorkspacePanel {
  stm_rendered: string;
  pending: boolean;
  ltm_size: number;
  cluster_count: number;
}

export type ConnectionState = "connecting" | "live" | "reconnecting" | "stopped";

export class ConsoleModel {
  chat: ChatEntry[] = [];
  timeline: TimelineRow[] = [];
  series: SeriesPoint[] = [];
  workspace: WorkspacePanel | null = null;
  banner: string | null = null;
  connection: ConnectionState = "connecting";
  /** pending_after of the newest committed tick; drives the pending badge. */
  pendingAfterLast = false;
  lastSeq = -1;

  /** Find or create the timeline row for a tick, keeping rows tick-ordered. */
  private row(tick: number): TimelineRow {
    let lo = 0;
    let hi = this.timeline.length;
    while (lo < hi) {
      const mid = (lo + hi) >> 1;
      if (this.timeline[mid].tick < tick) lo = mid + 1;
      else hi = mid;
    }
    const found = this.timeline[lo];
    if (found && found.tick === tick) return found;
    const fresh: TimelineRow = {
      tick,
      phases: [],
      committed: false,
      record: null,
      error: null,
      compression: null,
    };
    this.timeline.splice(lo, 0, fresh);
    return fresh;
  }

  /** Optimistically append an outgoing-to-agent message, marked staged. */
  stageLocal(text: string): ChatEntry {
    const entry: ChatEntry = {
      direction: "in",
      text,
      tick: null,
      status: "staged",
      candidateTick: null,
      stagedAfterTick: this.highestCommittedTick(),
    };
    this.chat.push(entry);
    return entry;
  }

  removeEntry(entry: ChatEntry): void {
    const idx = this.chat.indexOf(entry);
    if (idx >= 0) this.chat.splice(idx, 1);
  }

  setBanner(message: string | null): void {
    this.banner = message;
  }

  applyEvent(event: ApiEvent): void {
    if (event.seq <= this.lastSeq) return; // replayed or stale
    this.lastSeq = event.seq;
    const payload = event.payload;
    switch (event.kind) {
      case "tick_started": {
        const row = this.row(event.tick);
        if (!row.committed) {
          // a retry of an aborted tick starts clean
          row.phases = [];
          row.error = null;
        }
        break;
      }
      case "phase_completed": {
        const row = this.row(event.tick);
        const phase = String(payload.phase);
        if (!row.committed && !row.phases.includes(phase)) row.phases.push(phase);
        if (phase === PHASES[0]) {
          for (const entry of this.chat) {
            if (entry.direction === "in" && entry.status === "staged" && entry.candidateTick === null) {
              entry.candidateTick = event.tick;
            }
          }
        }
        break;
      }
      case "tick_committed": {
        this.applyRecord(payload.record as TickRecord, false);
        break;
      }
      case "output_dispatched": {
        this.addOutput(event.tick, String(payload.text));
        break;
      }
      case "compression": {
        this.row(event.tick).compression = payload as unknown as CompressionInfo;
        break;
      }
      case "error": {
        const row = this.row(event.tick);
        row.error = payload as unknown as ErrorInfo;
        for (const entry of this.chat) {
          // the engine restaged whatever this attempt drained
          if (entry.direction === "in" && entry.candidateTick === event.tick && entry.status === "staged") {
            entry.candidateTick = null;
          }
        }
        break;
      }
      default:
        break; // unknown kinds are ignored, not fatal
    }
  }

  /**
   * Fold one committed record in. Live commits arrive via applyEvent;
   * backfill records come straight from GET /api/ticks and may cover
   * ticks whose phase events were never seen.
   */
  applyRecord(record: TickRecord, backfill: boolean): void {
    const row = this.row(record.tick);
    row.committed = true;
    row.record = record;
    row.error = null;
    if (row.phases.length < PHASES.length) row.phases = [...PHASES];
    if (!this.series.some((p) => p.tick === record.tick)) {
      const point: SeriesPoint = {
        tick: record.tick,
        entropy: record.entropy,
        temperature: record.temperature,
      };
      let lo = 0;
      let hi = this.series.length;
      while (lo < hi) {
        const mid = (lo + hi) >> 1;
        if (this.series[mid].tick < record.tick) lo = mid + 1;
        else hi = mid;
      }
      this.series.splice(lo, 0, point);
    }
    if (record.dispatched_output !== null && record.dispatched_output !== undefined) {
      this.addOutput(record.tick, record.dispatched_output);
    }
    for (const entry of this.chat) {
      if (entry.direction !== "in" || entry.status !== "staged") continue;
      if (entry.candidateTick === record.tick) {
        entry.status = "consumed";
        entry.tick = record.tick;
        entry.candidateTick = null;
      } else if (backfill && entry.candidateTick === null && record.tick > entry.stagedAfterTick) {
        // drained while disconnected; this is the earliest tick that can have taken it
        entry.status = "consumed";
        entry.tick = record.tick;
      }
    }
    if (record.tick === this.highestCommittedTick()) {
      this.pendingAfterLast = record.pending_after;
    }
  }

  applyBackfill(records: TickRecord[]): void {
    for (const record of records) this.applyRecord(record, true);
  }

  private addOutput(tick: number, text: string): void {
    if (this.chat.some((e) => e.direction === "out" && e.tick === tick)) return;
    this.chat.push({
      direction: "out",
      text,
      tick,
      status: "final",
      candidateTick: null,
      stagedAfterTick: -1,
    });
  }

  noteState(snapshot: StateSnapshot): void {
    this.workspace = {
      stm_rendered: snapshot.stm_rendered,
      pending: snapshot.input_pending,
      ltm_size: snapshot.ltm_size,
      cluster_count: snapshot.cluster_count,
    };
  }

  committedCount(): number {
    return this.timeline.reduce((n, row) => n + (row.committed ? 1 : 0), 0);
  }

  highestCommittedTick(): number {
    for (let i = this.timeline.length - 1; i >= 0; i--) {
      if (this.timeline[i].committed) return this.timeline[i].tick;
    }
    return -1;
  }
}

/**
 * Stage text optimistically, then POST it. On failure the optimistic
 * entry is withdrawn and a banner is raised so the compose box can
 * keep the text. Resolves true when the service accepted the message.
 */
export async function sendMessage(
  model: ConsoleModel,
  poster: { stageInput(text: string): Promise<number> },
  text: string,
): Promise<boolean> {
  const trimmed = text.trim();
  if (!trimmed) return false;
  const entry = model.stageLocal(trimmed);
  try {
    await poster.stageInput(trimmed);
    model.setBanner(null);
    return true;
  } catch (err) {
    model.removeEntry(entry);
    model.setBanner(`cannot reach the service: ${err instanceof Error ? err.message : err}`);
    return false;
  }
}
