/**
 * One live subscription with automatic reconnect.
 *
 * Each (re)connect opens the event stream first, then backfills every
 * committed tick the model is missing from GET /api/ticks, then drains
 * the stream. Opening before backfilling means a tick committing in
 * between is seen twice, never zero times; the model deduplicates by
 * tick number.
 */

import type { ApiClient } from "./api.js";
import type { ConsoleModel } from "./model.js";
import { streamEvents } from "./sse.js";
import type { ApiEvent } from "./types.js";

export interface ConnectionOptions {
  reconnectDelayMs?: number;
  /** Called after every model mutation so the view can re-render. */
  onChange?: () => void;
}

export class LiveConnection {
  /** Times the stream reached live; lets callers observe a completed reconnect. */
  connectCount = 0;

  private controller: AbortController | null = null;
  private stopped = false;
  private readonly delayMs: number;
  private readonly onChange: () => void;

  constructor(
    private readonly api: ApiClient,
    private readonly model: ConsoleModel,
    options: ConnectionOptions = {},
  ) {
    this.delayMs = options.reconnectDelayMs ?? 1000;
    this.onChange = options.onChange ?? (() => {});
  }

  /** Run until stop(); resolves only then. */
  async start(): Promise<void> {
    let first = true;
    while (!this.stopped) {
      this.model.connection = first ? "connecting" : "reconnecting";
      this.onChange();
      this.controller = new AbortController();
      try {
        const events = streamEvents(
          `${this.api.baseUrl.replace(/\/$/, "")}/api/events`,
          this.controller.signal,
        );
        await this.backfill();
        this.model.connection = "live";
        this.connectCount += 1;
        this.onChange();
        for await (const raw of events) {
          if (raw.event === "overflow") break; // fell behind; reconnect and backfill
          this.model.applyEvent(JSON.parse(raw.data) as ApiEvent);
          this.onChange();
        }
      } catch {
        // connect refused, stream error, or deliberate abort
      }
      this.controller = null;
      first = false;
      if (!this.stopped) await sleep(this.delayMs);
    }
    this.model.connection = "stopped";
    this.onChange();
  }

  private async backfill(): Promise<void> {
    const from = this.model.highestCommittedTick() + 1;
    const records = await this.api.fetchTicks(from);
    this.model.applyBackfill(records);
    this.model.noteState(await this.api.fetchState());
    this.onChange();
  }

  /** Drop the current stream; start() reconnects and backfills. */
  forceReconnect(): void {
    this.controller?.abort();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
