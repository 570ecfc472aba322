import type { HealthStatus, StateSnapshot, TickRecord } from "./types.js";

const PAGE_LIMIT = 1000; // server-side maximum per request

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  /** Stage one message; resolves to its position in the staging queue. */
  async stageInput(text: string, source = "user"): Promise<number> {
    const resp = await fetch(this.url("/api/input"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ source, text }),
    });
    if (!resp.ok) throw new Error(`input rejected: HTTP ${resp.status}`);
    const body = (await resp.json()) as { staged_position: number };
    return body.staged_position;
  }

  async fetchState(): Promise<StateSnapshot> {
    const resp = await fetch(this.url("/api/state"));
    if (!resp.ok) throw new Error(`state fetch failed: HTTP ${resp.status}`);
    return (await resp.json()) as StateSnapshot;
  }

  /** All committed tick records from `from` onward, paging past the server limit. */
  async fetchTicks(from = 0): Promise<TickRecord[]> {
    const all: TickRecord[] = [];
    let cursor = from;
    for (;;) {
      const resp = await fetch(this.url(`/api/ticks?from=${cursor}&limit=${PAGE_LIMIT}`));
      if (!resp.ok) throw new Error(`ticks fetch failed: HTTP ${resp.status}`);
      const page = (await resp.json()) as TickRecord[];
      all.push(...page);
      if (page.length < PAGE_LIMIT) return all;
      cursor = page[page.length - 1].tick + 1;
    }
  }

  async fetchHealth(): Promise<HealthStatus> {
    const resp = await fetch(this.url("/api/health"));
    if (!resp.ok) throw new Error(`health fetch failed: HTTP ${resp.status}`);
    return (await resp.json()) as HealthStatus;
  }
}
