// Wire types mirroring the service JSON. Field names match the API exactly.

export const PHASES = ["perceive_retrieve", "think", "arbitrate", "update"] as const;

export interface Arbitration {
  winner_index: number;
  transition: string;
  rationale: string;
}

export interface TickRecord {
  type: "tick";
  tick: number;
  entropy: number;
  temperature: number;
  rag_queries: string[];
  rag_hits: number[];
  candidates: string[];
  critiques: string[];
  critique_flags: boolean[];
  arbitration: Arbitration;
  winning_thought: string;
  dispatched_output: string | null;
  compressed: boolean;
  stm_entries: number;
  pending_after: boolean;
  think_more_streak: number;
}

export interface ApiEvent {
  seq: number;
  kind: string;
  tick: number;
  payload: Record<string, unknown>;
}

export interface StateSnapshot {
  tick: number;
  stm_rendered: string;
  input_pending: boolean;
  entropy: number;
  temperature: number;
  ltm_size: number;
  cluster_count: number;
}

export interface HealthStatus {
  status: string;
  tick: number;
  ltm_size: number;
}

export interface ErrorInfo {
  phase: string;
  error: string;
  message: string;
}

export interface CompressionInfo {
  archived_ids: number[];
  tokens_before: number;
  tokens_after: number;
}
