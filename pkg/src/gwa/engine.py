"""The cognitive cycle engine.

One engine owns all mutable state and advances it through discrete
four-phase ticks: perceive/retrieve, think, arbitrate, update. Phases
run strictly in order; every backend call of a phase completes before
the next phase begins. State objects are immutable and are swapped in
exactly once, at commit, so a tick that fails anywhere leaves the
workspace untouched and merely re-stages the messages it had drained.

Every committed tick appends one JSON line to the run log, flushed
before the commit returns. Error lines record aborted attempts. The
log, minus per-phase durations, is byte-reproducible for a scripted
backend, which is what the golden-trace tests pin.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable

import numpy as np

from .backend import Backend, ChatRequest
from .config import AppConfig
from .drive import (
    ThoughtVector,
    generation_temperature,
    update_clusters,
    window_entropy,
)
from .errors import BackendUnavailable, CompressionError, NodeFailure
from .memory import MemoryStore, bifurcate, token_count
from .nodes import (
    ARBITRATION_REMINDER,
    CANDIDATES_REMINDER,
    CRITIQUE_REMINDER,
    RECALL_REMINDER,
    TRANSITION_RESPONSE,
    PromptPair,
    TemplateSet,
    parse_arbitration,
    parse_candidates,
    parse_critiques,
    parse_extraction,
    parse_recall_targets,
    render_attention,
    render_critic,
    render_extract,
    render_generator,
    render_meta,
    render_response,
    render_summarize,
    retry_on_malformed,
)
from .workspace import (
    CoreSelf,
    GenesisState,
    GlobalState,
    InputBuffer,
    InputMessage,
    ShortTermMemory,
    apply_response,
    apply_think_more,
    assemble_global_state,
    render_stm,
)

PHASE_PERCEIVE = "perceive_retrieve"
PHASE_THINK = "think"
PHASE_ARBITRATE = "arbitrate"
PHASE_UPDATE = "update"
PHASES = (PHASE_PERCEIVE, PHASE_THINK, PHASE_ARBITRATE, PHASE_UPDATE)

EVENT_TICK_STARTED = "tick_started"
EVENT_PHASE_COMPLETED = "phase_completed"
EVENT_TICK_COMMITTED = "tick_committed"
EVENT_OUTPUT_DISPATCHED = "output_dispatched"
EVENT_COMPRESSION = "compression"
EVENT_ERROR = "error"

# Emission order within one tick; also the contract event consumers rely on.
EVENT_KIND_ORDER = (
    EVENT_TICK_STARTED,
    EVENT_PHASE_COMPLETED,
    EVENT_TICK_COMMITTED,
    EVENT_OUTPUT_DISPATCHED,
    EVENT_COMPRESSION,
    EVENT_ERROR,
)


@dataclass(frozen=True)
class ApiEvent:
    seq: int
    kind: str
    tick: int
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "tick": self.tick, "payload": self.payload}


@dataclass(frozen=True)
class EngineSnapshot:
    """Consistent view of the last committed tick, never mid-tick values."""

    tick: int
    stm_rendered: str
    input_pending: bool
    entropy: float
    temperature: float
    ltm_size: int
    cluster_count: int

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "stm_rendered": self.stm_rendered,
            "input_pending": self.input_pending,
            "entropy": self.entropy,
            "temperature": self.temperature,
            "ltm_size": self.ltm_size,
            "cluster_count": self.cluster_count,
        }


def canonical_line(record: dict) -> str:
    """Serialize a run-log record for comparison, wall-clock fields removed."""
    trimmed = {k: v for k, v in record.items() if k != "durations"}
    return json.dumps(trimmed, sort_keys=True, ensure_ascii=False)


def load_run_log(path: Path | str) -> list[dict]:
    records = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{line_no}: corrupted run log line: {exc}") from exc
    return records


def format_tick(record: dict) -> str:
    """Human-readable rendering of one run-log record for the terminal."""
    if record.get("type") == "error":
        return (
            f"tick {record['tick']}  ABORTED in {record['phase']}\n"
            f"  {record['error']}: {record['message']}"
        )
    lines = [
        f"tick {record['tick']}  transition={record['arbitration']['transition']}"
        f"  H={record['entropy']:.4f}  T={record['temperature']:.4f}",
        f"  recall: {record['rag_queries']}  hits: {record['rag_hits']}",
    ]
    for i, candidate in enumerate(record["candidates"], start=1):
        marker = "*" if i == record["arbitration"]["winner_index"] else " "
        score = next(
            (c["score"] for c in record["critiques"] if c["index"] == i), None
        )
        lines.append(f"  {marker} {i}. [{score:+d}] {candidate}" if score is not None else f"  {marker} {i}. {candidate}")
    lines.append(f"  rationale: {record['arbitration']['rationale']}")
    if record["dispatched_output"] is not None:
        lines.append(f"  >> {record['dispatched_output']}")
    if record["compressed"]:
        lines.append("  (working memory compressed)")
    return "\n".join(lines)


class Engine:
    """Single-writer four-phase tick loop over an immutable workspace."""

    def __init__(
        self,
        config: AppConfig,
        backend: Backend,
        templates: TemplateSet | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self._cfg = config
        self._backend = backend
        self._templates = templates or TemplateSet.load(config.engine.template_dir)
        self._core_self = CoreSelf(config.core_self_text or self._templates.text("core_self"))
        genesis = GenesisState(config.genesis_text or self._templates.text("genesis"))
        self._store = MemoryStore(backend.embedding_dimension, config.memory.ltm_path)
        self._sleep = sleep

        self._lock = threading.Condition(threading.RLock())
        self._state = assemble_global_state(
            ShortTermMemory.seeded(genesis), InputBuffer(), (), self._core_self, 0
        )
        self._clusters = config.clusters
        self._history: deque[ThoughtVector] = deque(maxlen=config.drive.window)
        self._staging: deque[InputMessage] = deque()
        self._streak = 0
        self._records: list[dict] = []
        self._listeners: list[Callable[[ApiEvent], None]] = []
        self._seq = 0
        self._tick_flight = threading.Lock()

        self._log_fh: IO[str] | None = None
        if config.engine.run_log_path:
            log_path = Path(config.engine.run_log_path)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            self._log_fh = log_path.open("a", encoding="utf-8")

    # -- external surface ---------------------------------------------------

    @property
    def store(self) -> MemoryStore:
        return self._store

    @property
    def core_self(self) -> CoreSelf:
        return self._core_self

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def subscribe(self, listener: Callable[[ApiEvent], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def stage_input(self, source: str, text: str) -> int:
        """Queue an external message; returns its 1-based queue position."""
        if not text:
            raise ValueError("staged text must be nonempty")
        message = InputMessage(source=source, text=text, received_at=time.time())
        with self._lock:
            self._staging.append(message)
            position = len(self._staging)
            self._lock.notify_all()
        return position

    def snapshot(self) -> EngineSnapshot:
        with self._lock:
            state = self._state
            history = tuple(self._history)
            clusters = self._clusters
            ltm_size = len(self._store)
        entropy = window_entropy(history, clusters, self._cfg.drive)
        return EngineSnapshot(
            tick=state.tick,
            stm_rendered=render_stm(state.stm),
            input_pending=state.input.pending_flag,
            entropy=entropy,
            temperature=generation_temperature(entropy, self._cfg.drive),
            ltm_size=ltm_size,
            cluster_count=len(clusters),
        )

    def records(self) -> list[dict]:
        """All run-log records so far, commits and aborts, in log order."""
        with self._lock:
            return list(self._records)

    def committed_ticks(self, start: int = 0, limit: int | None = None) -> list[dict]:
        with self._lock:
            ticks = [r for r in self._records if r["type"] == "tick" and r["tick"] >= start]
        return ticks if limit is None else ticks[:limit]

    # -- internals ----------------------------------------------------------

    def _emit(self, kind: str, tick: int, payload: dict) -> None:
        with self._lock:
            event = ApiEvent(seq=self._seq, kind=kind, tick=tick, payload=payload)
            self._seq += 1
            listeners = list(self._listeners)
        for listener in listeners:
            listener(event)

    def _chat(self, request: ChatRequest) -> str:
        """Backend call with exponential backoff on transport failures."""
        attempts = max(1, self._cfg.engine.transport_retries)
        for attempt in range(attempts):
            try:
                return self._backend.chat(request)
            except BackendUnavailable:
                if attempt == attempts - 1:
                    raise
                self._sleep(self._cfg.engine.backoff_base_s * (2**attempt))
        raise AssertionError("unreachable")

    def _call_parsed(self, pair: PromptPair, parser, reminder: str, tick: int):
        """Invoke a node, re-asking with a format reminder until it parses."""

        def invoke(reminder_line: str | None) -> str:
            user = pair.user if reminder_line is None else f"{pair.user}\n\n{reminder_line}"
            return self._chat(
                ChatRequest(
                    system=pair.system,
                    user=user,
                    temperature=pair.temperature,
                    role_tag=pair.role,
                    max_output_tokens=self._cfg.engine.max_output_tokens,
                    tick=tick,
                )
            )

        return retry_on_malformed(
            invoke, parser, self._cfg.engine.max_retries, reminder, role=pair.role
        )

    def _drain_staging(self) -> tuple[InputMessage, ...]:
        with self._lock:
            drained = tuple(self._staging)
            self._staging.clear()
        return drained

    def _restage_front(self, messages: tuple[InputMessage, ...]) -> None:
        with self._lock:
            self._staging.extendleft(reversed(messages))
            if messages:
                self._lock.notify_all()

    def _retrieve_rag(self, targets: list[str]) -> tuple[list[int], list[str]]:
        """Merged top-k retrieval across recall targets.

        Duplicates keep their best similarity; the merged list is
        relevance-ordered with the store's deterministic tie-breaks and
        capped at retrieval_k chunks total.
        """
        k = self._cfg.engine.retrieval_k
        if len(self._store) == 0:
            return [], []
        best: dict[int, tuple[float, int, int, str]] = {}
        for target in targets:
            for record, sim in self._store.retrieve(target, k, self._backend.embed):
                seen = best.get(record.id)
                if seen is None or sim > seen[0]:
                    best[record.id] = (sim, record.created_tick, record.id, record.text)
        merged = sorted(best.values(), key=lambda item: (-item[0], item[1], item[2]))[:k]
        return [item[2] for item in merged], [item[3] for item in merged]

    def _append_record(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._records.append(record)
            if self._log_fh is not None:
                self._log_fh.write(line + "\n")
                self._log_fh.flush()

    # -- the tick -----------------------------------------------------------

    def run_tick(self) -> dict:
        """Execute one four-phase tick; returns the run-log record.

        A failed tick (backend down after retries, unparseable node
        output after retries, compression failure) aborts atomically:
        the workspace is untouched, drained messages go back to the
        front of the staging queue, the tick counter stays put, and an
        error record is logged. The returned dict's "type" field says
        which outcome happened.
        """
        with self._tick_flight:
            return self._run_tick_locked()

    def _run_tick_locked(self) -> dict:
        cfg = self._cfg
        with self._lock:
            state = self._state
            clusters = self._clusters
            history = tuple(self._history)
        tick = state.tick
        drained = self._drain_staging()
        durations: dict[str, float] = {}
        phase = PHASE_PERCEIVE
        deferred: list[tuple[str, dict]] = []

        self._emit(EVENT_TICK_STARTED, tick, {"staged_messages": len(drained)})
        try:
            # P1: perceive and retrieve
            started = time.perf_counter()
            input_buffer = state.input.extended(drained)
            pre_state = assemble_global_state(
                state.stm, input_buffer, (), self._core_self, tick
            )
            targets = self._call_parsed(
                render_attention(pre_state, self._templates, cfg.engine.temperatures.attention),
                parse_recall_targets,
                RECALL_REMINDER,
                tick,
            )
            rag_ids, rag_texts = self._retrieve_rag(targets)
            state_t = assemble_global_state(
                state.stm, input_buffer, rag_texts, self._core_self, tick
            )
            durations[PHASE_PERCEIVE] = (time.perf_counter() - started) * 1000.0
            self._emit(
                EVENT_PHASE_COMPLETED,
                tick,
                {"phase": PHASE_PERCEIVE, "rag_queries": targets, "rag_hits": rag_ids},
            )

            # P2: think (diversity telemetry, candidates, critiques)
            phase = PHASE_THINK
            started = time.perf_counter()
            entropy = window_entropy(history, clusters, cfg.drive)
            temperature = generation_temperature(entropy, cfg.drive)
            candidates = self._call_parsed(
                render_generator(state_t, cfg.engine.candidate_count, temperature, self._templates),
                lambda raw: parse_candidates(raw, cfg.engine.candidate_count),
                CANDIDATES_REMINDER,
                tick,
            )
            critiques = self._call_parsed(
                render_critic(state_t, candidates, self._templates, cfg.engine.temperatures.critic),
                lambda raw: parse_critiques(raw, len(candidates)),
                CRITIQUE_REMINDER,
                tick,
            )
            durations[PHASE_THINK] = (time.perf_counter() - started) * 1000.0
            self._emit(
                EVENT_PHASE_COMPLETED,
                tick,
                {
                    "phase": PHASE_THINK,
                    "entropy": entropy,
                    "temperature": temperature,
                    "candidates": len(candidates),
                },
            )

            # P3: arbitrate
            phase = PHASE_ARBITRATE
            started = time.perf_counter()
            urgent = self._streak >= cfg.engine.max_think_more_streak
            arbitration = self._call_parsed(
                render_meta(
                    state_t,
                    candidates,
                    critiques,
                    self._templates,
                    cfg.engine.temperatures.meta,
                    urgent=urgent,
                ),
                lambda raw: parse_arbitration(raw, len(candidates)),
                ARBITRATION_REMINDER,
                tick,
            )
            winning_thought = candidates.candidates[arbitration.winner_index - 1]
            durations[PHASE_ARBITRATE] = (time.perf_counter() - started) * 1000.0
            self._emit(
                EVENT_PHASE_COMPLETED,
                tick,
                {
                    "phase": PHASE_ARBITRATE,
                    "winner_index": arbitration.winner_index,
                    "transition": arbitration.transition,
                },
            )

            # P4: update (compress, transition, cluster upkeep, commit)
            phase = PHASE_UPDATE
            started = time.perf_counter()
            stm_for_update = state_t.stm
            compressed = False
            compression_payload: dict | None = None
            if token_count(render_stm(stm_for_update)) > cfg.compression.theta:
                tokens_before = token_count(render_stm(stm_for_update))
                stm_for_update, archived_ids = bifurcate(
                    stm_for_update,
                    cfg.compression,
                    self._store,
                    self._summarize,
                    self._extract,
                    self._backend.embed,
                    tick,
                )
                compressed = True
                compression_payload = {
                    "archived_ids": archived_ids,
                    "tokens_before": tokens_before,
                    "tokens_after": token_count(render_stm(stm_for_update)),
                }
            working = assemble_global_state(
                stm_for_update, state_t.input, state_t.rag, self._core_self, tick
            )

            dispatched: str | None = None
            if arbitration.transition == TRANSITION_RESPONSE:
                pair = render_response(
                    working.input,
                    winning_thought,
                    self._templates,
                    cfg.engine.temperatures.response,
                )
                dispatched = self._chat(
                    ChatRequest(
                        system=pair.system,
                        user=pair.user,
                        temperature=pair.temperature,
                        role_tag=pair.role,
                        max_output_tokens=cfg.engine.max_output_tokens,
                        tick=tick,
                    )
                )
                new_stm, new_input = apply_response(working, winning_thought)
                new_streak = 0
            else:
                new_stm, new_input = apply_think_more(working, winning_thought)
                new_streak = self._streak + 1

            thought_vec = ThoughtVector(
                values=self._backend.embed(winning_thought), source_tick=tick
            )
            new_clusters = update_clusters(thought_vec, clusters)
            durations[PHASE_UPDATE] = (time.perf_counter() - started) * 1000.0
            self._emit(
                EVENT_PHASE_COMPLETED,
                tick,
                {"phase": PHASE_UPDATE, "stm_entries": len(new_stm.entries), "compressed": compressed},
            )
        except (NodeFailure, BackendUnavailable, CompressionError) as exc:
            self._restage_front(drained)
            error_record = {
                "type": "error",
                "tick": tick,
                "phase": phase,
                "error": type(exc).__name__,
                "message": str(exc),
                "durations": durations,
            }
            self._append_record(error_record)
            self._emit(
                EVENT_ERROR,
                tick,
                {"phase": phase, "error": type(exc).__name__, "message": str(exc)},
            )
            return error_record

        record = {
            "type": "tick",
            "tick": tick,
            "entropy": entropy,
            "temperature": temperature,
            "rag_queries": list(targets),
            "rag_hits": list(rag_ids),
            "candidates": list(candidates.candidates),
            "critiques": [
                {"index": item.index, "score": item.score, "critique": item.critique}
                for item in critiques.items
            ],
            "critique_flags": list(critiques.flags),
            "arbitration": {
                "winner_index": arbitration.winner_index,
                "transition": arbitration.transition,
                "rationale": arbitration.rationale,
            },
            "winning_thought": winning_thought,
            "dispatched_output": dispatched,
            "compressed": compressed,
            "stm_entries": len(new_stm.entries),
            "pending_after": new_input.pending_flag,
            "think_more_streak": new_streak,
            "durations": durations,
        }

        committed_state = assemble_global_state(
            new_stm, new_input, (), self._core_self, tick + 1
        )
        with self._lock:
            self._state = committed_state
            self._clusters = new_clusters
            self._history.append(thought_vec)
            self._streak = new_streak
        self._append_record(record)

        self._emit(EVENT_TICK_COMMITTED, tick, {"record": {k: v for k, v in record.items() if k != "durations"}})
        if dispatched is not None:
            deferred.append((EVENT_OUTPUT_DISPATCHED, {"text": dispatched}))
        if compression_payload is not None:
            deferred.append((EVENT_COMPRESSION, compression_payload))
        for kind, payload in deferred:
            self._emit(kind, tick, payload)
        return record

    def _summarize(self, text: str) -> str:
        pair = render_summarize(text, self._templates)
        return self._chat(
            ChatRequest(
                system=pair.system,
                user=pair.user,
                temperature=pair.temperature,
                role_tag=pair.role,
                max_output_tokens=self._cfg.engine.max_output_tokens,
                tick=self._state.tick,
            )
        )

    def _extract(self, text: str) -> list[tuple[str, str]]:
        pair = render_extract(text, self._templates)
        raw = self._chat(
            ChatRequest(
                system=pair.system,
                user=pair.user,
                temperature=pair.temperature,
                role_tag=pair.role,
                max_output_tokens=self._cfg.engine.max_output_tokens,
                tick=self._state.tick,
            )
        )
        return parse_extraction(raw)

    # -- the loop -----------------------------------------------------------

    def _has_work_locked(self) -> bool:
        return bool(self._staging) or not self._state.input.is_empty()

    def run_loop(
        self,
        stop: threading.Event,
        max_ticks: int | None = None,
        max_consecutive_aborts: int = 8,
    ) -> int:
        """Tick until stopped; returns the number of committed ticks.

        Under block_on_trigger the loop sleeps while there is nothing to
        do: no staged messages and no deliberation in flight. free_run
        ticks continuously (self-initiated thought). A run of repeated
        aborts stops the loop rather than spinning against a dead
        backend.
        """
        committed = 0
        aborts = 0
        while not stop.is_set():
            if max_ticks is not None and committed >= max_ticks:
                break
            if self._cfg.engine.idle_policy == "block_on_trigger":
                with self._lock:
                    if not self._has_work_locked():
                        self._lock.wait(timeout=0.1)
                        if not self._has_work_locked():
                            continue
            record = self.run_tick()
            if record["type"] == "error":
                aborts += 1
                if aborts >= max_consecutive_aborts:
                    break
                self._sleep(min(1.0, 0.05 * aborts))
            else:
                aborts = 0
                committed += 1
        return committed
