"""Workspace state: the per-tick global state and its transition rules.

The workspace is the union of four components: the immutable core-self
directive, short-term working memory (STM), retrieved long-term chunks,
and the external input buffer. All containers here are frozen; state
transitions return new objects, so concurrent readers can hold a
snapshot without locking.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

PENDING_MARKER = "[PENDING: External environment awaits response]"
RESOLVED_MARKER = "[RESOLVED]"

KIND_GENESIS = "genesis"
KIND_WINNING_THOUGHT = "winning_thought"
KIND_RESOLVED_EXCHANGE = "resolved_exchange"
KIND_SUMMARY = "summary"

ENTRY_KINDS = (KIND_GENESIS, KIND_WINNING_THOUGHT, KIND_RESOLVED_EXCHANGE, KIND_SUMMARY)


@dataclass(frozen=True)
class CoreSelf:
    """The invariant persona directive. Never mutated after construction."""

    text: str

    def fingerprint(self) -> str:
        """SHA-256 of the directive text, used to assert run-long stability."""
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenesisState:
    """The seed text that forms STM at tick 0."""

    text: str


@dataclass(frozen=True)
class StmEntry:
    kind: str
    text: str
    tick: int

    def __post_init__(self) -> None:
        if self.kind not in ENTRY_KINDS:
            raise ValueError(f"unknown STM entry kind: {self.kind!r}")
        if self.tick < 0:
            raise ValueError("entry tick must be nonnegative")


@dataclass(frozen=True)
class ShortTermMemory:
    """Ordered working-memory entries, strictly tick-ordered."""

    entries: tuple[StmEntry, ...] = ()

    def __post_init__(self) -> None:
        ticks = [e.tick for e in self.entries]
        if ticks != sorted(ticks):
            raise ValueError("STM entries must be in nondecreasing tick order")
        genesis_positions = [i for i, e in enumerate(self.entries) if e.kind == KIND_GENESIS]
        if len(genesis_positions) > 1 or (genesis_positions and genesis_positions[0] != 0):
            raise ValueError("at most one genesis entry, and only at position 0")

    @classmethod
    def seeded(cls, genesis: GenesisState) -> ShortTermMemory:
        return cls(entries=(StmEntry(KIND_GENESIS, genesis.text, 0),))

    def appended(self, entry: StmEntry) -> ShortTermMemory:
        return ShortTermMemory(entries=self.entries + (entry,))


@dataclass(frozen=True)
class InputMessage:
    source: str
    text: str
    received_at: float  # audit only; never rendered into prompts


@dataclass(frozen=True)
class InputBuffer:
    messages: tuple[InputMessage, ...] = ()
    pending_flag: bool = False

    def extended(self, incoming: tuple[InputMessage, ...]) -> InputBuffer:
        return replace(self, messages=self.messages + incoming)

    def is_empty(self) -> bool:
        return not self.messages and not self.pending_flag


@dataclass(frozen=True)
class GlobalState:
    """The assembled workspace for one tick: core self, STM, RAG, input."""

    stm: ShortTermMemory
    input: InputBuffer
    rag: tuple[str, ...]
    core_self: CoreSelf
    tick: int


def assemble_global_state(
    stm: ShortTermMemory,
    input_buffer: InputBuffer,
    rag: list[str] | tuple[str, ...],
    core_self: CoreSelf,
    tick: int,
) -> GlobalState:
    """Bundle the four state components for one tick.

    Empty components are legal; nothing is dropped or reordered.
    """
    if tick < 0:
        raise ValueError("tick must be nonnegative")
    return GlobalState(
        stm=stm,
        input=input_buffer,
        rag=tuple(rag),
        core_self=core_self,
        tick=tick,
    )


def render_stm(stm: ShortTermMemory) -> str:
    """Chronological STM body: entry texts separated by blank lines."""
    return "\n\n".join(e.text for e in stm.entries)


def render_input(buffer: InputBuffer) -> str:
    """Input body: one `source: text` line per message, pending marker last.

    Empty when there are no messages and no pending flag. Timestamps are
    deliberately excluded so renderings stay deterministic.
    """
    lines = [f"{m.source}: {m.text}" for m in buffer.messages]
    if buffer.pending_flag:
        lines.append(PENDING_MARKER)
    return "\n".join(lines)


def render_state(state: GlobalState) -> str:
    """Deterministic serialization of the workspace.

    Section order is fixed: core self, then STM (chronological), then
    retrieved memory (relevance-descending), then external input. Empty
    sections are omitted entirely, except core self which is always
    present.
    """
    sections = [("CORE SELF", state.core_self.text)]
    stm_body = render_stm(state.stm)
    if stm_body:
        sections.append(("SHORT-TERM MEMORY", stm_body))
    if state.rag:
        sections.append(("RETRIEVED MEMORY", "\n\n".join(state.rag)))
    input_body = render_input(state.input)
    if input_body:
        sections.append(("EXTERNAL INPUT", input_body))
    return "\n\n".join(f"=== {title} ===\n{body}" for title, body in sections)


def apply_think_more(
    state: GlobalState, winning_thought: str
) -> tuple[ShortTermMemory, InputBuffer]:
    """Deep-deliberation transition.

    The winning thought joins STM; the input buffer keeps its messages
    and gains the pending flag, so the rendered input section ends with
    the literal pending marker on the next tick. The flag is set even
    when the buffer is empty (pure self-deliberation).
    """
    if not winning_thought:
        raise ValueError("winning thought must be nonempty")
    new_stm = state.stm.appended(StmEntry(KIND_WINNING_THOUGHT, winning_thought, state.tick))
    new_input = replace(state.input, pending_flag=True)
    return new_stm, new_input


def apply_response(
    state: GlobalState, winning_thought: str
) -> tuple[ShortTermMemory, InputBuffer]:
    """Terminal-resolution transition.

    The thought, the input messages, and the resolved marker are
    committed to STM as one composite entry; the input buffer is
    flushed.
    """
    if not winning_thought:
        raise ValueError("winning thought must be nonempty")
    parts = [winning_thought]
    parts.extend(f"{m.source}: {m.text}" for m in state.input.messages)
    parts.append(RESOLVED_MARKER)
    entry = StmEntry(KIND_RESOLVED_EXCHANGE, "\n".join(parts), state.tick)
    return state.stm.appended(entry), InputBuffer()
