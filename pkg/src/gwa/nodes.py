"""Node prompt rendering and structured-output parsing.

Each of the five roles (attention, generator, critic, meta, response)
gets a system/user template pair loaded from text resources with named
placeholders; a config directory can override any file. Renders are pure
functions of their inputs. Parsers turn raw completions into typed
structures and raise MalformedOutput when nothing usable is found;
retry_on_malformed re-asks with a format reminder a bounded number of
times before giving up with the full transcripts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, TypeVar

from .errors import MalformedOutput, NodeFailure
from .workspace import GlobalState, InputBuffer, render_input, render_state, render_stm

ROLE_ATTENTION = "attention"
ROLE_GENERATOR = "generator"
ROLE_CRITIC = "critic"
ROLE_META = "meta"
ROLE_RESPONSE = "response"
ROLE_SUMMARIZER = "summarizer"
ROLE_EXTRACTOR = "extractor"

TRANSITION_THINK_MORE = "THINK_MORE"
TRANSITION_RESPONSE = "RESPONSE"

SCORE_MIN = -5
SCORE_MAX = 5

EMPTY_INPUT_PLACEHOLDER = "(no external input)"
SELF_INITIATED_PLACEHOLDER = "(self-initiated; no external message)"

URGENCY_LINE = (
    "Urgency: this deliberation has continued for many ticks without resolving; "
    "unless truly impossible, select [RESPONSE] now."
)

RECALL_REMINDER = "Format reminder: output only numbered recall targets, one per line, like '1. ...'."
CANDIDATES_REMINDER = "Format reminder: output only a numbered list of thoughts, like '1. ...'."
CRITIQUE_REMINDER = (
    "Format reminder: one line per perspective, exactly 'N. Score: <integer> | Critique: <text>'."
)
ARBITRATION_REMINDER = (
    "Format reminder: output 'WINNING THOUGHT: N', then 'TRANSITION: [RESPONSE]' or "
    "'TRANSITION: [THINK_MORE]', then 'RATIONALE: ...'."
)

_TEMPLATE_NAMES = (
    "core_self",
    "genesis",
    "attention.system",
    "attention.user",
    "generator.system",
    "generator.user",
    "critic.system",
    "critic.user",
    "meta.system",
    "meta.user",
    "response.system",
    "response.user",
    "summarize.system",
    "summarize.user",
    "extract.system",
    "extract.user",
)

T = TypeVar("T")


@dataclass(frozen=True)
class PromptPair:
    """One backend call: system constraint plus dynamic user context."""

    system: str
    user: str
    role: str
    temperature: float

    def __post_init__(self) -> None:
        if not self.system or not self.user:
            raise ValueError("prompt texts must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate set must be nonempty")
        if any(not c for c in self.candidates):
            raise ValueError("candidates must be nonempty strings")

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class CritiqueItem:
    index: int
    score: int
    critique: str


@dataclass(frozen=True)
class CritiqueSet:
    items: tuple[CritiqueItem, ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        indices = [item.index for item in self.items]
        if sorted(indices) != list(range(1, len(self.items) + 1)):
            raise ValueError(f"critique indices must cover 1..N exactly, got {indices}")
        for item in self.items:
            if not SCORE_MIN <= item.score <= SCORE_MAX:
                raise ValueError(f"score {item.score} outside [{SCORE_MIN}, {SCORE_MAX}]")


@dataclass(frozen=True)
class Arbitration:
    winner_index: int
    transition: str
    rationale: str

    def __post_init__(self) -> None:
        if self.winner_index < 1:
            raise ValueError("winner_index must be >= 1")
        if self.transition not in (TRANSITION_THINK_MORE, TRANSITION_RESPONSE):
            raise ValueError(f"unknown transition: {self.transition!r}")


@dataclass(frozen=True)
class NodeTemperatures:
    attention: float = 0.3
    generator_fallback: float = 0.7  # engine always passes the drive temperature
    critic: float = 0.0
    meta: float = 0.2
    response: float = 0.7


class TemplateSet:
    """Loaded prompt templates, optionally overridden from a directory."""

    def __init__(self, texts: dict[str, str]) -> None:
        missing = [name for name in _TEMPLATE_NAMES if name not in texts]
        if missing:
            raise ValueError(f"missing templates: {missing}")
        self._texts = dict(texts)

    @classmethod
    def load(cls, override_dir: Path | str | None = None) -> TemplateSet:
        texts = {}
        base = resources.files("gwa").joinpath("templates")
        for name in _TEMPLATE_NAMES:
            texts[name] = base.joinpath(f"{name}.txt").read_text(encoding="utf-8").strip()
        if override_dir is not None:
            override = Path(override_dir)
            for name in _TEMPLATE_NAMES:
                candidate = override / f"{name}.txt"
                if candidate.exists():
                    texts[name] = candidate.read_text(encoding="utf-8").strip()
        return cls(texts)

    def text(self, name: str) -> str:
        return self._texts[name]

    def fill(self, name: str, **values: str) -> str:
        context = {
            "STM": "",
            "INPUT": "",
            "RAG": "",
            "STATE": "",
            "CORE_SELF": "",
            "CANDIDATES": "",
            "SCORES": "",
            "N": "",
            "WINNING_THOUGHT": "",
        }
        context.update(values)
        return self._texts[name].format(**context)


_DEFAULT_TEMPLATES: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = TemplateSet.load()
    return _DEFAULT_TEMPLATES


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def format_candidates(candidates: CandidateSet) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(candidates.candidates, start=1))


def format_critiques(critiques: CritiqueSet) -> str:
    return "\n".join(
        f"{item.index}. Score: {item.score} | Critique: {item.critique}"
        for item in critiques.items
    )


def format_arbitration(arbitration: Arbitration) -> str:
    return (
        f"WINNING THOUGHT: {arbitration.winner_index}\n"
        f"TRANSITION: [{arbitration.transition}]\n"
        f"RATIONALE: {arbitration.rationale}"
    )


def _input_or_placeholder(buffer: InputBuffer, placeholder: str) -> str:
    body = render_input(buffer)
    return body if body else placeholder


def render_attention(
    state: GlobalState,
    templates: TemplateSet | None = None,
    temperature: float = 0.3,
) -> PromptPair:
    t = templates or default_templates()
    user = t.fill(
        "attention.user",
        STM=render_stm(state.stm),
        INPUT=_input_or_placeholder(state.input, EMPTY_INPUT_PLACEHOLDER),
    )
    return PromptPair(t.text("attention.system"), user, ROLE_ATTENTION, temperature)


def render_generator(
    state: GlobalState,
    n: int,
    temperature: float,
    templates: TemplateSet | None = None,
) -> PromptPair:
    if n < 1:
        raise ValueError(f"candidate count must be >= 1, got {n}")
    t = templates or default_templates()
    system = t.fill("generator.system", N=str(n))
    user = t.fill("generator.user", STATE=render_state(state))
    return PromptPair(system, user, ROLE_GENERATOR, temperature)


def render_critic(
    state: GlobalState,
    candidates: CandidateSet,
    templates: TemplateSet | None = None,
    temperature: float = 0.0,
) -> PromptPair:
    t = templates or default_templates()
    user = t.fill(
        "critic.user",
        STATE=render_state(state),
        CANDIDATES=format_candidates(candidates),
    )
    return PromptPair(t.text("critic.system"), user, ROLE_CRITIC, temperature)


def render_meta(
    state: GlobalState,
    candidates: CandidateSet,
    critiques: CritiqueSet,
    templates: TemplateSet | None = None,
    temperature: float = 0.2,
    urgent: bool = False,
) -> PromptPair:
    t = templates or default_templates()
    user = t.fill(
        "meta.user",
        STATE=render_state(state),
        CANDIDATES=format_candidates(candidates),
        SCORES=format_critiques(critiques),
    )
    if urgent:
        user = f"{user}\n\n{URGENCY_LINE}"
    return PromptPair(t.text("meta.system"), user, ROLE_META, temperature)


def render_response(
    input_buffer: InputBuffer,
    winning_thought: str,
    templates: TemplateSet | None = None,
    temperature: float = 0.7,
) -> PromptPair:
    if not winning_thought:
        raise ValueError("winning thought must be nonempty")
    t = templates or default_templates()
    user = t.fill(
        "response.user",
        INPUT=_input_or_placeholder(input_buffer, SELF_INITIATED_PLACEHOLDER),
        WINNING_THOUGHT=winning_thought,
    )
    return PromptPair(t.text("response.system"), user, ROLE_RESPONSE, temperature)


def render_summarize(stm_text: str, templates: TemplateSet | None = None) -> PromptPair:
    t = templates or default_templates()
    user = t.fill("summarize.user", STM=stm_text)
    return PromptPair(t.text("summarize.system"), user, ROLE_SUMMARIZER, 0.2)


def render_extract(stm_text: str, templates: TemplateSet | None = None) -> PromptPair:
    t = templates or default_templates()
    user = t.fill("extract.user", STM=stm_text)
    return PromptPair(t.text("extract.system"), user, ROLE_EXTRACTOR, 0.0)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NUMBERED_LINE = re.compile(r"^\s*(\d+)[.)]\s*(.*\S)\s*$")
_SCORE_LINE = re.compile(
    r"^\s*(\d+)[.)]\s*Score:\s*([+-]?\d+)\s*\|\s*Critique:\s*(.*\S)\s*$",
    re.IGNORECASE,
)
_EXTRACT_LINE = re.compile(
    r"^\s*(?:\d+[.)]\s*)?(EXPERIENCE|DECISION|LESSON)\s*:\s*(.*\S)\s*$",
    re.IGNORECASE,
)
_WINNER = re.compile(r"WINNING\s+THOUGHT:\s*(\d+)", re.IGNORECASE)
_TRANSITION = re.compile(r"TRANSITION:\s*\[(RESPONSE|THINK_MORE)\]", re.IGNORECASE)
_RATIONALE = re.compile(r"RATIONALE:\s*(.*)", re.IGNORECASE | re.DOTALL)


def parse_recall_targets(raw: str) -> list[str]:
    """Numbered recall lines, capped at three."""
    targets = []
    for line in raw.splitlines():
        match = _NUMBERED_LINE.match(line)
        if match:
            targets.append(match.group(2).strip())
    if not targets:
        raise MalformedOutput(f"no numbered recall targets in: {raw[:200]!r}")
    return targets[:3]


def parse_candidates(raw: str, n_expected: int) -> CandidateSet:
    """Numbered candidates; continuation lines join their current item.

    The model may under-produce; anything beyond n_expected is dropped.
    """
    if n_expected < 1:
        raise ValueError(f"n_expected must be >= 1, got {n_expected}")
    collected: list[list[str]] = []
    for line in raw.splitlines():
        match = _NUMBERED_LINE.match(line)
        if match:
            collected.append([match.group(2).strip()])
        elif collected and line.strip():
            collected[-1].append(line.strip())
    candidates = [" ".join(parts) for parts in collected]
    if not candidates:
        raise MalformedOutput(f"no numbered candidates in: {raw[:200]!r}")
    return CandidateSet(candidates=tuple(candidates[:n_expected]))


def parse_critiques(raw: str, n: int) -> CritiqueSet:
    """Score lines in the literal `N. Score: <int> | Critique: <text>` format.

    Missing indices are filled with a zero score and flagged rather than
    failing the tick; wildly out-of-range scores clamp to the legal
    range. Arbitration quality degrades but the cycle survives.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    found: dict[int, tuple[int, str]] = {}
    flags: list[str] = []
    for line in raw.splitlines():
        match = _SCORE_LINE.match(line)
        if not match:
            continue
        index = int(match.group(1))
        if index < 1 or index > n or index in found:
            continue
        score = int(match.group(2))
        if score < SCORE_MIN or score > SCORE_MAX:
            flags.append(f"score {score} for item {index} clamped")
            score = max(SCORE_MIN, min(SCORE_MAX, score))
        found[index] = (score, match.group(3).strip())
    if not found:
        raise MalformedOutput(f"no parseable score lines in: {raw[:200]!r}")
    items = []
    for index in range(1, n + 1):
        if index in found:
            score, critique = found[index]
        else:
            score, critique = 0, "(no assessment)"
            flags.append(f"item {index} missing, filled")
        items.append(CritiqueItem(index=index, score=score, critique=critique))
    return CritiqueSet(items=tuple(items), flags=tuple(flags))


def parse_extraction(raw: str) -> list[tuple[str, str]]:
    """Typed archive items, `KIND: text` per line, KIND in the record kinds.

    Lenient: unrecognized lines are skipped and an empty result is legal
    (a history can contain nothing durable). Capped at five items.
    """
    items = []
    for line in raw.splitlines():
        match = _EXTRACT_LINE.match(line)
        if match:
            items.append((match.group(2).strip(), match.group(1).lower()))
    return items[:5]


def parse_arbitration(raw: str, n: int) -> Arbitration:
    """Winner index, transition tag, and rationale.

    Strict on the winner: a missing or out-of-range index is malformed,
    never clamped, because a wrong winner silently corrupts the run.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    winner_match = _WINNER.search(raw)
    if not winner_match:
        raise MalformedOutput(f"no winner index in: {raw[:200]!r}")
    winner = int(winner_match.group(1))
    if winner < 1 or winner > n:
        raise MalformedOutput(f"winner index {winner} outside 1..{n}")
    transition_match = _TRANSITION.search(raw)
    if not transition_match:
        raise MalformedOutput(f"no transition tag in: {raw[:200]!r}")
    transition = transition_match.group(1).upper()
    rationale_match = _RATIONALE.search(raw)
    rationale = rationale_match.group(1).strip() if rationale_match else ""
    return Arbitration(winner_index=winner, transition=transition, rationale=rationale)


def retry_on_malformed(
    invoke: Callable[[str | None], str],
    parser: Callable[[str], T],
    max_retries: int,
    reminder: str,
    role: str = "node",
) -> T:
    """Call the backend until its output parses, re-asking with a reminder.

    `invoke` receives None on the first attempt and the reminder line on
    retries. After max_retries re-asks every transcript is handed to
    NodeFailure so the failed tick can be audited.
    """
    if max_retries < 0:
        raise ValueError(f"max_retries must be >= 0, got {max_retries}")
    transcripts: list[str] = []
    for attempt in range(max_retries + 1):
        raw = invoke(None if attempt == 0 else reminder)
        transcripts.append(raw)
        try:
            return parser(raw)
        except MalformedOutput:
            continue
    raise NodeFailure(role, transcripts)
