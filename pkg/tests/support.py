"""Shared scripted scenarios for the engine, service, CLI, and
acceptance tests.

The golden scenario is the reference 12-attempt run: eleven committed
ticks mixing both transitions, one working-memory compression at tick
8, one malformed-then-retried generator call at tick 3, and a final
attempt aborted by a generator that never produces a parseable list.
Everything it touches (hash embeddings, rule matching, id assignment)
is deterministic, so its run log is byte-stable minus durations.
"""

from pathlib import Path

from gwa.backend import ScriptedBackend, ScriptedRule
from gwa.config import AppConfig, EngineConfig, MemoryConfig
from gwa.engine import Engine
from gwa.memory import CompressionConfig

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_run.jsonl"

GOLDEN_ATTEMPTS = 12
GOLDEN_COMMITTED = 11
GOLDEN_ABORT_TICK = 11
GOLDEN_COMPRESSION_TICK = 8
GOLDEN_RETRY_TICK = 3
GOLDEN_RESPONSE_TICKS = (2, 5, 8, 10)

# Staged before the attempt with the same index; the engine drains all.
GOLDEN_INPUTS = {
    0: [("user", "Can you help me plan the community workshop next month?")],
    4: [("user", "Also, we only have the hall for three hours.")],
    8: [("user", "Quick check: did you settle on a schedule yet?")],
}

_LONG_THOUGHT_6 = (
    "If the hall only gives us three hours, the agenda needs ruthless sequencing: "
    "a short welcome that doubles as a headcount, then the hands-on block while "
    "energy is high, then the group discussion once people know each other, and "
    "the wrap-up pinned to the final twenty minutes so nobody leaves before the "
    "commitments are written down; every segment needs an owner, a visible clock, "
    "and a fallback that can be cut without apology, because the first version of "
    "any schedule is a hypothesis about attention spans, and the honest plan "
    "reserves slack for the two surprises that always arrive, the projector that "
    "refuses the laptop and the visitor with the long question that deserves a "
    "real answer instead of a hallway brushoff, plus a named greeter at the door "
    "so latecomers slip in without derailing whichever segment is running."
)

_LONG_THOUGHT_7 = (
    "The dry run should happen a full week before the event, not the night prior, "
    "because the point of rehearsal is to leave time to fix what it reveals: the "
    "demo that takes eleven minutes instead of five, the handout that reads "
    "clearly on a screen but dies on paper, the room layout that hides the "
    "whiteboard from half the chairs; two volunteers are enough if one plays the "
    "confused newcomer and the other plays the impatient expert, and the notes "
    "from that hour will rewrite a third of the agenda, which is exactly why the "
    "agenda must stay cheap to rewrite until then, held in a plain shared "
    "document rather than anything laminated, printed in quantity, or otherwise "
    "expensive to regret, and the volunteer roles should be confirmed in writing "
    "the same day so nobody discovers a scheduling clash at the door."
)

DEFAULT_CANDIDATES = (
    "1. I could sketch a rough agenda before committing to anything.\n"
    "2. The audience size shapes everything; I should pin that down.\n"
    "3. A dry run with two volunteers would expose the rough spots."
)

DEFAULT_CRITIQUE = (
    "1. Score: 3 | Critique: Concrete and immediately actionable.\n"
    "2. Score: 1 | Critique: Useful but depends on unknowns.\n"
    "3. Score: 2 | Critique: Good instinct, modest cost."
)


def think_more(winner: int = 1, rationale: str = "The picture is still incomplete; keep deliberating.") -> str:
    return f"WINNING THOUGHT: {winner}\nTRANSITION: [THINK_MORE]\nRATIONALE: {rationale}"


def respond(winner: int, rationale: str) -> str:
    return f"WINNING THOUGHT: {winner}\nTRANSITION: [RESPONSE]\nRATIONALE: {rationale}"


def basic_rules(transition: str = "THINK_MORE", winner: int = 1) -> list[ScriptedRule]:
    """Minimal rule set that keeps every tick parseable."""
    return [
        ScriptedRule(role="critic", response=DEFAULT_CRITIQUE),
        ScriptedRule(
            role="meta",
            response=f"WINNING THOUGHT: {winner}\nTRANSITION: [{transition}]\nRATIONALE: scripted.",
        ),
        ScriptedRule(role="response", response="A scripted reply."),
    ]


def golden_rules() -> list[ScriptedRule]:
    return [
        # tick 3: first generator call is malformed, the reminder retry succeeds
        ScriptedRule(
            role="generator",
            tick=GOLDEN_RETRY_TICK,
            contains="Format reminder",
            response=(
                "1. The schedule question needs a hard look at the three busiest segments.\n"
                "2. A written agenda would prevent the drift we hit last time."
            ),
        ),
        ScriptedRule(
            role="generator",
            tick=GOLDEN_RETRY_TICK,
            response="Numbered lists feel so constraining today.",
        ),
        # ticks 6 and 7 produce the long winners that push STM past theta
        ScriptedRule(
            role="generator",
            tick=6,
            response=(
                f"1. {_LONG_THOUGHT_6}\n"
                "2. Shorter segments might work too.\n"
                "3. The agenda could stay loose instead."
            ),
        ),
        ScriptedRule(
            role="generator",
            tick=7,
            response=(
                f"1. {_LONG_THOUGHT_7}\n"
                "2. A rehearsal might be skippable.\n"
                "3. Print everything early and hope."
            ),
        ),
        # tick 11: the generator never recovers; the attempt aborts
        ScriptedRule(role="generator", tick=GOLDEN_ABORT_TICK, response="No list today."),
        ScriptedRule(role="generator", response=DEFAULT_CANDIDATES),
        # meta: scripted RESPONSE ticks, otherwise keep deliberating
        ScriptedRule(
            role="meta",
            tick=2,
            response=respond(2, "The audience question must go back to the organizer now."),
        ),
        ScriptedRule(
            role="meta",
            tick=5,
            response=respond(1, "The time constraint changes the plan; say so."),
        ),
        ScriptedRule(
            role="meta",
            tick=8,
            response=respond(3, "A direct status answer is owed."),
        ),
        ScriptedRule(
            role="meta",
            tick=10,
            response=respond(1, "The remaining doubts are minor; close the loop."),
        ),
        ScriptedRule(role="meta", response=think_more()),
        ScriptedRule(role="critic", response=DEFAULT_CRITIQUE),
        ScriptedRule(
            role="attention",
            response="1. workshop schedule decisions\n2. constraints from the organizer",
        ),
        # responses for the four RESPONSE ticks
        ScriptedRule(
            role="response",
            tick=2,
            response=(
                "Before I draft a schedule: how many people are you expecting? "
                "Everything hinges on that."
            ),
        ),
        ScriptedRule(
            role="response",
            tick=5,
            response=(
                "Three hours changes things. I'd cut the open discussion and run "
                "two focused sessions instead."
            ),
        ),
        ScriptedRule(
            role="response",
            tick=8,
            response=(
                "Yes, nearly. Two sessions with a break; the slot-by-slot plan "
                "follows tonight."
            ),
        ),
        ScriptedRule(
            role="response",
            tick=10,
            response=(
                "One more refinement settled: volunteers arrive thirty minutes "
                "early for setup."
            ),
        ),
        ScriptedRule(
            role="summarizer",
            response=(
                "Planning the community workshop: audience size was the first open "
                "question, the three-hour hall limit forced two focused sessions, "
                "and a draft agenda plus an early dry run became the working plan."
            ),
        ),
        ScriptedRule(
            role="extractor",
            response=(
                "EXPERIENCE: Fielded a workshop planning request and iterated the plan across several exchanges.\n"
                "DECISION: Replaced the open discussion block with two focused sessions to fit three hours.\n"
                "LESSON: Pin down audience size before drafting any schedule."
            ),
        ),
    ]


def golden_config(
    ltm_path: str | None = None, run_log_path: str | None = None
) -> AppConfig:
    return AppConfig(
        compression=CompressionConfig(theta=600, retain_recent=2),
        engine=EngineConfig(run_log_path=run_log_path),
        memory=MemoryConfig(ltm_path=ltm_path),
    )


def run_golden(
    ltm_path: str | None = None,
    run_log_path: str | None = None,
    listener=None,
) -> tuple[list[dict], ScriptedBackend, Engine]:
    """Drive the full golden scenario; returns (records, backend, engine)."""
    backend = ScriptedBackend(rules=golden_rules())
    engine = Engine(golden_config(ltm_path, run_log_path), backend)
    if listener is not None:
        engine.subscribe(listener)
    records = []
    try:
        for attempt in range(GOLDEN_ATTEMPTS):
            for source, text in GOLDEN_INPUTS.get(attempt, []):
                engine.stage_input(source, text)
            records.append(engine.run_tick())
    finally:
        engine.close()
    return records, backend, engine
