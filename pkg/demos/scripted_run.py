"""A complete deliberation loop against a scripted backend.

Five ticks: the agent mulls a question over several internal rounds,
answers, and keeps thinking afterwards. Every backend call is matched
by deterministic rules, so the transcript below is stable run to run.
"""

from gwa.backend import ScriptedBackend, ScriptedRule
from gwa.config import AppConfig
from gwa.engine import Engine, format_tick

rules = [
    ScriptedRule(
        role="attention",
        response="1. errands and scheduling\n2. anything already promised",
    ),
    ScriptedRule(
        role="generator",
        response=(
            "1. The library books are due before the weekend; that is the hard deadline.\n"
            "2. Groceries can wait until the Thursday market.\n"
            "3. The dentist reschedule call takes two minutes and unblocks the rest."
        ),
    ),
    ScriptedRule(
        role="critic",
        response=(
            "1. Score: 2 | Critique: A real deadline, worth anchoring on.\n"
            "2. Score: 0 | Critique: True but not urgent.\n"
            "3. Score: 3 | Critique: Tiny effort, large unblock."
        ),
    ),
    ScriptedRule(
        role="meta",
        tick=2,
        response=(
            "WINNING THOUGHT: 3\nTRANSITION: [RESPONSE]\n"
            "RATIONALE: The quick call resolves the scheduling question directly."
        ),
    ),
    ScriptedRule(
        role="meta",
        response=(
            "WINNING THOUGHT: 1\nTRANSITION: [THINK_MORE]\n"
            "RATIONALE: The ordering of the errands is still unsettled."
        ),
    ),
    ScriptedRule(
        role="response",
        response="Call the dentist first; it takes two minutes and the rest of the week falls into place.",
    ),
]

engine = Engine(AppConfig(), ScriptedBackend(rules=rules))
engine.stage_input("user", "Can you sort out my errands for this week?")

for _ in range(5):
    record = engine.run_tick()
    print(format_tick(record))
    print()

snap = engine.snapshot()
print(f"final tick {snap.tick}, entropy {snap.entropy:.3f}, temperature {snap.temperature:.3f}")
print(f"exchange still open: {snap.input_pending}")
