"""Working-memory compression and long-term retrieval, end to end.

Builds an oversized short-term memory, splits it into a summary head
plus archived records, then pulls the archive back with semantic
queries. The summarizer and extractor are plain functions here; in a
live deployment those calls go to a language model.
"""

from gwa.backend import hash_embedding
from gwa.memory import CompressionConfig, MemoryStore, bifurcate, token_count
from gwa.workspace import GenesisState, ShortTermMemory, StmEntry, render_stm

stm = ShortTermMemory.seeded(GenesisState("I woke up curious about the garden project."))
diary = [
    "Measured the garden beds with the long tape before breakfast; the north plot "
    "sits behind the shed and gets four hours of direct sun at the very most, "
    "which rules out anything that demands full light.",
    "Decided after comparing seed packets that the leafy greens go in the shaded "
    "north plot while the tomatoes take the warm strip along the south fence, "
    "where the bricks hold heat well into the evening.",
    "The seed supplier called back around noon: the heirloom tomato variety I had "
    "planned the whole layout around is out of stock for the season, with no "
    "waiting list and no substitute from the same grower.",
    "Switched the plan to a cherry tomato variety that tolerates cooler nights, "
    "sets fruit earlier, and will not sulk if the fence corner turns out breezier "
    "than the catalog assumes it to be.",
    "Sketched the watering schedule on the back of the seed invoice; mornings "
    "only, twice a week to start, stepping up only if the leaves signal stress "
    "before the mulch goes down in June.",
    "The neighbor two doors down offered their surplus compost heap, already "
    "turned twice this spring; pickup is arranged for Saturday morning with the "
    "borrowed wheelbarrow and two empty bins.",
]
for tick, text in enumerate(diary, start=1):
    stm = stm.appended(StmEntry("winning_thought", text, tick))

print(f"entries before: {len(stm.entries)}, tokens: {token_count(render_stm(stm))}")


def summarize(text: str) -> str:
    return ("Garden planning so far: shaded north plot for greens, cherry "
            "tomatoes along the fence, morning watering twice a week.")


def extract(text: str) -> list[tuple[str, str]]:
    return [
        ("The heirloom tomato variety was unavailable this season.", "experience"),
        ("Chose a cold-tolerant cherry tomato instead.", "decision"),
        ("Check stock before designing around one variety.", "lesson"),
    ]


store = MemoryStore(dimension=256)
new_stm, archived_ids = bifurcate(
    stm,
    CompressionConfig(theta=256, retain_recent=2),
    store,
    summarize,
    extract,
    hash_embedding,
    tick=7,
)

print(f"entries after: {len(new_stm.entries)}, tokens: {token_count(render_stm(new_stm))}")
print(f"archived record ids: {archived_ids}")
print()
print("new short-term memory:")
for entry in new_stm.entries:
    print(f"  [{entry.kind} @ tick {entry.tick}] {entry.text[:70]}")

print()
for query in ("what happened with the tomatoes?", "watering plans"):
    print(f"query: {query}")
    for record, similarity in store.retrieve(query, k=2, embedder=hash_embedding):
        print(f"  {similarity:+.3f}  ({record.kind})  {record.text[:64]}")
