"""How the diversity drive steers sampling temperature.

Feeds a window of thought vectors through the cluster model and prints
the entropy reading and the resulting generation temperature as the
window first collapses onto one idea, then scatters again. Run it
directly; everything is offline and deterministic.
"""

from gwa.backend import hash_embedding
from gwa.drive import (
    ClusterSet,
    DriveConfig,
    ThoughtVector,
    generation_temperature,
    update_clusters,
    window_entropy,
)

cfg = DriveConfig()
clusters = ClusterSet()
window: list[ThoughtVector] = []

phases = [
    ("exploring", [
        "the harbor at low tide",
        "a ledger of unpaid invoices",
        "wind turbines on the ridge",
        "the smell of cut grass",
    ]),
    ("stuck", ["the same looping worry"] * 8),
    ("recovering", [
        "a letter worth rewriting",
        "the bridge toll schedule",
        "frost patterns on glass",
        "an unplayed piano",
        "the census of small birds",
        "a recipe halved badly",
        "the stairwell echo test",
        "maps of forgotten trails",
    ]),
]

print(f"{'phase':>10}  {'thought':<28} {'H':>6}  {'T_gen':>6}")
for label, thoughts in phases:
    for tick, text in enumerate(thoughts):
        vector = ThoughtVector(values=hash_embedding(text), source_tick=tick)
        clusters = update_clusters(vector, clusters)
        window = (window + [vector])[-cfg.window :]
        h = window_entropy(window, clusters, cfg)
        t = generation_temperature(h, cfg)
        print(f"{label:>10}  {text[:28]:<28} {h:6.3f}  {t:6.3f}")

print()
print("Collapse drives the temperature toward t_base + alpha "
      f"({cfg.t_base + cfg.alpha:.2f}); recovery relaxes it back toward t_base ({cfg.t_base:.2f}).")
