"""Intrinsic drive: semantic clustering, diversity entropy, sampling temperature.

Winning thoughts are embedded into unit vectors and tracked against a
small set of online cluster centers. The softmax membership of recent
thoughts over those centers gives a distribution whose Shannon entropy
measures cognitive diversity; low entropy (stagnation) raises the
generator's sampling temperature exponentially, high entropy lets it
decay back to baseline.

All entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_SPAWN_THRESHOLD = 0.35
DEFAULT_EMA_RATE = 0.15
DEFAULT_K_MAX = 8


@dataclass(frozen=True)
class DriveConfig:
    """Parameters of the entropy-to-temperature feedback.

    tau scales the membership softmax; t_base/alpha/beta shape the
    temperature curve T = t_base + alpha * exp(-beta * H); window is how
    many recent thoughts enter the entropy estimate.
    """

    tau: float = 0.15
    t_base: float = 0.7
    alpha: float = 0.6
    beta: float = 2.0
    window: int = 8

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.t_base < 0:
            raise ValueError(f"t_base must be >= 0, got {self.t_base}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class ThoughtVector:
    """Embedded winning thought: a finite d-dimensional vector."""

    values: np.ndarray
    source_tick: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("thought vector must contain only finite entries")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class ClusterSet:
    """Online semantic cluster centers with spawn-or-EMA maintenance."""

    centers: tuple[np.ndarray, ...] = ()
    counts: tuple[int, ...] = ()
    k_max: int = DEFAULT_K_MAX
    spawn_threshold: float = DEFAULT_SPAWN_THRESHOLD
    ema_rate: float = DEFAULT_EMA_RATE

    def __post_init__(self) -> None:
        if len(self.centers) != len(self.counts):
            raise ValueError("centers and counts must have equal length")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not 0 < self.spawn_threshold < 2:
            raise ValueError("spawn_threshold must lie in (0, 2)")
        if not 0 < self.ema_rate <= 1:
            raise ValueError("ema_rate must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.centers)


def _checked_norm(v: np.ndarray, name: str) -> float:
    norm = float(np.linalg.norm(v))
    if not math.isfinite(norm) or norm == 0.0:
        raise ValueError(f"{name} has zero or nonfinite norm; embedding backend is broken")
    return norm


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), in [0, 2]. Zero iff the vectors are positively collinear."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = _checked_norm(a, "first vector")
    nb = _checked_norm(b, "second vector")
    cos = float(np.dot(a, b)) / (na * nb)
    # Clamp tiny float excursions so the result stays inside [0, 2].
    return 1.0 - max(-1.0, min(1.0, cos))


def membership_probabilities(distances: np.ndarray, tau: float) -> np.ndarray:
    """Softmax of -distances/tau, computed with max-subtraction."""
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ValueError("need at least one cluster distance")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    logits = -d / tau
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def shannon_entropy(p: np.ndarray) -> float:
    """-sum(p * ln p) with 0 * ln 0 == 0. Requires a probability vector."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probabilities must sum to 1, got {total}")
    nonzero = p[p > 0]
    return float(-np.sum(nonzero * np.log(nonzero)))


def window_entropy(
    history: Sequence[ThoughtVector], clusters: ClusterSet, cfg: DriveConfig
) -> float:
    """Diversity entropy of the recent thought window.

    Each thought's cluster membership (softmax over cosine distances to
    all centers) is averaged component-wise; the entropy of that mean
    distribution is returned. With no history, or with fewer than two
    centers, diversity is unmeasurable and the maximum-uncertainty prior
    ln(max(K, 2)) is returned instead, so the temperature starts at
    baseline rather than spiking.
    """
    k = len(clusters)
    if history and k == 0:
        raise ValueError("cluster set must be nonempty when history is nonempty")
    if not history or k <= 1:
        return math.log(max(k, 2))
    memberships = []
    for thought in history:
        distances = np.array(
            [cosine_distance(thought.values, c) for c in clusters.centers]
        )
        memberships.append(membership_probabilities(distances, cfg.tau))
    mean = np.mean(memberships, axis=0)
    return shannon_entropy(mean)


def generation_temperature(entropy: float, cfg: DriveConfig) -> float:
    """T = t_base + alpha * exp(-beta * H); strictly decreasing in H."""
    if entropy < 0:
        raise ValueError(f"entropy must be >= 0, got {entropy}")
    return cfg.t_base + cfg.alpha * math.exp(-cfg.beta * entropy)


def update_clusters(h: ThoughtVector, clusters: ClusterSet) -> ClusterSet:
    """Fold one thought vector into the cluster set, returning a new set.

    First vector becomes the first center. Afterwards, if the nearest
    center is farther than spawn_threshold and there is room, a new
    center spawns at the vector; otherwise the nearest center moves by
    EMA toward it. Ties on nearest break toward the lowest index.
    """
    v = np.asarray(h.values, dtype=np.float64)
    norm = _checked_norm(v, "thought vector")
    unit = v / norm
    if len(clusters) == 0:
        return ClusterSet(
            centers=(unit,),
            counts=(1,),
            k_max=clusters.k_max,
            spawn_threshold=clusters.spawn_threshold,
            ema_rate=clusters.ema_rate,
        )
    distances = [cosine_distance(v, c) for c in clusters.centers]
    nearest = int(np.argmin(distances))  # argmin takes the lowest index on ties
    if distances[nearest] > clusters.spawn_threshold and len(clusters) < clusters.k_max:
        return ClusterSet(
            centers=clusters.centers + (unit,),
            counts=clusters.counts + (1,),
            k_max=clusters.k_max,
            spawn_threshold=clusters.spawn_threshold,
            ema_rate=clusters.ema_rate,
        )
    eta = clusters.ema_rate
    moved = (1.0 - eta) * clusters.centers[nearest] + eta * unit
    moved = moved / _checked_norm(moved, "updated center")
    centers = list(clusters.centers)
    counts = list(clusters.counts)
    centers[nearest] = moved
    counts[nearest] += 1
    return ClusterSet(
        centers=tuple(centers),
        counts=tuple(counts),
        k_max=clusters.k_max,
        spawn_threshold=clusters.spawn_threshold,
        ema_rate=clusters.ema_rate,
    )
