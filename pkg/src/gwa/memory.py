"""Long-term vector memory and the working-memory compression protocol.

The store is append-only: embedded records are archived permanently to a
JSON-lines file (one record per line, preceded by a header line carrying
the embedding dimension) and never deleted. Retrieval is an exact
exhaustive cosine scan, which keeps results deterministic at desk scale.

When the rendered working memory exceeds the token threshold, the
history splits two ways: typed knowledge chunks (plus the raw prefix
itself) are embedded into the archive, and a dense summary replaces the
verbose prefix in working memory so the internal narrative continues
unbroken.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import CompressionError, StartupError
from .workspace import KIND_SUMMARY, ShortTermMemory, StmEntry, render_stm

KIND_EXPERIENCE = "experience"
KIND_DECISION = "decision"
KIND_LESSON = "lesson"
KIND_SUMMARY_SOURCE = "summary_source"

RECORD_KINDS = (KIND_EXPERIENCE, KIND_DECISION, KIND_LESSON, KIND_SUMMARY_SOURCE)

Embedder = Callable[[str], np.ndarray]
Summarizer = Callable[[str], str]
Extractor = Callable[[str], "list[tuple[str, str]]"]


def token_count(text: str) -> int:
    """Approximate token count: ceil(utf-8 byte length / 4).

    This byte heuristic is the documented default contract; an exact
    tokenizer can replace it behind the same signature.
    """
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class MemoryRecord:
    id: int
    text: str
    vector: np.ndarray
    kind: str
    created_tick: int


@dataclass(frozen=True)
class CompressionConfig:
    """Token threshold and how many newest entries survive verbatim."""

    theta: int = 6000
    retain_recent: int = 4

    def __post_init__(self) -> None:
        if self.theta < 256:
            raise ValueError(f"theta must be >= 256 tokens, got {self.theta}")
        if self.retain_recent < 0:
            raise ValueError(f"retain_recent must be >= 0, got {self.retain_recent}")


class MemoryStore:
    """Append-only long-term memory with optional JSONL persistence.

    Single-writer by contract (the engine); readers operate on immutable
    record tuples. When a path is given, each append is written and
    flushed before the call returns.
    """

    def __init__(self, dimension: int, path: Path | str | None = None) -> None:
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._path = Path(path) if path is not None else None
        self._records: list[MemoryRecord] = []
        self._next_id = 1
        if self._path is not None and self._path.exists():
            self._load()
        elif self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("w", encoding="utf-8") as fh:
                fh.write(json.dumps({"type": "header", "dimension": dimension}) + "\n")

    @property
    def records(self) -> tuple[MemoryRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def _load(self) -> None:
        assert self._path is not None
        with self._path.open("r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise StartupError(f"{self._path}: empty archive file (missing header line)")
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StartupError(f"{self._path}: corrupted JSON on line {lineno}: {exc}") from exc
            if lineno == 1:
                if obj.get("type") != "header" or "dimension" not in obj:
                    raise StartupError(f"{self._path}: line 1 is not a valid header")
                if obj["dimension"] != self.dimension:
                    raise StartupError(
                        f"{self._path}: archive dimension {obj['dimension']} "
                        f"does not match configured dimension {self.dimension}"
                    )
                continue
            try:
                record = MemoryRecord(
                    id=int(obj["id"]),
                    text=str(obj["text"]),
                    vector=np.asarray(obj["vector"], dtype=np.float64),
                    kind=str(obj["kind"]),
                    created_tick=int(obj["created_tick"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StartupError(f"{self._path}: bad record on line {lineno}: {exc}") from exc
            if record.vector.shape != (self.dimension,):
                raise StartupError(
                    f"{self._path}: record on line {lineno} has dimension "
                    f"{record.vector.shape[0]}, expected {self.dimension}"
                )
            self._records.append(record)
            self._next_id = max(self._next_id, record.id + 1)

    def _persist(self, records: Iterable[MemoryRecord]) -> None:
        if self._path is None:
            return
        with self._path.open("a", encoding="utf-8") as fh:
            for rec in records:
                obj = {
                    "id": rec.id,
                    "kind": rec.kind,
                    "text": rec.text,
                    "vector": [float(x) for x in rec.vector],
                    "created_tick": rec.created_tick,
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            fh.flush()

    def store(
        self,
        items: list[tuple[str, str]],
        embedder: Embedder,
        created_tick: int = 0,
    ) -> list[int]:
        """Embed and archive (text, kind) pairs; ids come back in input order.

        All-or-nothing: if any embedding call fails, nothing is appended.
        """
        for text, kind in items:
            if not text:
                raise ValueError("cannot store an empty text")
            if kind not in RECORD_KINDS:
                raise ValueError(f"unknown record kind: {kind!r}")
        vectors = [np.asarray(embedder(text), dtype=np.float64) for text, _ in items]
        for vec in vectors:
            if vec.shape != (self.dimension,):
                raise ValueError(
                    f"embedder returned dimension {vec.shape}, expected ({self.dimension},)"
                )
        new_records = []
        for (text, kind), vec in zip(items, vectors):
            new_records.append(
                MemoryRecord(
                    id=self._next_id + len(new_records),
                    text=text,
                    vector=vec,
                    kind=kind,
                    created_tick=created_tick,
                )
            )
        self._records.extend(new_records)
        self._next_id += len(new_records)
        self._persist(new_records)
        return [rec.id for rec in new_records]

    def retrieve(
        self, query: str, k: int, embedder: Embedder
    ) -> list[tuple[MemoryRecord, float]]:
        """Top-k records by cosine similarity, exhaustively scanned.

        Ties break by lower created_tick, then lower id, so repeated
        calls always return the same ordering.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self._records:
            return []
        q = np.asarray(embedder(query), dtype=np.float64)
        qn = float(np.linalg.norm(q))
        if qn == 0.0:
            raise ValueError("query embedding has zero norm")
        scored = []
        for rec in list(self._records):
            rn = float(np.linalg.norm(rec.vector))
            sim = float(np.dot(q, rec.vector)) / (qn * rn)
            scored.append((rec, sim))
        scored.sort(key=lambda pair: (-pair[1], pair[0].created_tick, pair[0].id))
        return scored[:k]


def bifurcate(
    stm: ShortTermMemory,
    cfg: CompressionConfig,
    store: MemoryStore,
    summarizer: Summarizer,
    extractor: Extractor,
    embedder: Embedder,
    tick: int = 0,
) -> tuple[ShortTermMemory, list[int]]:
    """Compress working memory once it exceeds the token threshold.

    The compressible prefix (everything but the retain_recent newest
    entries) is archived twice over: the raw prefix as a summary_source
    record plus whatever typed chunks the extractor finds, and a dense
    summary replaces it as the new head entry. The retained tail
    survives byte-identical. Backend failures abort the compression with
    working memory unchanged; the caller may retry next tick.
    """
    before = token_count(render_stm(stm))
    if before <= cfg.theta:
        raise ValueError(
            f"bifurcate called below threshold: {before} tokens <= theta {cfg.theta}"
        )
    cut = max(0, len(stm.entries) - cfg.retain_recent)
    if cut == 0:
        raise CompressionError(
            "nothing to compress: retain_recent covers the whole working memory"
        )
    prefix_entries = stm.entries[:cut]
    tail_entries = stm.entries[cut:]
    prefix_text = "\n\n".join(e.text for e in prefix_entries)

    chunks = list(extractor(prefix_text))
    summary = summarizer(prefix_text)
    if not summary or not summary.strip():
        raise CompressionError("summarizer returned empty text")

    # The summary is stamped with the newest tick it covers, not the
    # compression tick, so the tick ordering of the retained tail holds.
    new_entries = (StmEntry(KIND_SUMMARY, summary.strip(), prefix_entries[-1].tick),) + tail_entries
    new_stm = ShortTermMemory(entries=new_entries)
    after = token_count(render_stm(new_stm))
    if after >= before:
        raise CompressionError(
            f"summary did not reduce working memory ({before} -> {after} tokens)"
        )

    to_store = [(prefix_text, KIND_SUMMARY_SOURCE)] + [
        (text, kind) for text, kind in chunks if text
    ]
    stored_ids = store.store(to_store, embedder, created_tick=tick)
    return new_stm, stored_ids
