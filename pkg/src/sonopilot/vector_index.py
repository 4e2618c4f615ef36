"""Flat in-memory cosine-similarity index with top-k search and Recall@k.

The index is exhaustive by design: corpora here are hundreds of entries, and
an exact scan keeps every result reproducible against a brute-force oracle.
Ordering is fully deterministic: score descending, ties broken by id
ascending.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import DimensionMismatchError, EmbeddingVector


class IndexFormatError(ValueError):
    """An index file failed validation while loading."""


@dataclass(frozen=True)
class IndexEntry:
    """One searchable record: unique id, vector, and a reference to its payload."""

    id: str
    vector: EmbeddingVector
    payload_ref: str = ""


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float


@dataclass(frozen=True)
class RetrievalEvalCase:
    """A query paired with the ids that count as relevant for it."""

    query: str
    relevant_ids: frozenset[str]

    def __post_init__(self) -> None:
        if not self.relevant_ids:
            raise ValueError("relevant_ids must be non-empty")


def _as_array(vector: EmbeddingVector | Sequence[float]) -> np.ndarray:
    if isinstance(vector, EmbeddingVector):
        return np.asarray(vector.values, dtype=np.float64)
    return np.asarray(vector, dtype=np.float64)


def cosine_similarity(a: EmbeddingVector | Sequence[float], b: EmbeddingVector | Sequence[float]) -> float:
    """Cosine similarity, 0.0 when either vector is all-zero, clamped to [-1, 1]."""
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    score = float(va @ vb) / (norm_a * norm_b)
    return max(-1.0, min(1.0, score))


class VectorIndex:
    """Immutable flat index over a fixed set of entries."""

    def __init__(self, entries: Iterable[IndexEntry]):
        self._entries = tuple(entries)
        ids = [e.id for e in self._entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate index ids: {dupes}")
        dims = {e.vector.dimension for e in self._entries}
        if len(dims) > 1:
            raise DimensionMismatchError(f"entries disagree on dimension: {sorted(dims)}")
        self._dimension = dims.pop() if dims else 0
        if self._entries:
            self._matrix = np.asarray([e.vector.values for e in self._entries], dtype=np.float64)
            self._norms = np.linalg.norm(self._matrix, axis=1)
        else:
            self._matrix = np.zeros((0, 0), dtype=np.float64)
            self._norms = np.zeros(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def entries(self) -> tuple[IndexEntry, ...]:
        return self._entries

    def ids(self) -> frozenset[str]:
        return frozenset(e.id for e in self._entries)

    def entry(self, entry_id: str) -> IndexEntry:
        for e in self._entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def top_k(self, query: EmbeddingVector | Sequence[float], k: int) -> list[SearchHit]:
        """The min(k, len(index)) best hits, score desc, ties by id asc."""
        if k < 0:
            raise ValueError("k must be non-negative")
        if not self._entries or k == 0:
            return []
        q = _as_array(query)
        if q.shape[0] != self._dimension:
            raise DimensionMismatchError(f"query dimension {q.shape[0]} != index dimension {self._dimension}")
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            scores = np.zeros(len(self._entries))
        else:
            denom = self._norms * q_norm
            dots = self._matrix @ q
            scores = np.divide(dots, denom, out=np.zeros_like(dots), where=denom != 0.0)
        scored = [
            SearchHit(entry.id, max(-1.0, min(1.0, float(score))))
            for entry, score in zip(self._entries, scores)
        ]
        scored.sort(key=lambda hit: (-hit.score, hit.id))
        return scored[: min(k, len(scored))]

    def save(self, path: str | Path) -> None:
        """Write one file: a JSON header line, then one JSON line per entry."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"dimension": self._dimension, "entry_count": len(self._entries)}) + "\n")
            for e in self._entries:
                record = {"id": e.id, "vector": list(e.vector.values), "payload_ref": e.payload_ref}
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        with path.open("r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise IndexFormatError(f"{path}: empty index file")
        try:
            header = json.loads(lines[0])
            dimension = int(header["dimension"])
            entry_count = int(header["entry_count"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IndexFormatError(f"{path}:1: bad header: {exc}") from exc
        entries = []
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                entry = IndexEntry(
                    id=str(record["id"]),
                    vector=EmbeddingVector(tuple(float(v) for v in record["vector"])),
                    payload_ref=str(record.get("payload_ref", "")),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise IndexFormatError(f"{path}:{line_no}: bad entry: {exc}") from exc
            if entry.vector.dimension != dimension:
                raise IndexFormatError(
                    f"{path}:{line_no}: entry dimension {entry.vector.dimension} != header dimension {dimension}"
                )
            entries.append(entry)
        if len(entries) != entry_count:
            raise IndexFormatError(f"{path}: header claims {entry_count} entries, found {len(entries)}")
        try:
            return cls(entries)
        except ValueError as exc:
            raise IndexFormatError(f"{path}: {exc}") from exc


def recall_at_k(index: VectorIndex, cases: Sequence[RetrievalEvalCase], embedder, k: int) -> float:
    """Fraction of cases whose top-k hits contain at least one relevant id.

    ``embedder`` is an EmbedderConfig; each case's query is embedded with it.
    """
    from .embedding import embed_text

    if not cases:
        raise ValueError("cases must be non-empty")
    index_ids = index.ids()
    for case in cases:
        missing = case.relevant_ids - index_ids
        if missing:
            raise ValueError(f"relevant ids not present in index: {sorted(missing)}")
    hits = 0
    for case in cases:
        result_ids = {hit.id for hit in index.top_k(embed_text(case.query, embedder), k)}
        if result_ids & case.relevant_ids:
            hits += 1
    return hits / len(cases)
