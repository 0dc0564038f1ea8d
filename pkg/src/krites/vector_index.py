"""Exact nearest-neighbor search over unit-normalized embeddings.

Both cache tiers sit on top of this index. Lookups are brute-force cosine
scans; ties on similarity resolve to the smallest entry id so replayed
simulations are deterministic. Mutations and lookups follow a single-writer,
multi-reader contract: the caller serializes them (the simulator is
single-threaded).
"""

from __future__ import annotations

import numpy as np

NORM_TOLERANCE = 1e-6


def normalize(values) -> np.ndarray:
    """Return `values` as a unit-length float64 vector.

    Raises ValueError for non-1-D, empty, non-finite, or zero-norm input.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError("embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains non-finite values")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vec / norm


def similarity(a, b) -> float:
    """Cosine similarity of two equal-dimension vectors, in [-1, 1].

    For unit vectors this reduces to the plain dot product.
    """
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    denom = float(np.linalg.norm(va)) * float(np.linalg.norm(vb))
    if denom == 0.0:
        raise ValueError("similarity undefined for zero vectors")
    return float(np.dot(va, vb) / denom)


class VectorIndex:
    """Mutable exact-cosine index keyed by integer entry ids.

    Vectors are normalized once at insert; queries are assumed unit-length
    (trace ingestion and the tiers normalize on ingest). Rows live in a
    growable matrix with a free list, so insert/remove are O(d) amortized
    and `nearest` is one matrix-vector product.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        self._matrix = np.zeros((0, self.dimension), dtype=np.float64)
        self._ids = np.zeros(0, dtype=np.int64)
        self._alive = np.zeros(0, dtype=bool)
        self._row_of: dict[int, int] = {}
        self._free: list[int] = []
        self._used = 0  # high-water mark of allocated rows

    def __len__(self) -> int:
        return len(self._row_of)

    def __contains__(self, entry_id: int) -> bool:
        return int(entry_id) in self._row_of

    def ids(self) -> list[int]:
        return sorted(self._row_of)

    def _check_query(self, values) -> np.ndarray:
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise ValueError(
                f"dimension mismatch: query has shape {vec.shape}, "
                f"index dimension is {self.dimension}"
            )
        return vec

    def _alloc_row(self) -> int:
        if self._free:
            return self._free.pop()
        if self._used == self._matrix.shape[0]:
            new_cap = max(16, 2 * self._matrix.shape[0])
            matrix = np.zeros((new_cap, self.dimension), dtype=np.float64)
            matrix[: self._used] = self._matrix[: self._used]
            ids = np.zeros(new_cap, dtype=np.int64)
            ids[: self._used] = self._ids[: self._used]
            alive = np.zeros(new_cap, dtype=bool)
            alive[: self._used] = self._alive[: self._used]
            self._matrix, self._ids, self._alive = matrix, ids, alive
        row = self._used
        self._used += 1
        return row

    def insert(self, entry_id: int, values) -> None:
        """Insert a vector under a fresh id. Duplicate ids are rejected."""
        eid = int(entry_id)
        if eid in self._row_of:
            raise ValueError(f"duplicate entry id {eid}")
        vec = normalize(values)
        if vec.shape != (self.dimension,):
            raise ValueError(
                f"dimension mismatch: entry has {vec.shape[0]} dims, "
                f"index dimension is {self.dimension}"
            )
        row = self._alloc_row()
        self._matrix[row] = vec
        self._ids[row] = eid
        self._alive[row] = True
        self._row_of[eid] = row

    def remove(self, entry_id: int) -> bool:
        """Remove an entry. Returns True iff it was present."""
        eid = int(entry_id)
        row = self._row_of.pop(eid, None)
        if row is None:
            return False
        self._alive[row] = False
        self._free.append(row)
        return True

    def get_vector(self, entry_id: int) -> np.ndarray:
        row = self._row_of[int(entry_id)]
        return self._matrix[row].copy()

    def nearest(self, query) -> tuple[int, float] | None:
        """Entry id and similarity of the most similar stored vector.

        Returns None iff the index is empty. Exact similarity ties resolve
        to the smallest entry id.
        """
        vec = self._check_query(query)
        if not self._row_of:
            return None
        # Per-row pairwise reduction, not BLAS gemv: identical vectors must
        # produce bit-identical similarities regardless of row position, or
        # engineered ties would not be detected and broken by entry id.
        sims = (self._matrix[: self._used] * vec).sum(axis=1)
        sims = np.where(self._alive[: self._used], sims, -np.inf)
        best = sims.max()
        rows = np.flatnonzero(sims == best)
        if len(rows) > 1:
            rows = rows[np.argsort(self._ids[rows], kind="stable")]
        row = rows[0]
        return int(self._ids[row]), float(sims[row])
