"""Datasets, metric dispatch, and instrumented distance evaluation.

Datasets are either dense (float32 row vectors) or sparse (strictly
ascending int32 item-id sets stored CSR-style). Four metrics are
supported: L1, L2, cosine and Jaccard. L2 is computed and reported as
the *squared* euclidean distance throughout: every consumer in this
package only needs the ordering, which the monotone square preserves,
and it saves a square root per comparison.

Every distance evaluation is tallied in a DistanceCounter; batched
operations add their worker-local tallies at synchronization points,
which is the supported way to keep the count exact under parallelism.

Synthetic data comes from numpy's PCG64 generator (``default_rng``), so
identical (n, d, seed) triples reproduce identical datasets bit-for-bit.
"""

from __future__ import annotations

import threading
from enum import IntEnum

import numpy as np

from . import _kernels as _k


class Metric(IntEnum):
    """Distance metric tag. L1/L2/Cosine are dense-only, Jaccard sparse-only."""

    L1 = _k.TAG_L1
    L2 = _k.TAG_L2
    COSINE = _k.TAG_COSINE
    JACCARD = _k.TAG_JACCARD

    @classmethod
    def from_name(cls, name: str) -> "Metric":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown metric {name!r}") from None

    @property
    def for_dense(self) -> bool:
        return self is not Metric.JACCARD

    def check_kind(self, kind: str) -> None:
        if self.for_dense and kind != "dense":
            raise ValueError(f"{self.name} requires a dense dataset, got {kind}")
        if not self.for_dense and kind != "sparse":
            raise ValueError(f"{self.name} requires a sparse dataset, got {kind}")


class DistanceCounter:
    """Monotone tally of metric evaluations.

    ``add`` is lock-protected so parallel workers may flush local tallies
    concurrently; single increments come from the scalar ``distance`` op.
    """

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("counter is monotone; cannot add a negative tally")
        with self._lock:
            self._count += n

    def __repr__(self) -> str:
        return f"DistanceCounter(count={self._count})"


class Dataset:
    """A fixed collection of records addressed by contiguous ids 0..n-1.

    Dense datasets hold an (n, d) float32 matrix. Sparse datasets hold n
    strictly-ascending item-id lists in CSR form (indptr int64, items
    int32) with ``d`` acting as the vocabulary bound. Datasets are
    immutable after construction and safe for unsynchronized shared reads.
    """

    def __init__(self, kind, n, d, vectors=None, indptr=None, items=None):
        self.kind = kind
        self.n = int(n)
        self.d = int(d)
        self.vectors = vectors
        self.indptr = indptr
        self.items = items

    @classmethod
    def from_dense(cls, vectors, validate: bool = True) -> "Dataset":
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError("dense data must be a 2-D array")
        ds = cls("dense", vectors.shape[0], vectors.shape[1], vectors=vectors)
        if validate:
            ds.validate()
        return ds

    @classmethod
    def from_itemsets(cls, records, universe=None, validate: bool = True) -> "Dataset":
        arrays = [np.asarray(r, dtype=np.int32) for r in records]
        lengths = np.array([len(a) for a in arrays], dtype=np.int64)
        indptr = np.zeros(len(arrays) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        items = (
            np.concatenate(arrays).astype(np.int32)
            if arrays
            else np.empty(0, dtype=np.int32)
        )
        if universe is None:
            universe = int(items.max()) + 1 if items.size else 0
        ds = cls("sparse", len(arrays), universe, indptr=indptr, items=items)
        if validate:
            ds.validate()
        return ds

    def validate(self) -> None:
        if self.kind == "dense":
            if self.vectors.shape != (self.n, self.d):
                raise ValueError("dense shape mismatch")
            if not np.all(np.isfinite(self.vectors)):
                raise ValueError("dense records must be finite")
        else:
            if self.n < 1 and self.indptr.shape[0] != self.n + 1:
                raise ValueError("sparse indptr mismatch")
            for i in range(self.n):
                rec = self.items[self.indptr[i]:self.indptr[i + 1]]
                if rec.size == 0:
                    raise ValueError(f"sparse record {i} is empty")
                if np.any(np.diff(rec) <= 0):
                    raise ValueError(f"sparse record {i} not strictly ascending")
                if rec[0] < 0 or rec[-1] >= self.d:
                    raise ValueError(f"sparse record {i} outside vocabulary bound")

    def record(self, i: int):
        """The i-th record: a float32 vector or an ascending int32 id array."""
        if self.kind == "dense":
            return self.vectors[i]
        return self.items[self.indptr[i]:self.indptr[i + 1]]

    def take(self, ids) -> "Dataset":
        """Re-indexed sub-dataset over ``ids`` (local id t = ids[t])."""
        ids = np.asarray(ids, dtype=np.int64)
        if self.kind == "dense":
            return Dataset(
                "dense",
                ids.shape[0],
                self.d,
                vectors=np.ascontiguousarray(self.vectors[ids]),
            )
        lengths = self.indptr[ids + 1] - self.indptr[ids]
        indptr = np.zeros(ids.shape[0] + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        items = np.empty(indptr[-1], dtype=np.int32)
        for t, i in enumerate(ids):
            items[indptr[t]:indptr[t + 1]] = self.items[
                self.indptr[i]:self.indptr[i + 1]
            ]
        return Dataset("sparse", ids.shape[0], self.d, indptr=indptr, items=items)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Dataset(kind={self.kind!r}, n={self.n}, d={self.d})"


def distance(metric: Metric, a, b, counter: DistanceCounter) -> float:
    """Evaluate metric(a, b) on two records and tally exactly one evaluation.

    Records must match the metric's dataset kind; dense records must agree
    in dimension. Values are identical bit-for-bit to the batched kernels.
    """
    metric = Metric(metric)
    if metric.for_dense:
        a = np.ascontiguousarray(a, dtype=np.float32)
        b = np.ascontiguousarray(b, dtype=np.float32)
        if a.ndim != 1 or b.ndim != 1:
            raise ValueError("dense records must be 1-D vectors")
        if a.shape[0] != b.shape[0]:
            raise ValueError(
                f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
            )
        d = float(_k.dense_dist(a, b, int(metric)))
    else:
        a = np.ascontiguousarray(a, dtype=np.int32)
        b = np.ascontiguousarray(b, dtype=np.int32)
        d = float(_k.jaccard_dist(a, b))
    counter.add(1)
    return d


def generate_uniform(n: int, d: int, seed: int) -> Dataset:
    """Dense dataset of n rows, d dims, values uniform on [0, 1) (PCG64)."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    return Dataset.from_dense(rng.random((n, d), dtype=np.float32), validate=False)


def generate_itemsets(
    n: int, universe: int, min_items: int, max_items: int, seed: int
) -> Dataset:
    """Sparse dataset: n records of min_items..max_items distinct sorted ids."""
    if n < 1 or universe < max_items or min_items < 1 or max_items < min_items:
        raise ValueError("invalid itemset generator parameters")
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        size = int(rng.integers(min_items, max_items + 1))
        records.append(np.sort(rng.choice(universe, size=size, replace=False)))
    return Dataset.from_itemsets(records, universe=universe, validate=False)


def sample_distinct(rng, n: int, k: int, exclude: int = -1) -> np.ndarray:
    """k distinct draws from 0..n-1, optionally excluding one value."""
    pool = n - 1 if 0 <= exclude < n else n
    if k > pool:
        raise ValueError("not enough values to sample from")
    out = rng.choice(pool, size=k, replace=False).astype(np.int64)
    if 0 <= exclude < n:
        out[out >= exclude] += 1
    return out
