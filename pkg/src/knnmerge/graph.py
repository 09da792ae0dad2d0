"""The k-NN graph structure and its primitive operations.

A KnnGraph keeps one capacity-bounded neighbor list per member vertex,
stored row-wise in flat arrays (see ``_kernels``) for the compiled paths.
Lists are sorted ascending by (distance, id) and hold no duplicate ids;
ties in distance order by ascending id so single runs are reproducible.

``update_nn`` here is the reference implementation of bounded sorted
insertion on a standalone NeighborList; the compiled kernel used inside
builds mirrors its semantics exactly and the test-suite cross-checks the
two routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as _k
from .core import Metric


class Neighbor(NamedTuple):
    id: int
    dist: float
    is_new: bool = False


@dataclass
class NeighborList:
    """Capacity-bounded list of neighbors sorted ascending by (dist, id)."""

    capacity: int
    entries: list[Neighbor] = field(default_factory=list)
    owner: int | None = None

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValueError("capacity must be non-negative")

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[int]:
        return [e.id for e in self.entries]

    def dists(self) -> list[float]:
        return [e.dist for e in self.entries]


def update_nn(nlist: NeighborList, nid: int, dist: float) -> bool:
    """Insert (nid, dist) keeping the list sorted, deduped and bounded.

    Returns False when nid is already present or when the list is full and
    dist is not strictly below the worst entry; otherwise inserts with the
    new-flag set, evicting the worst entry if needed, and returns True.
    """
    if nlist.owner is not None and nid == nlist.owner:
        raise ValueError("cannot insert a vertex into its own list")
    if not (math.isfinite(dist) and dist >= 0.0):
        raise ValueError("distance must be finite and non-negative")
    entries = nlist.entries
    if nlist.capacity == 0:
        return False
    if len(entries) == nlist.capacity and dist >= entries[-1].dist:
        return False
    for e in entries:
        if e.id == nid:
            return False
    pos = len(entries)
    for t, e in enumerate(entries):
        if dist < e.dist or (dist == e.dist and nid < e.id):
            pos = t
            break
    entries.insert(pos, Neighbor(nid, dist, True))
    if len(entries) > nlist.capacity:
        entries.pop()
    return True


class KnnGraph:
    """One NeighborList per member vertex, plus the metric and capacity k.

    ``member_ids`` is the sorted array of global dataset ids this graph
    covers; neighbor ids always refer to that global id space. Rows are
    stored in member order.
    """

    def __init__(self, member_ids, k: int, metric: Metric):
        self.member_ids = np.asarray(member_ids, dtype=np.int64)
        if self.member_ids.ndim != 1:
            raise ValueError("member_ids must be 1-D")
        if self.member_ids.size > 1 and np.any(np.diff(self.member_ids) <= 0):
            raise ValueError("member_ids must be strictly ascending")
        self.k = int(k)
        self.metric = Metric(metric)
        n = self.member_ids.shape[0]
        self.ids = np.full((n, self.k), -1, dtype=np.int32)
        self.dists = np.full((n, self.k), np.inf, dtype=np.float64)
        self.flags = np.zeros((n, self.k), dtype=np.bool_)
        self.sizes = np.zeros(n, dtype=np.int32)

    @property
    def n(self) -> int:
        return self.member_ids.shape[0]

    def row_of(self, gid: int) -> int:
        """Row index of a global vertex id; raises if not a member."""
        pos = int(np.searchsorted(self.member_ids, gid))
        if pos >= self.n or self.member_ids[pos] != gid:
            raise KeyError(f"vertex {gid} is not a member of this graph")
        return pos

    def neighbor_list(self, gid: int) -> NeighborList:
        """A standalone copy of gid's list (edits do not write back)."""
        row = self.row_of(gid)
        sz = int(self.sizes[row])
        entries = [
            Neighbor(int(self.ids[row, t]), float(self.dists[row, t]),
                     bool(self.flags[row, t]))
            for t in range(sz)
        ]
        return NeighborList(self.k, entries, owner=int(gid))

    def set_list(self, gid: int, nlist: NeighborList) -> None:
        row = self.row_of(gid)
        if len(nlist.entries) > self.k:
            raise ValueError("list exceeds graph capacity")
        self.ids[row].fill(-1)
        self.dists[row].fill(np.inf)
        self.flags[row].fill(False)
        for t, e in enumerate(nlist.entries):
            self.ids[row, t] = e.id
            self.dists[row, t] = e.dist
            self.flags[row, t] = e.is_new
        self.sizes[row] = len(nlist.entries)

    def neighbor_ids(self) -> list[list[int]]:
        """Per-member top lists of global neighbor ids, in member order."""
        return [
            [int(v) for v in self.ids[r, : self.sizes[r]]] for r in range(self.n)
        ]

    def copy(self) -> "KnnGraph":
        g = KnnGraph(self.member_ids.copy(), self.k, self.metric)
        g.ids = self.ids.copy()
        g.dists = self.dists.copy()
        g.flags = self.flags.copy()
        g.sizes = self.sizes.copy()
        return g

    def with_capacity(self, k: int) -> "KnnGraph":
        """Copy with a new capacity; lists are truncated when k shrinks."""
        g = KnnGraph(self.member_ids.copy(), k, self.metric)
        keep = min(k, self.k)
        g.ids[:, :keep] = self.ids[:, :keep]
        g.dists[:, :keep] = self.dists[:, :keep]
        g.flags[:, :keep] = self.flags[:, :keep]
        g.sizes = np.minimum(self.sizes, keep).astype(np.int32)
        return g

    def clear_flags(self) -> None:
        self.flags.fill(False)

    def validate(self) -> None:
        """Assert every structural invariant; raises AssertionError on breach."""
        member_set = set(int(v) for v in self.member_ids)
        for r in range(self.n):
            sz = int(self.sizes[r])
            assert sz <= self.k, f"row {r} exceeds capacity"
            row_ids = self.ids[r, :sz]
            row_dists = self.dists[r, :sz]
            assert len(set(row_ids.tolist())) == sz, f"row {r} has duplicate ids"
            assert int(self.member_ids[r]) not in row_ids, f"row {r} lists itself"
            for t in range(sz):
                assert int(row_ids[t]) in member_set, f"row {r} foreign neighbor"
                assert np.isfinite(row_dists[t]) and row_dists[t] >= 0.0
                if t > 0:
                    prev = (row_dists[t - 1], row_ids[t - 1])
                    cur = (row_dists[t], row_ids[t])
                    assert prev <= cur, f"row {r} not sorted by (dist, id)"
            assert np.all(self.ids[r, sz:] == -1)
            assert np.all(np.isinf(self.dists[r, sz:]))

    def __repr__(self) -> str:
        return (
            f"KnnGraph(n={self.n}, k={self.k}, metric={self.metric.name})"
        )


@dataclass
class SplitGraph:
    """Front/rear partition of a graph's sorted lists at position k1."""

    head: KnnGraph
    tail: KnnGraph


def split(graph: KnnGraph, k1: int) -> SplitGraph:
    """Split each sorted list into its first k1 entries and the remainder.

    Concatenating head and tail rows reproduces the original lists. k1 may
    be 0 (empty heads) up to k (empty tails); the kept-ratio sweep in the
    bench harness exercises the k1 = 0 end.
    """
    if not 0 <= k1 <= graph.k:
        raise ValueError(f"k1 must be in [0, {graph.k}], got {k1}")
    head = KnnGraph(graph.member_ids.copy(), k1, graph.metric)
    tail = KnnGraph(graph.member_ids.copy(), graph.k - k1, graph.metric)
    head.sizes = np.minimum(graph.sizes, k1).astype(np.int32)
    tail.sizes = (graph.sizes - head.sizes).astype(np.int32)
    if k1 > 0:
        head.ids[:, :] = graph.ids[:, :k1]
        head.dists[:, :] = graph.dists[:, :k1]
        head.flags[:, :] = graph.flags[:, :k1]
    if graph.k - k1 > 0:
        tail.ids[:, :] = graph.ids[:, k1:]
        tail.dists[:, :] = graph.dists[:, k1:]
        tail.flags[:, :] = graph.flags[:, k1:]
    # padding beyond each row's size must stay canonical
    for g in (head, tail):
        for r in range(g.n):
            g.ids[r, g.sizes[r]:] = -1
            g.dists[r, g.sizes[r]:] = np.inf
            g.flags[r, g.sizes[r]:] = False
    return SplitGraph(head, tail)


def reverse(graph: KnnGraph, cap: int | None = None, rng=None,
            with_dists: bool = False):
    """Reverse adjacency: j lists i exactly when i appears in j's list.

    Returns {global id: [global ids]} (or [(id, dist)] with distances).
    When ``cap`` is given, longer reverse lists are uniformly subsampled
    with ``rng``; builds use the compiled equivalent of this operation.
    """
    out = {int(g): [] for g in graph.member_ids}
    for r in range(graph.n):
        src = int(graph.member_ids[r])
        for t in range(int(graph.sizes[r])):
            tgt = int(graph.ids[r, t])
            if with_dists:
                out[tgt].append((src, float(graph.dists[r, t])))
            else:
                out[tgt].append(src)
    if cap is not None:
        if rng is None:
            rng = np.random.default_rng(0)
        for gid, lst in out.items():
            if len(lst) > cap:
                pick = rng.choice(len(lst), size=cap, replace=False)
                out[gid] = [lst[int(p)] for p in sorted(pick)]
    return out


def merge_rear(u: KnnGraph, tail: KnnGraph) -> KnnGraph:
    """Per-vertex sorted merge of u's lists with rear lists, truncated to k.

    Tail members must be a subset of u's members; vertices without a rear
    list keep their current entries. Duplicate ids keep one entry.
    """
    if not np.all(np.isin(tail.member_ids, u.member_ids)):
        raise ValueError("tail vertices must be members of the merged graph")
    rows = np.searchsorted(u.member_ids, tail.member_ids)
    rk = max(tail.k, 1)
    rids = np.full((u.n, rk), -1, dtype=np.int32)
    rdists = np.full((u.n, rk), np.inf, dtype=np.float64)
    rsizes = np.zeros(u.n, dtype=np.int32)
    if tail.k > 0:
        rids[rows] = tail.ids
        rdists[rows] = tail.dists
        rsizes[rows] = tail.sizes
    out = KnnGraph(u.member_ids.copy(), u.k, u.metric)
    out.ids, out.dists, out.sizes = _k.merge_rear_rows(
        u.ids, u.dists, u.sizes, rids, rdists, rsizes, u.k
    )
    return out


def phi(graph: KnnGraph) -> float:
    """Sum of all stored neighbor distances (the descent objective).

    Short lists contribute the partial sum of their present entries; the
    empty graph sums to 0.
    """
    if graph.n == 0 or graph.k == 0:
        return 0.0
    mask = np.arange(graph.k)[None, :] < graph.sizes[:, None]
    return float(np.where(mask, graph.dists, 0.0).sum())
