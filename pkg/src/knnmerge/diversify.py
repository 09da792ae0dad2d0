"""Occlusion-based pruning of k-NN lists into search-ready adjacency.

A neighbor e of a is occluded when e sits strictly closer to some
already-kept (and nearer) neighbor d than to a itself; such edges add
little to graph search and are dropped. Candidates are examined in
ascending (distance, id) order and the nearest neighbor is always kept.

Pruning is a pure post-processing pass: the stored k-NN graph is never
mutated. For each vertex the forward list and the (distance-capped)
reverse list are pruned by the same rule and the kept sets are unioned
into a variable out-degree adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .core import Dataset, DistanceCounter, Metric, distance
from .graph import KnnGraph, NeighborList


@dataclass
class LayerAdjacency:
    """Sparse adjacency over a member-id subset, CSR over member rows."""

    member_ids: np.ndarray
    indptr: np.ndarray
    neighbors: np.ndarray

    @property
    def n(self) -> int:
        return self.member_ids.shape[0]

    def row_of(self, gid: int) -> int:
        pos = int(np.searchsorted(self.member_ids, gid))
        if pos >= self.n or self.member_ids[pos] != gid:
            raise KeyError(f"vertex {gid} is not on this layer")
        return pos

    def neighbors_of(self, gid: int) -> np.ndarray:
        r = self.row_of(gid)
        return self.neighbors[self.indptr[r]:self.indptr[r + 1]]

    def degree(self, gid: int) -> int:
        r = self.row_of(gid)
        return int(self.indptr[r + 1] - self.indptr[r])

    def max_degree(self) -> int:
        return int(np.max(np.diff(self.indptr))) if self.n else 0


def diversify_list(owner: int, nhood, dataset: Dataset, metric: Metric,
                   counter: DistanceCounter | None = None) -> list[int]:
    """Kept neighbor ids for one neighborhood, in examination order.

    ``nhood`` must be sorted ascending by distance to the owner (a
    NeighborList or a sequence of (id, dist) pairs). A candidate is kept
    iff it is at least as close to the owner as to every already-kept
    neighbor; ties keep.
    """
    if counter is None:
        counter = DistanceCounter()
    metric = Metric(metric)
    if isinstance(nhood, NeighborList):
        entries = [(e.id, e.dist) for e in nhood.entries]
    else:
        entries = [(int(i), float(d)) for i, d in nhood]
    d_prev = None
    for _, d in entries:
        if d_prev is not None and d < d_prev:
            raise ValueError("neighborhood must be sorted ascending by distance")
        d_prev = d
    kept: list[int] = []
    for nid, dist_owner in entries:
        ok = True
        for c in kept:
            d = distance(metric, dataset.record(nid), dataset.record(c), counter)
            if d < dist_owner:
                ok = False
                break
        if ok:
            kept.append(nid)
    return kept


def _forward_csr(graph: KnnGraph):
    """Local-index CSR view of the graph's sorted lists."""
    n = graph.n
    sizes = graph.sizes.astype(np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    local = np.searchsorted(graph.member_ids, np.maximum(graph.ids, 0)).astype(
        np.int32
    )
    mask = np.arange(graph.k)[None, :] < sizes[:, None]
    return indptr, local[mask], graph.dists[mask]


def _diversify_csr(indptr, nids, ndists, sub: Dataset, metric: Metric):
    if sub.kind == "dense":
        return _k.diversify_csr_dense(indptr, nids, ndists, sub.vectors,
                                      int(metric))
    return _k.diversify_csr_sparse(indptr, nids, ndists, sub.indptr, sub.items)


def diversify_graph(
    graph: KnnGraph,
    dataset: Dataset,
    counter: DistanceCounter | None = None,
    max_degree: int | None = None,
) -> LayerAdjacency:
    """Prune a whole graph into sparse search adjacency.

    Per vertex: prune the forward list; prune the reverse list (capped at
    the k nearest reverse neighbors) by the same rule; union the two kept
    sets. The input graph is left untouched. ``max_degree`` optionally
    truncates each union to its nearest entries; by default out-degree is
    unbounded (at most forward k + reverse k).
    """
    if counter is None:
        counter = DistanceCounter()
    metric = Metric(graph.metric)
    metric.check_kind(dataset.kind)
    sub = dataset.take(graph.member_ids)

    f_indptr, f_ids, f_dists = _forward_csr(graph)
    f_keep, f_evals = _diversify_csr(f_indptr, f_ids, f_dists, sub, metric)

    local_ids = np.searchsorted(graph.member_ids,
                                np.maximum(graph.ids, 0)).astype(np.int32)
    local_ids = np.where(graph.ids >= 0, local_ids, -1)
    r_indptr, r_ids, r_dists = _k.reverse_csr_with_dists(
        local_ids, graph.dists, graph.sizes
    )
    r_indptr, r_ids, r_dists = _k.cap_nearest_csr(r_indptr, r_ids, r_dists,
                                                  graph.k)
    r_keep, r_evals = _diversify_csr(r_indptr, r_ids, r_dists, sub, metric)
    counter.add(int(f_evals) + int(r_evals))

    cap = max_degree if max_degree is not None else -1
    o_indptr, o_ids = _k.union_kept_csr(
        f_indptr, f_ids, f_dists, f_keep,
        r_indptr, r_ids, r_dists, r_keep, cap,
    )
    neighbors = np.where(
        o_ids >= 0,
        graph.member_ids.astype(np.int32)[np.maximum(o_ids, 0)],
        -1,
    )
    return LayerAdjacency(graph.member_ids.copy(), o_indptr, neighbors)


def diversify_hierarchy(
    hierarchy,
    dataset: Dataset,
    counter: DistanceCounter | None = None,
    max_degree: int | None = None,
):
    """Prune every layer graph of a hierarchy, filling layer.adjacency."""
    if counter is None:
        counter = DistanceCounter()
    for t, layer in enumerate(hierarchy.layers):
        graph = hierarchy.layer_graph(t)
        layer.adjacency = diversify_graph(graph, dataset, counter=counter,
                                          max_degree=max_degree)
    return hierarchy
