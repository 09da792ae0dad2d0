"""Two-stage hierarchical NN search and flat best-first search.

Stage one walks the non-bottom layers greedily: starting from a random
(or pinned) top-layer vertex, it hops to whichever neighbor is closest
to the query until no neighbor improves, then carries the local optimum
down as the next layer's starting point. Stage two runs best-first
expansion over the bottom layer, keeping a bounded pool of the best
scored vertices and expanding them until none is left unexpanded.

Search is read-only over immutable adjacency; every function counts the
exact number of metric evaluations it spends per query and never scores
the same vertex twice within a query (a per-query score cache is shared
across the stages, whose layer member sets are nested).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .core import Dataset, DistanceCounter, Metric
from .diversify import LayerAdjacency


@dataclass
class SearchParams:
    """pool_size bounds the bottom-stage candidate pool (the search-time k);
    seed drives random entry/seed selection; entry pins the top-layer
    entry vertex for reproducible benchmarking."""

    pool_size: int
    seed: int | None = None
    entry: int | None = None

    def __post_init__(self) -> None:
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


@dataclass
class SearchResult:
    neighbors: list[tuple[int, float]]
    distance_evals: int

    def ids(self) -> list[int]:
        return [i for i, _ in self.neighbors]


def _query_dists(dataset: Dataset, metric: Metric, query, gids,
                 counter: DistanceCounter) -> np.ndarray:
    gids = np.asarray(gids, dtype=np.int64)
    if gids.size == 0:
        return np.empty(0, dtype=np.float64)
    if dataset.kind == "dense":
        query = np.ascontiguousarray(query, dtype=np.float32)
        out = _k.query_dists_dense(dataset.vectors, query, gids, int(metric))
    else:
        query = np.ascontiguousarray(query, dtype=np.int32)
        out = _k.query_dists_sparse(dataset.indptr, dataset.items, query, gids)
    counter.add(gids.size)
    return out


def _score(dataset, metric, query, gids, counter, cache) -> None:
    """Memoize query distances for any ids not in the per-query cache."""
    fresh = [int(v) for v in gids if int(v) not in cache]
    if fresh:
        ds = _query_dists(dataset, metric, query, fresh, counter)
        for v, d in zip(fresh, ds):
            cache[v] = float(d)


def greedy_descend(
    adjacency: LayerAdjacency,
    dataset: Dataset,
    metric: Metric,
    query,
    start: int,
    counter: DistanceCounter | None = None,
    cache: dict | None = None,
) -> int:
    """Hill-climb toward the query on one layer; returns the local optimum.

    Moves to the adjacency neighbor closest to the query while that
    strictly improves on the current vertex. Each vertex is scored at
    most once per query; a shared ``cache`` carries scores across the
    stages of a hierarchical search (layer member sets are nested, so
    revisits are common).
    """
    if counter is None:
        counter = DistanceCounter()
    if cache is None:
        cache = {}
    metric = Metric(metric)
    cur = int(start)
    _score(dataset, metric, query, [cur], counter, cache)
    cur_d = cache[cur]
    while True:
        nbrs = adjacency.neighbors_of(cur)
        _score(dataset, metric, query, nbrs, counter, cache)
        best = cur
        best_d = cur_d
        for v in nbrs:
            d = cache[int(v)]
            if d < best_d or (d == best_d and int(v) < best):
                best = int(v)
                best_d = d
        if best_d < cur_d:
            cur = best
            cur_d = best_d
        else:
            return cur


def best_first_search(
    adjacency: LayerAdjacency,
    dataset: Dataset,
    metric: Metric,
    query,
    seeds,
    params: SearchParams,
    counter: DistanceCounter | None = None,
    cache: dict | None = None,
) -> SearchResult:
    """Best-first expansion over the bottom layer from the given seeds.

    The pool holds the pool_size best scored vertices with expanded
    flags; the loop expands the best unexpanded entry, scores its unseen
    neighbors, and stops once every pool entry has been expanded. A
    shared per-query ``cache`` (from an earlier descent stage) supplies
    already-known distances without re-evaluating the metric.
    """
    if counter is None:
        counter = DistanceCounter()
    if cache is None:
        cache = {}
    metric = Metric(metric)
    seeds = [int(s) for s in dict.fromkeys(int(v) for v in seeds)]
    if not seeds:
        raise ValueError("seeds must be nonempty")
    enqueued: set[int] = set(seeds)
    _score(dataset, metric, query, seeds, counter, cache)
    pool: list[list] = []  # [dist, gid, expanded], kept sorted by (dist, gid)
    for v in seeds:
        _pool_insert(pool, cache[v], v, params.pool_size)
    while True:
        entry = None
        for e in pool:
            if not e[2]:
                entry = e
                break
        if entry is None:
            break
        entry[2] = True
        nbrs = adjacency.neighbors_of(entry[1])
        fresh = [int(v) for v in nbrs if int(v) not in enqueued]
        if not fresh:
            continue
        enqueued.update(fresh)
        _score(dataset, metric, query, fresh, counter, cache)
        for v in fresh:
            _pool_insert(pool, cache[v], v, params.pool_size)
    return SearchResult(
        neighbors=[(e[1], e[0]) for e in pool],
        distance_evals=counter.count,
    )


def _pool_insert(pool: list, d: float, gid: int, cap: int) -> None:
    if len(pool) == cap and (d, gid) >= (pool[-1][0], pool[-1][1]):
        return
    pos = len(pool)
    for t, e in enumerate(pool):
        if (d, gid) < (e[0], e[1]):
            pos = t
            break
    pool.insert(pos, [d, gid, False])
    if len(pool) > cap:
        pool.pop()


def hierarchical_search(
    hierarchy,
    dataset: Dataset,
    metric: Metric,
    query,
    params: SearchParams,
    rng=None,
    counter: DistanceCounter | None = None,
) -> SearchResult:
    """Top-down search: greedy descent through the non-bottom layers, then
    best-first expansion on the bottom layer seeded with the descent's
    result. Evaluation counts are summed across both stages."""
    layers = hierarchy.layers
    if not layers:
        raise ValueError("hierarchy has no layers")
    for t, layer in enumerate(layers):
        if layer.adjacency is None:
            raise ValueError(f"layer {t} is not diversified")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    local = DistanceCounter()
    cache: dict[int, float] = {}
    if params.entry is not None:
        cur = int(params.entry)
    else:
        top = layers[0].member_ids
        cur = int(top[int(rng.integers(0, top.shape[0]))])
    for layer in layers[:-1]:
        cur = greedy_descend(layer.adjacency, dataset, metric, query, cur,
                             counter=local, cache=cache)
    result = best_first_search(
        layers[-1].adjacency, dataset, metric, query, [cur], params,
        counter=local, cache=cache,
    )
    if counter is not None:
        counter.add(local.count)
    return SearchResult(result.neighbors, local.count)


def flat_search(
    adjacency: LayerAdjacency,
    dataset: Dataset,
    metric: Metric,
    query,
    params: SearchParams,
    rng=None,
    counter: DistanceCounter | None = None,
) -> SearchResult:
    """Single-graph best-first search from pool_size random distinct seeds."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    n = adjacency.n
    count = min(params.pool_size, n)
    seeds = adjacency.member_ids[
        rng.choice(n, size=count, replace=False)
    ]
    local = DistanceCounter()
    result = best_first_search(adjacency, dataset, metric, query, seeds,
                               params, counter=local)
    if counter is not None:
        counter.add(local.count)
    return result


def batch_search(
    index,
    dataset: Dataset,
    metric: Metric,
    queries: Dataset,
    params: SearchParams,
    flat: bool = False,
    counter: DistanceCounter | None = None,
):
    """Run every query through hierarchical or flat search.

    ``index`` is a diversified Hierarchy (hierarchical mode) or a
    LayerAdjacency (flat mode). Returns (results, wall_seconds) with one
    SearchResult and one per-query wall time each.
    """
    rng = np.random.default_rng(params.seed)
    results: list[SearchResult] = []
    walls: list[float] = []
    for q in range(queries.n):
        record = queries.record(q)
        t0 = time.perf_counter()
        if flat:
            res = flat_search(index, dataset, metric, record, params, rng=rng,
                              counter=counter)
        else:
            res = hierarchical_search(index, dataset, metric, record, params,
                                      rng=rng, counter=counter)
        walls.append(time.perf_counter() - t0)
        results.append(res)
    return results, walls
