"""Baseline graph builders: NN-Descent and the brute-force oracle.

NN-Descent refines a random k-NN graph by the principle that a
neighbor's neighbor is likely a neighbor: each round joins every
vertex's forward and (sampled) reverse lists into a neighborhood,
cross-compares the pairs in it that involve at least one new entry, and
applies bounded sorted insertion both ways. The round's accepted-update
count drives termination.

The same round engine is reused by the merge module with restricted
pair admissibility, so all instrumentation (distance counting, pair
provenance hooks, per-round reports) lives here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .core import Dataset, DistanceCounter, Metric, distance, sample_distinct
from .graph import KnnGraph

logger = logging.getLogger(__name__)

_CHUNK_PAIRS = 4_000_000


@dataclass
class DescentParams:
    """Knobs for NN-Descent style iteration.

    min_update_fraction stops a run once a round accepts no more than
    that fraction of n*k updates; 0 reproduces the literal run-to-zero
    loop of the base method.
    """

    k: int
    max_iters: int = 50
    min_update_fraction: float = 0.001

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0.0 <= self.min_update_fraction < 1.0:
            raise ValueError("min_update_fraction must be in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class RoundStats:
    iteration: int
    pairs: int
    updates: int
    phi: float
    distance_count: int


@dataclass
class BuildReport:
    """Per-round trace of a build or merge run."""

    phi_initial: float = 0.0
    rounds: list[RoundStats] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rounds)

    @property
    def final_phi(self) -> float:
        return self.rounds[-1].phi if self.rounds else self.phi_initial


def _phi_arrays(dists, sizes, k) -> float:
    if dists.size == 0:
        return 0.0
    mask = np.arange(k)[None, :] < sizes[:, None]
    return float(np.where(mask, dists, 0.0).sum())


def _eval_pairs(sub: Dataset, metric: Metric, pa, pb, counter, on_pair, gids):
    """Distances for local-index pairs, tallying one evaluation per pair.

    With an on_pair hook installed the pairs run one by one through the
    public scalar ``distance`` (bit-identical values), so tests can attach
    shadow counters and provenance recorders.
    """
    if pa.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if on_pair is None:
        if sub.kind == "dense":
            d = _k.pair_dists_dense(sub.vectors, pa, pb, int(metric))
        else:
            d = _k.pair_dists_sparse(sub.indptr, sub.items, pa, pb)
        counter.add(pa.shape[0])
        return d
    d = np.empty(pa.shape[0], dtype=np.float64)
    for t in range(pa.shape[0]):
        a = int(pa[t])
        b = int(pb[t])
        d[t] = distance(metric, sub.record(a), sub.record(b), counter)
        on_pair(int(gids[a]), int(gids[b]), float(d[t]))
    return d


def _descent_rounds(
    sub: Dataset,
    metric: Metric,
    ids,
    dists,
    flags,
    sizes,
    labels,
    mode: int,
    k: int,
    params,
    rng,
    counter,
    on_pair,
    gids,
    report: BuildReport | None,
) -> None:
    """Iterate local-join rounds in place until convergence.

    Pair admissibility: at least one member new-flagged, plus the label
    discipline selected by ``mode``. Updates apply in canonical pair
    order, so runs are reproducible at any thread count.
    """
    n = ids.shape[0]
    threshold = params.min_update_fraction * n * k
    for it in range(1, params.max_iters + 1):
        round_seed = int(rng.integers(0, 2**63 - 1))
        rindptr, rids, rnew = _k.reverse_csr(ids, flags, sizes)
        nbh, nnew, nlen = _k.assemble_neighborhoods(
            ids, flags, sizes, rindptr, rids, rnew, k, round_seed
        )
        flags[:, :] = False
        counts = _k.count_pairs(nbh, nnew, nlen, labels, mode, 0, n)
        bounds = np.concatenate(([0], np.cumsum(counts)))
        total_pairs = int(bounds[-1])
        accepted = 0
        lo = 0
        while lo < n:
            hi = int(
                np.searchsorted(bounds, bounds[lo] + _CHUNK_PAIRS, side="left")
            )
            hi = max(hi, lo + 1)
            hi = min(hi, n)
            chunk_total = int(bounds[hi] - bounds[lo])
            if chunk_total > 0:
                offsets = bounds[lo:hi] - bounds[lo]
                pa, pb = _k.fill_pairs(
                    nbh, nnew, nlen, labels, mode, lo, hi, offsets, chunk_total
                )
                pd = _eval_pairs(sub, metric, pa, pb, counter, on_pair, gids)
                accepted += int(
                    _k.apply_updates_grouped(ids, dists, flags, sizes, k, pa, pb, pd)
                )
            lo = hi
        cur_phi = _phi_arrays(dists, sizes, k)
        logger.info(
            "iter=%d pairs=%d updates=%d phi=%.6f dists=%d",
            it, total_pairs, accepted, cur_phi, counter.count,
        )
        if report is not None:
            report.rounds.append(
                RoundStats(it, total_pairs, accepted, cur_phi, counter.count)
            )
        if accepted <= threshold:
            if report is not None:
                report.converged = True
            return
    if report is not None:
        report.converged = False


def _resolve_members(dataset: Dataset, member_ids) -> np.ndarray:
    if member_ids is None:
        return np.arange(dataset.n, dtype=np.int64)
    gids = np.asarray(member_ids, dtype=np.int64)
    gids = np.unique(gids)
    if gids.size and (gids[0] < 0 or gids[-1] >= dataset.n):
        raise ValueError("member ids outside the dataset")
    return gids


def _random_lists(rng, n: int, k: int) -> np.ndarray:
    """n rows of k distinct local ids, self excluded, uniform per row."""
    if 4 * k * k >= n:
        out = np.empty((n, k), dtype=np.int64)
        for u in range(n):
            out[u] = sample_distinct(rng, n, k, exclude=u)
        return out
    cand = rng.integers(0, n - 1, size=(n, k))
    cand += cand >= np.arange(n)[:, None]
    while True:
        srt = np.sort(cand, axis=1)
        bad = (np.diff(srt, axis=1) == 0).any(axis=1)
        if not bad.any():
            return cand
        rows = np.nonzero(bad)[0]
        redraw = rng.integers(0, n - 1, size=(rows.size, k))
        redraw += redraw >= rows[:, None]
        cand[rows] = redraw


def _export_graph(gids, k, metric, ids, dists, sizes) -> KnnGraph:
    """Local-index arrays -> public graph in global id space.

    gids is ascending, so per-row (dist, local id) order coincides with
    (dist, global id) order and rows can be mapped without re-sorting.
    """
    g = KnnGraph(gids, k, metric)
    if k > 0:
        g.ids = np.where(ids >= 0, gids.astype(np.int32)[np.maximum(ids, 0)], -1)
        g.dists = dists.copy()
    g.sizes = sizes.astype(np.int32).copy()
    return g


def nn_descent(
    dataset: Dataset,
    metric: Metric,
    params: DescentParams,
    seed: int,
    member_ids=None,
    counter: DistanceCounter | None = None,
    on_pair=None,
    return_report: bool = False,
):
    """Approximate k-NN graph by NN-Descent from a random initial graph."""
    metric = Metric(metric)
    metric.check_kind(dataset.kind)
    gids = _resolve_members(dataset, member_ids)
    n = gids.shape[0]
    k = params.k
    if n < 2:
        raise ValueError("need at least 2 members")
    if k >= n:
        raise ValueError(f"k={k} must be below the member count {n}")
    if counter is None:
        counter = DistanceCounter()
    rng = np.random.default_rng(seed)
    sub = dataset.take(gids)

    ids = np.full((n, k), -1, dtype=np.int32)
    dists = np.full((n, k), np.inf, dtype=np.float64)
    flags = np.zeros((n, k), dtype=np.bool_)
    sizes = np.zeros(n, dtype=np.int32)
    cand = _random_lists(rng, n, k)
    rows = np.repeat(np.arange(n, dtype=np.int32), k)
    nids = cand.ravel().astype(np.int32)
    nds = _eval_pairs(sub, metric, rows, nids, counter, on_pair, gids)
    _k.apply_updates_directed(ids, dists, flags, sizes, k, rows, nids, nds)

    report = BuildReport(phi_initial=_phi_arrays(dists, sizes, k))
    labels = np.zeros(n, dtype=np.int8)
    _descent_rounds(
        sub, metric, ids, dists, flags, sizes, labels, _k.MODE_ALL, k,
        params, rng, counter, on_pair, gids, report,
    )
    graph = _export_graph(gids, k, metric, ids, dists, sizes)
    if return_report:
        return graph, report
    return graph


def brute_force_graph(
    dataset: Dataset,
    metric: Metric,
    k: int,
    member_ids=None,
    counter: DistanceCounter | None = None,
    on_pair=None,
) -> KnnGraph:
    """Exact k-NN graph: every unordered pair evaluated exactly once.

    Costs n(n-1)/2 evaluations with each value reused for both endpoint
    lists; this is the ground-truth oracle for all recall measurements.
    """
    metric = Metric(metric)
    metric.check_kind(dataset.kind)
    gids = _resolve_members(dataset, member_ids)
    n = gids.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be below the member count {n}")
    if counter is None:
        counter = DistanceCounter()
    sub = dataset.take(gids)
    if on_pair is not None:
        # reference route: the public scalar metric plus list insertion
        from .graph import NeighborList, update_nn

        lists = [NeighborList(k, owner=u) for u in range(n)]
        for j in range(n):
            for i in range(j):
                d = distance(metric, sub.record(i), sub.record(j), counter)
                on_pair(int(gids[i]), int(gids[j]), float(d))
                update_nn(lists[j], i, d)
                update_nn(lists[i], j, d)
        ids = np.full((n, k), -1, dtype=np.int32)
        dists = np.full((n, k), np.inf, dtype=np.float64)
        sizes = np.zeros(n, dtype=np.int32)
        for u in range(n):
            for t, e in enumerate(lists[u].entries):
                ids[u, t] = e.id
                dists[u, t] = e.dist
            sizes[u] = len(lists[u].entries)
    else:
        if sub.kind == "dense":
            ids, dists, sizes = _k.bf_graph_dense(sub.vectors, k, int(metric))
        else:
            ids, dists, sizes = _k.bf_graph_sparse(sub.indptr, sub.items, n, k)
        counter.add(n * (n - 1) // 2)
    return _export_graph(gids, k, metric, ids, dists, sizes)


def brute_force_queries(
    dataset: Dataset,
    metric: Metric,
    queries: Dataset,
    k: int,
    counter: DistanceCounter | None = None,
):
    """Exact top-k (ids, dists) for every query record against the dataset."""
    metric = Metric(metric)
    metric.check_kind(dataset.kind)
    metric.check_kind(queries.kind)
    if k > dataset.n:
        raise ValueError("k exceeds dataset size")
    if counter is None:
        counter = DistanceCounter()
    if dataset.kind == "dense":
        ids, dists, _ = _k.bf_queries_dense(
            dataset.vectors, queries.vectors, k, int(metric)
        )
    else:
        ids, dists, _ = _k.bf_queries_sparse(
            dataset.indptr, dataset.items, queries.indptr, queries.items,
            dataset.n, k,
        )
    counter.add(queries.n * dataset.n)
    return ids.astype(np.int64), dists
