"""Quality and cost metrics: recall@k, scanning rate, paired-run reports.

recall@k treats each top-k list as a set of ids and averages the
per-vertex overlap with the ground-truth lists over n*k. The scanning
rate divides the tallied distance evaluations by the n(n-1)/2 cost of a
full brute-force pass, so brute force scores exactly 1. Paired-run
reports put merge runs next to a designated baseline to expose the cost
ratio the merge strategies are designed around.
"""

from __future__ import annotations

import csv
import dataclasses
from typing import Mapping

import numpy as np

from .core import Dataset, DistanceCounter, Metric


def _as_count(counter) -> int:
    if isinstance(counter, DistanceCounter):
        return counter.count
    return int(counter)


def recall_at_k(results, truth, k: int) -> float:
    """Mean per-list overlap of evaluated vs truth top-k ids, in [0, 1].

    ``results`` and ``truth`` are aligned sequences of id lists (or 2-D
    arrays); truth lists must hold at least k entries.
    """
    if len(results) != len(truth):
        raise ValueError(
            f"misaligned lists: {len(results)} results vs {len(truth)} truth"
        )
    if len(truth) == 0:
        raise ValueError("empty evaluation")
    hits = 0
    for got, want in zip(results, truth):
        want = [int(v) for v in want]
        if len(want) < k:
            raise ValueError("truth list shorter than k")
        want_set = set(want[:k])
        got = [int(v) for v in got[:k]]
        hits += len(want_set.intersection(got))
    return hits / (len(truth) * k)


def scanning_rate(counter, n: int) -> float:
    """Distance evaluations relative to one full pairwise pass."""
    if n < 2:
        raise ValueError("scanning rate needs n >= 2")
    return _as_count(counter) / (n * (n - 1) / 2.0)


def ratio_report(runs: Mapping[str, tuple], n: int, baseline: str | None = None):
    """Rows of (name, scanning rate, recall, rate ratio vs baseline).

    ``runs`` maps a run name to its (counter, recall) pair; the baseline
    defaults to the first run. Rows keep the mapping's order.
    """
    if not runs:
        raise ValueError("no runs to report")
    names = list(runs)
    if baseline is None:
        baseline = names[0]
    if baseline not in runs:
        raise ValueError(f"baseline {baseline!r} is not among the runs")
    base_rate = scanning_rate(runs[baseline][0], n)
    rows = []
    for name in names:
        counter, recall = runs[name]
        rate = scanning_rate(counter, n)
        rows.append(
            {
                "name": name,
                "scanning_rate": rate,
                "recall": recall,
                "ratio_vs_baseline": rate / base_rate if base_rate else float("inf"),
            }
        )
    return rows


RATIO_CSV_HEADER = ["name", "scanning_rate", "recall", "ratio_vs_baseline"]


def write_ratio_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RATIO_CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def estimate_complexity_exponent(ns, counts) -> float:
    """Log-log regression slope of distance counts against n.

    Diagnostic only: nothing at runtime consumes the exponent, but the
    bench harness reports it alongside sweep results.
    """
    ns = np.asarray(ns, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if ns.shape[0] < 2:
        raise ValueError("need at least two sizes")
    slope, _ = np.polyfit(np.log(ns), np.log(counts), 1)
    return float(slope)


@dataclasses.dataclass
class SweepCell:
    algo: str
    r: float
    ratio: str
    recalls: list[float]
    rates: list[float]

    @property
    def recall_mean(self) -> float:
        return float(np.mean(self.recalls))

    @property
    def recall_std(self) -> float:
        return float(np.std(self.recalls))

    @property
    def rate_mean(self) -> float:
        return float(np.mean(self.rates))


def merge_sweep(
    dataset: Dataset,
    metric: Metric,
    k: int,
    r_values,
    size_ratios,
    repeats: int,
    base_seed: int = 0,
    algorithms=("smerge", "jmerge"),
    eval_k: int = 10,
    min_update_fraction: float = 0.001,
    max_iters: int = 50,
    truth_ids=None,
) -> list[SweepCell]:
    """Kept-ratio ablation grid over subset size ratios, seeded repeats.

    For each (size ratio, repeat) the subset split and its subgraphs are
    built once and reused across every r cell, mirroring how the sweep
    would be run by hand. Returns one SweepCell per (algo, r, ratio).
    """
    from .construct import DescentParams, brute_force_graph, nn_descent
    from .merge import MergeParams, j_merge, s_merge

    n = dataset.n
    if truth_ids is None:
        truth_ids = brute_force_graph(dataset, metric, eval_k).neighbor_ids()
    cells = {
        (algo, float(r), f"{a}/{b}"): SweepCell(algo, float(r), f"{a}/{b}", [], [])
        for algo in algorithms
        for r in r_values
        for a, b in size_ratios
    }
    dparams = DescentParams(k=k, max_iters=max_iters,
                            min_update_fraction=min_update_fraction)
    for a, b in size_ratios:
        label = f"{a}/{b}"
        for rep in range(repeats):
            seed = base_seed + 7919 * rep + 104729 * (a * 10 + b)
            rng = np.random.default_rng(seed)
            perm = rng.permutation(n)
            n1 = int(round(n * a / (a + b)))
            s1 = np.sort(perm[:n1])
            s2 = np.sort(perm[n1:])
            g1 = nn_descent(dataset, metric, dparams, seed + 1, member_ids=s1)
            g2 = None
            if "smerge" in algorithms:
                g2 = nn_descent(dataset, metric, dparams, seed + 2,
                                member_ids=s2)
            for r in r_values:
                params = MergeParams(
                    k=k, r=float(r), max_iters=max_iters,
                    min_update_fraction=min_update_fraction, seed=seed + 3,
                )
                if "smerge" in algorithms:
                    counter = DistanceCounter()
                    merged = s_merge(dataset, g1.copy(), g2.copy(), params,
                                     counter=counter)
                    rec = recall_at_k(merged.neighbor_ids(), truth_ids, eval_k)
                    cell = cells[("smerge", float(r), label)]
                    cell.recalls.append(rec)
                    cell.rates.append(scanning_rate(counter, n))
                if "jmerge" in algorithms:
                    counter = DistanceCounter()
                    merged = j_merge(dataset, g1.copy(), s2, params,
                                     counter=counter)
                    rec = recall_at_k(merged.neighbor_ids(), truth_ids, eval_k)
                    cell = cells[("jmerge", float(r), label)]
                    cell.recalls.append(rec)
                    cell.rates.append(scanning_rate(counter, n))
    return list(cells.values())


SWEEP_CSV_HEADER = [
    "algo", "r", "ratio", "recall_mean", "recall_std", "rate_mean", "repeats",
]


def write_sweep_csv(path, cells) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for c in cells:
            writer.writerow([
                c.algo, f"{c.r:.6g}", c.ratio, f"{c.recall_mean:.6f}",
                f"{c.recall_std:.6f}", f"{c.rate_mean:.6f}", len(c.recalls),
            ])
