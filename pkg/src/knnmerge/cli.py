"""Command-line entry point for builds, merges, diversification, search
and benchmark sweeps.

Every command is deterministic given --seed and --threads 1, writes a
.meta.json manifest next to each artifact recording the full parameters,
and finishes with a one-line stats summary on stdout. Relative paths
resolve under $KNNMERGE_DATA_DIR when that variable is set.

Synthetic data comes from numpy's PCG64 generator; L2 distances are
squared euclidean throughout (ordering-equivalent, documented in the
library).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import io
from .core import DistanceCounter, Metric, generate_uniform
from .construct import DescentParams, brute_force_graph, brute_force_queries, nn_descent
from .diversify import diversify_graph, diversify_hierarchy
from .evaluate import (
    estimate_complexity_exponent,
    merge_sweep,
    recall_at_k,
    scanning_rate,
    write_sweep_csv,
)
from .graph import phi
from .merge import MergeParams, h_merge, j_merge, s_merge
from .search import SearchParams, batch_search

ENV_DATA_DIR = "KNNMERGE_DATA_DIR"


def _resolve(path: str | None) -> str | None:
    if path is None:
        return None
    base = os.environ.get(ENV_DATA_DIR)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _set_threads(threads: int | None) -> None:
    if threads and threads > 0:
        import numba

        numba.set_num_threads(threads)


def _stats_line(label: str, wall: float, counter: DistanceCounter, n: int,
                graph=None, iters=None) -> None:
    parts = [f"{label}", f"wall={wall:.3f}s"]
    if n >= 2:
        parts.append(f"scan_rate={scanning_rate(counter, n):.6f}")
    parts.append(f"dists={counter.count}")
    if graph is not None:
        parts.append(f"phi={phi(graph):.6f}")
    if iters is not None:
        parts.append(f"iters={iters}")
    print(" ".join(parts))


def _load_ids(path: str | None, n: int) -> np.ndarray | None:
    if path is None:
        return None
    return io.load_member_ids(_resolve(path))


def _write_graph_out(out: str, graph, args, extra: dict) -> None:
    io.save_graph(out, graph)
    io.save_member_ids(out + ".ids.ivecs", graph.member_ids)
    meta = {"command": args.command, "out": out}
    meta.update({k: v for k, v in vars(args).items() if k != "func"})
    meta.update(extra)
    io.write_manifest(out + ".meta.json", meta)


def cmd_gen(args) -> int:
    out = _resolve(args.out)
    ds = generate_uniform(args.n, args.d, args.seed)
    io.write_fvecs(out, ds.vectors)
    io.write_manifest(out + ".meta.json", {
        "command": "gen", "n": args.n, "d": args.d, "seed": args.seed,
        "generator": "numpy PCG64 default_rng, float32 uniform [0,1)",
    })
    print(f"gen wrote {out} ({args.n}x{args.d})")
    return 0


def cmd_build(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    member_ids = _load_ids(args.ids, dataset.n)
    counter = DistanceCounter()
    params = DescentParams(k=args.k, max_iters=args.max_iters,
                           min_update_fraction=args.min_update_fraction)
    t0 = time.perf_counter()
    graph, report = nn_descent(dataset, metric, params, args.seed,
                               member_ids=member_ids, counter=counter,
                               return_report=True)
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    _write_graph_out(out, graph, args, {"iterations": report.iterations})
    _stats_line("build", wall, counter, graph.n, graph, report.iterations)
    return 0


def cmd_bruteforce(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    member_ids = _load_ids(args.ids, dataset.n)
    counter = DistanceCounter()
    t0 = time.perf_counter()
    graph = brute_force_graph(dataset, metric, args.k, member_ids=member_ids,
                              counter=counter)
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    _write_graph_out(out, graph, args, {})
    io.write_ivecs(out + ".ivecs", np.asarray(graph.neighbor_ids()))
    _stats_line("bruteforce", wall, counter, graph.n, graph)
    return 0


def cmd_smerge(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    ids1 = io.load_member_ids(_resolve(args.ids1))
    ids2 = io.load_member_ids(_resolve(args.ids2))
    g = io.load_graph(_resolve(args.g1), member_ids=ids1)
    h = io.load_graph(_resolve(args.g2), member_ids=ids2)
    params = MergeParams(k=args.k, r=args.r, max_iters=args.max_iters,
                         min_update_fraction=args.min_update_fraction,
                         seed=args.seed)
    counter = DistanceCounter()
    t0 = time.perf_counter()
    merged, report = s_merge(dataset, g, h, params, counter=counter,
                             return_report=True)
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    _write_graph_out(out, merged, args, {"iterations": report.iterations})
    _stats_line("smerge", wall, counter, merged.n, merged, report.iterations)
    return 0


def cmd_jmerge(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    ids1 = io.load_member_ids(_resolve(args.ids1))
    raw = io.load_member_ids(_resolve(args.raw))
    g = io.load_graph(_resolve(args.graph), member_ids=ids1)
    params = MergeParams(k=args.k, r=args.r, max_iters=args.max_iters,
                         min_update_fraction=args.min_update_fraction,
                         seed=args.seed)
    counter = DistanceCounter()
    t0 = time.perf_counter()
    merged, report = j_merge(dataset, g, raw, params, counter=counter,
                             return_report=True)
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    _write_graph_out(out, merged, args, {"iterations": report.iterations})
    _stats_line("jmerge", wall, counter, merged.n, merged, report.iterations)
    return 0


def cmd_hmerge(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    layer_sizes = None
    if args.layers:
        layer_sizes = [
            dataset.n if tok in ("n", "N") else int(tok)
            for tok in args.layers.split(",")
        ]
    params = MergeParams(k=args.k, r=args.r, max_iters=args.max_iters,
                         min_update_fraction=args.min_update_fraction,
                         seed=args.seed)
    counter = DistanceCounter()
    out_dir = _resolve(args.out)
    t0 = time.perf_counter()
    graph, hierarchy = h_merge(dataset, metric, params,
                               layer_sizes=layer_sizes, counter=counter,
                               snapshot_dir=out_dir)
    wall = time.perf_counter() - t0
    io.write_manifest(os.path.join(out_dir, "run.meta.json"), {
        "command": "hmerge", "k": args.k, "r": args.r, "seed": args.seed,
        "layer_sizes": hierarchy.layer_sizes, "metric": metric.name,
        "data": args.data,
    })
    _stats_line("hmerge", wall, counter, graph.n, graph)
    print(f"hmerge wrote {len(hierarchy.layers)} layers to {out_dir}")
    return 0


def cmd_diversify(args) -> int:
    _set_threads(args.threads)
    counter = DistanceCounter()
    t0 = time.perf_counter()
    if args.hierarchy:
        directory = _resolve(args.hierarchy)
        hierarchy = io.load_hierarchy(directory)
        metric = hierarchy.metric
        dataset = io.load_dataset(_resolve(args.data), metric)
        diversify_hierarchy(hierarchy, dataset, counter=counter,
                            max_degree=args.max_degree)
        for t in range(len(hierarchy.layers)):
            io.save_hierarchy_layer(directory, hierarchy, t)
        io.save_hierarchy_manifest(directory, hierarchy)
        wall = time.perf_counter() - t0
        print(f"diversify wall={wall:.3f}s dists={counter.count} "
              f"layers={len(hierarchy.layers)}")
        return 0
    if not args.graph or not args.out:
        raise ValueError("diversify needs --hierarchy, or --graph with --out")
    ids = _load_ids(args.ids, 0)
    graph = io.load_graph(_resolve(args.graph), member_ids=ids)
    dataset = io.load_dataset(_resolve(args.data), graph.metric)
    adjacency = diversify_graph(graph, dataset, counter=counter,
                                max_degree=args.max_degree)
    out = _resolve(args.out)
    io.save_adjacency(out, adjacency)
    io.save_member_ids(out + ".ids.ivecs", adjacency.member_ids)
    io.write_manifest(out + ".meta.json", {
        "command": "diversify", "graph": args.graph,
        "max_degree": args.max_degree,
    })
    wall = time.perf_counter() - t0
    print(f"diversify wall={wall:.3f}s dists={counter.count} "
          f"max_degree={adjacency.max_degree()}")
    return 0


def cmd_search(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    queries = io.load_dataset(_resolve(args.queries), metric)
    truth = io.read_ivecs(_resolve(args.truth)) if args.truth else None
    if args.hierarchy:
        index = io.load_hierarchy(_resolve(args.hierarchy))
        flat = False
        if args.flat:
            index = index.layers[-1].adjacency
            if index is None:
                raise ValueError("hierarchy has no diversified bottom layer")
            flat = True
    else:
        ids = _load_ids(args.ids, dataset.n)
        index = io.load_adjacency(_resolve(args.adjacency), member_ids=ids)
        flat = True
    pools = [int(p) for p in args.pool.split(",")]
    out = _resolve(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pool", "query", "top_ids", "distance_evals",
                         "wall_s"])
        for pool in pools:
            params = SearchParams(pool_size=pool, seed=args.seed,
                                  entry=args.entry)
            t0 = time.perf_counter()
            results, walls = batch_search(index, dataset, metric, queries,
                                          params, flat=flat)
            total = time.perf_counter() - t0
            for q, (res, w) in enumerate(zip(results, walls)):
                writer.writerow([
                    pool, q, " ".join(str(i) for i in res.ids()),
                    res.distance_evals, f"{w:.6f}",
                ])
            qps = queries.n / total if total > 0 else float("inf")
            evals = float(np.mean([r.distance_evals for r in results]))
            line = (f"search pool={pool} qps={qps:.1f} "
                    f"mean_evals={evals:.1f}")
            if truth is not None:
                got = [r.ids()[:1] for r in results]
                want = truth[:, :1].tolist()
                line += f" recall@1={recall_at_k(got, want, 1):.4f}"
            print(line)
    io.write_manifest(out + ".meta.json",
                      {k: v for k, v in vars(args).items() if k != "func"})
    return 0


def cmd_groundtruth(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    dataset = io.load_dataset(_resolve(args.data), metric)
    queries = io.load_dataset(_resolve(args.queries), metric)
    counter = DistanceCounter()
    t0 = time.perf_counter()
    ids, _ = brute_force_queries(dataset, metric, queries, args.k,
                                 counter=counter)
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    io.write_ivecs(out, ids)
    io.write_manifest(out + ".meta.json",
                      {k: v for k, v in vars(args).items() if k != "func"})
    print(f"groundtruth wall={wall:.3f}s dists={counter.count}")
    return 0


def cmd_eval(args) -> int:
    got = io.read_ivecs(_resolve(args.results))
    want = io.read_ivecs(_resolve(args.truth))
    rec = recall_at_k(got.tolist(), want.tolist(), args.k)
    print(f"recall@{args.k}={rec:.6f}")
    return 0


def cmd_bench(args) -> int:
    _set_threads(args.threads)
    metric = Metric.from_name(args.metric)
    if args.data:
        dataset = io.load_dataset(_resolve(args.data), metric)
    else:
        dataset = generate_uniform(args.n, args.d, args.seed)
    r_values = [float(tok) for tok in args.r_values.split(",")]
    ratios = []
    for tok in args.ratios.split(","):
        a, b = tok.split("/")
        ratios.append((int(a), int(b)))
    t0 = time.perf_counter()
    cells = merge_sweep(
        dataset, metric, args.k, r_values, ratios, args.repeats,
        base_seed=args.seed, eval_k=args.eval_k,
        min_update_fraction=args.min_update_fraction,
        max_iters=args.max_iters,
    )
    wall = time.perf_counter() - t0
    out = _resolve(args.out)
    write_sweep_csv(out, cells)
    io.write_manifest(out + ".meta.json",
                      {k: v for k, v in vars(args).items() if k != "func"})
    print(f"bench wall={wall:.1f}s cells={len(cells)} -> {out}")
    if args.rho_sizes:
        sizes = [int(tok) for tok in args.rho_sizes.split(",")]
        counts = []
        for size in sizes:
            sub = generate_uniform(size, args.d, args.seed)
            counter = DistanceCounter()
            nn_descent(sub, metric, DescentParams(k=args.k), args.seed,
                       counter=counter)
            counts.append(counter.count)
        rho = estimate_complexity_exponent(sizes, counts)
        print(f"bench rho_estimate={rho:.3f} sizes={sizes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knnmerge",
        description="k-NN graph construction, merging, and hierarchical search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0 = all cores)")

    p = sub.add_parser("gen", help="generate a uniform fvecs dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    def build_like(name, helptext, func, graph_inputs):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--data", required=True)
        q.add_argument("--metric", default="l2",
                       choices=["l1", "l2", "cosine", "jaccard"])
        q.add_argument("--k", type=int, required=True)
        q.add_argument("--max-iters", type=int, default=50)
        q.add_argument("--min-update-fraction", type=float, default=0.001)
        common(q)
        for flag, required in graph_inputs:
            q.add_argument(flag, required=required)
        q.set_defaults(func=func)
        return q

    q = build_like("build", "NN-Descent build", cmd_build,
                   [("--ids", False)])
    q.add_argument("--out", required=True)

    q = build_like("bruteforce", "exact graph oracle", cmd_bruteforce,
                   [("--ids", False)])
    q.add_argument("--out", required=True)

    q = build_like("smerge", "symmetric merge of two subgraphs", cmd_smerge,
                   [("--g1", True), ("--g2", True), ("--ids1", True),
                    ("--ids2", True)])
    q.add_argument("--r", type=float, default=0.5)
    q.add_argument("--out", required=True)

    q = build_like("jmerge", "joint merge of a raw set into a graph",
                   cmd_jmerge,
                   [("--graph", True), ("--ids1", True), ("--raw", True)])
    q.add_argument("--r", type=float, default=0.5)
    q.add_argument("--out", required=True)

    q = build_like("hmerge", "hierarchical construction", cmd_hmerge, [])
    q.add_argument("--r", type=float, default=0.5)
    q.add_argument("--layers", default=None,
                   help="comma list of layer sizes, e.g. 64,512,4096,n")
    q.add_argument("--out", required=True, help="output directory")

    q = sub.add_parser("diversify", help="occlusion-prune a graph or hierarchy")
    q.add_argument("--data", required=True)
    q.add_argument("--graph")
    q.add_argument("--ids")
    q.add_argument("--hierarchy")
    q.add_argument("--max-degree", type=int, default=None)
    q.add_argument("--out")
    common(q)
    q.set_defaults(func=cmd_diversify)

    q = sub.add_parser("search", help="batch query runner")
    q.add_argument("--data", required=True)
    q.add_argument("--metric", default="l2",
                   choices=["l1", "l2", "cosine", "jaccard"])
    q.add_argument("--queries", required=True)
    q.add_argument("--truth")
    q.add_argument("--hierarchy")
    q.add_argument("--adjacency")
    q.add_argument("--ids")
    q.add_argument("--flat", action="store_true")
    q.add_argument("--pool", default="16",
                   help="comma list of pool sizes to sweep")
    q.add_argument("--entry", type=int, default=None)
    q.add_argument("--out", required=True)
    common(q)
    q.set_defaults(threads=1, func=cmd_search)

    q = sub.add_parser("groundtruth", help="exact query ground truth (ivecs)")
    q.add_argument("--data", required=True)
    q.add_argument("--metric", default="l2",
                   choices=["l1", "l2", "cosine", "jaccard"])
    q.add_argument("--queries", required=True)
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--out", required=True)
    common(q)
    q.set_defaults(func=cmd_groundtruth)

    q = sub.add_parser("eval", help="recall of result lists vs truth")
    q.add_argument("--results", required=True)
    q.add_argument("--truth", required=True)
    q.add_argument("--k", type=int, required=True)
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("bench", help="kept-ratio x size-ratio merge sweep")
    q.add_argument("--data")
    q.add_argument("--metric", default="l2",
                   choices=["l1", "l2", "cosine", "jaccard"])
    q.add_argument("--n", type=int, default=2000)
    q.add_argument("--d", type=int, default=20)
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--eval-k", type=int, default=10)
    q.add_argument("--r-values", default="0,0.2,0.3333333333,0.5,0.6666666667,0.8")
    q.add_argument("--ratios", default="2/8,3/7,4/6,5/5,6/4,7/3,8/2")
    q.add_argument("--repeats", type=int, default=20)
    q.add_argument("--max-iters", type=int, default=50)
    q.add_argument("--min-update-fraction", type=float, default=0.001)
    q.add_argument("--rho-sizes", default=None,
                   help="comma list of sizes for the cost-exponent estimate")
    q.add_argument("--out", required=True)
    common(q)
    q.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("KNNMERGE_LOG", "WARNING"),
        format="%(levelname)s %(name)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
