"""Shared fixtures: small reference datasets and a kernel warmup.

The warmup exercises every compiled path once on tiny inputs so that
timed acceptance checks measure the algorithms, not JIT compilation
(numba caches compiled kernels on disk after the first session).
"""

import numpy as np
import pytest

import knnmerge as km


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    dense = km.generate_uniform(60, 4, seed=0)
    sparse = km.generate_itemsets(60, 50, 3, 8, seed=0)
    params = km.DescentParams(k=4, max_iters=5)
    for ds, metric in ((dense, km.Metric.L2), (sparse, km.Metric.JACCARD)):
        g = km.nn_descent(ds, metric, params, seed=1)
        km.brute_force_graph(ds, metric, 4)
        km.diversify_graph(g, ds)
    queries = km.Dataset.from_dense(dense.vectors[:5])
    km.brute_force_queries(dense, km.Metric.L2, queries, 3)
    rng = np.random.default_rng(0)
    perm = rng.permutation(60)
    s1, s2 = np.sort(perm[:30]), np.sort(perm[30:])
    g1 = km.nn_descent(dense, km.Metric.L2, params, 1, member_ids=s1)
    g2 = km.nn_descent(dense, km.Metric.L2, params, 2, member_ids=s2)
    mp = km.MergeParams(k=4, seed=3, max_iters=5)
    km.s_merge(dense, g1, g2, mp)
    km.j_merge(dense, g1, s2, mp)


@pytest.fixture(scope="session")
def uniform500():
    return km.generate_uniform(500, 4, seed=11)


@pytest.fixture(scope="session")
def truth500(uniform500):
    return km.brute_force_graph(uniform500, km.Metric.L2, 10)
