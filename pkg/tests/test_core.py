"""Metric values, counter discipline, datasets, and generators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import knnmerge as km
from knnmerge.core import sample_distinct


def d(metric, a, b):
    counter = km.DistanceCounter()
    return km.distance(metric, a, b, counter)


class TestMetricValues:
    def test_l2_identity_case(self):
        assert d(km.Metric.L2, [0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_jaccard_disjoint_sets(self):
        assert d(km.Metric.JACCARD, [1, 2], [3, 4]) == 1.0

    def test_l1_coordinate_sum(self):
        assert d(km.Metric.L1, [0.0, 0.0, 0.0], [1.0, 2.0, 3.0]) == 6.0

    def test_cosine_orthogonal(self):
        assert d(km.Metric.COSINE, [1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_l2_is_squared(self):
        assert d(km.Metric.L2, [0.0, 0.0], [3.0, 4.0]) == 25.0

    def test_jaccard_partial_overlap(self):
        # |{2}| / |{1,2,3}|
        assert d(km.Metric.JACCARD, [1, 2], [2, 3]) == pytest.approx(1 - 1 / 3)

    def test_cosine_zero_vector_convention(self):
        assert d(km.Metric.COSINE, [0.0, 0.0], [1.0, 1.0]) == 1.0


class TestMetricProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3, width=32), min_size=1, max_size=16),
        st.data(),
    )
    def test_symmetry_and_identity_dense(self, vec, data):
        other = data.draw(
            st.lists(
                st.floats(-1e3, 1e3, width=32),
                min_size=len(vec), max_size=len(vec),
            )
        )
        for metric in (km.Metric.L1, km.Metric.L2, km.Metric.COSINE):
            ab = d(metric, vec, other)
            ba = d(metric, other, vec)
            assert ab == ba
            assert ab >= 0.0 and np.isfinite(ab)
            assert d(metric, vec, vec) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        st.sets(st.integers(0, 200), min_size=1, max_size=20),
        st.sets(st.integers(0, 200), min_size=1, max_size=20),
    )
    def test_symmetry_and_identity_jaccard(self, a, b):
        a, b = sorted(a), sorted(b)
        assert d(km.Metric.JACCARD, a, b) == d(km.Metric.JACCARD, b, a)
        assert d(km.Metric.JACCARD, a, a) == 0.0
        assert 0.0 <= d(km.Metric.JACCARD, a, b) <= 1.0

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            d(km.Metric.L2, [1.0, 2.0], [1.0, 2.0, 3.0])

    def test_metric_name_round_trip(self):
        for name in ("l1", "l2", "cosine", "jaccard"):
            assert km.Metric.from_name(name).name.lower() == name
        with pytest.raises(ValueError):
            km.Metric.from_name("hamming")

    def test_kind_check(self):
        dense = km.generate_uniform(5, 3, seed=0)
        sparse = km.generate_itemsets(5, 20, 2, 4, seed=0)
        with pytest.raises(ValueError):
            km.nn_descent(sparse, km.Metric.L2, km.DescentParams(k=2), 0)
        with pytest.raises(ValueError):
            km.brute_force_graph(dense, km.Metric.JACCARD, 2)


class TestDistanceCounter:
    def test_each_call_adds_exactly_one(self):
        counter = km.DistanceCounter()
        for i in range(1, 6):
            km.distance(km.Metric.L2, [0.0], [1.0], counter)
            assert counter.count == i

    def test_monotone(self):
        counter = km.DistanceCounter()
        counter.add(5)
        with pytest.raises(ValueError):
            counter.add(-1)
        assert counter.count == 5


class TestGenerators:
    def test_uniform_range_and_shape(self):
        ds = km.generate_uniform(100, 7, seed=3)
        assert ds.kind == "dense" and ds.n == 100 and ds.d == 7
        assert np.all(ds.vectors >= 0.0) and np.all(ds.vectors < 1.0)

    def test_uniform_single_value(self):
        ds = km.generate_uniform(1, 1, seed=12)
        assert 0.0 <= float(ds.vectors[0, 0]) < 1.0

    def test_uniform_determinism(self):
        a = km.generate_uniform(50, 5, seed=9)
        b = km.generate_uniform(50, 5, seed=9)
        assert np.array_equal(a.vectors, b.vectors)
        c = km.generate_uniform(50, 5, seed=10)
        assert not np.array_equal(a.vectors, c.vectors)

    def test_uniform_validation(self):
        with pytest.raises(ValueError):
            km.generate_uniform(0, 4, seed=0)
        with pytest.raises(ValueError):
            km.generate_uniform(4, 0, seed=0)

    def test_itemsets_shape(self):
        ds = km.generate_itemsets(40, 100, 5, 12, seed=2)
        assert ds.kind == "sparse" and ds.n == 40 and ds.d == 100
        for i in range(ds.n):
            rec = ds.record(i)
            assert 5 <= rec.size <= 12
            assert np.all(np.diff(rec) > 0)
        again = km.generate_itemsets(40, 100, 5, 12, seed=2)
        assert np.array_equal(ds.items, again.items)


class TestDataset:
    def test_dense_validation(self):
        with pytest.raises(ValueError):
            km.Dataset.from_dense(np.array([[np.inf, 1.0]], dtype=np.float32))
        with pytest.raises(ValueError):
            km.Dataset.from_dense(np.zeros(4, dtype=np.float32))

    def test_sparse_validation(self):
        with pytest.raises(ValueError, match="empty"):
            km.Dataset.from_itemsets([[1, 2], []])
        with pytest.raises(ValueError, match="ascending"):
            km.Dataset.from_itemsets([[2, 1]])
        with pytest.raises(ValueError, match="vocabulary"):
            km.Dataset.from_itemsets([[0, 5]], universe=3)

    def test_take_reindexes(self):
        ds = km.generate_uniform(10, 3, seed=0)
        sub = ds.take([2, 5, 7])
        assert sub.n == 3
        assert np.array_equal(sub.vectors[1], ds.vectors[5])
        sp = km.generate_itemsets(10, 30, 2, 5, seed=0)
        sub = sp.take([0, 9])
        assert np.array_equal(sub.record(1), sp.record(9))

    def test_sample_distinct(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            out = sample_distinct(rng, 10, 9, exclude=4)
            assert len(set(out.tolist())) == 9
            assert 4 not in out
        with pytest.raises(ValueError):
            sample_distinct(rng, 5, 5, exclude=1)
