"""File format round trips: fvecs/ivecs, sparse text, graphs, adjacency,
hierarchy directories."""

import os

import numpy as np
import pytest

import knnmerge as km
from knnmerge import io


class TestVecsFormats:
    def test_fvecs_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.random((20, 7), dtype=np.float32)
        path = tmp_path / "x.fvecs"
        io.write_fvecs(path, data)
        assert np.array_equal(io.read_fvecs(path), data)

    def test_single_record_is_eight_bytes(self, tmp_path):
        path = tmp_path / "one.fvecs"
        io.write_fvecs(path, np.array([[0.25]], dtype=np.float32))
        assert os.path.getsize(path) == 8  # 4-byte dim + 4-byte float

    def test_ivecs_round_trip(self, tmp_path):
        rows = np.arange(12, dtype=np.int32).reshape(3, 4)
        path = tmp_path / "x.ivecs"
        io.write_ivecs(path, rows)
        assert np.array_equal(io.read_ivecs(path), rows)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.fvecs"
        with open(path, "wb") as fh:
            fh.write(b"\x03\x00\x00\x00\x00\x00")
        with pytest.raises(ValueError):
            io.read_fvecs(path)

    def test_member_ids_round_trip(self, tmp_path):
        ids = np.array([3, 9, 12, 500])
        path = tmp_path / "m.ivecs"
        io.save_member_ids(path, ids)
        assert np.array_equal(io.load_member_ids(path), ids)


class TestSparseText:
    def test_round_trip(self, tmp_path):
        ds = km.generate_itemsets(15, 60, 2, 9, seed=1)
        path = tmp_path / "sets.txt"
        io.write_sparse_text(path, ds)
        back = io.read_sparse_text(path, universe=60)
        assert back.n == ds.n
        for i in range(ds.n):
            assert np.array_equal(back.record(i), ds.record(i))

    def test_invalid_records_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2 1\n")
        with pytest.raises(ValueError):
            io.read_sparse_text(path)


class TestGraphFormat:
    def test_round_trip(self, tmp_path):
        ds = km.generate_uniform(40, 3, seed=2)
        g = km.brute_force_graph(ds, km.Metric.L2, 5)
        path = tmp_path / "g.knng"
        io.save_graph(path, g)
        back = io.load_graph(path)
        assert back.k == g.k and back.metric == g.metric
        assert np.array_equal(back.ids, g.ids)
        assert np.array_equal(back.sizes, g.sizes)
        # distances survive at float32 precision
        assert np.allclose(back.dists, g.dists, rtol=1e-6)

    def test_subset_member_ids(self, tmp_path):
        ds = km.generate_uniform(40, 3, seed=3)
        members = np.arange(1, 40, 2)
        g = km.brute_force_graph(ds, km.Metric.L2, 4, member_ids=members)
        path = tmp_path / "g.knng"
        io.save_graph(path, g)
        back = io.load_graph(path, member_ids=members)
        back.validate()
        assert np.array_equal(back.member_ids, members)

    def test_short_lists_pad(self, tmp_path):
        g = km.KnnGraph([0, 1, 2], 3, km.Metric.L2)
        from knnmerge.graph import Neighbor, NeighborList

        g.set_list(0, NeighborList(3, [Neighbor(1, 0.5)]))
        path = tmp_path / "g.knng"
        io.save_graph(path, g)
        back = io.load_graph(path)
        assert back.sizes.tolist() == [1, 0, 0]
        assert back.neighbor_list(0).ids() == [1]

    def test_magic_check(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"NOPE" + b"\0" * 12)
        with pytest.raises(ValueError):
            io.load_graph(path)


class TestAdjacencyFormat:
    def test_round_trip(self, tmp_path):
        ds = km.generate_uniform(50, 3, seed=4)
        g = km.brute_force_graph(ds, km.Metric.L2, 6)
        adj = km.diversify_graph(g, ds)
        path = tmp_path / "a.kadj"
        io.save_adjacency(path, adj)
        back = io.load_adjacency(path)
        assert np.array_equal(back.indptr, adj.indptr)
        assert np.array_equal(back.neighbors, adj.neighbors)


class TestHierarchyDirectory:
    def test_save_and_load(self, tmp_path):
        ds = km.generate_uniform(500, 4, seed=5)
        _, hier = km.h_merge(ds, km.Metric.L2, km.MergeParams(k=8, seed=1),
                             layer_sizes=[64, 500])
        km.diversify_hierarchy(hier, ds)
        out = tmp_path / "hier"
        io.save_hierarchy(out, hier)
        back = io.load_hierarchy(out)
        assert back.k == 8 and back.metric == km.Metric.L2
        assert back.layer_sizes == hier.layer_sizes
        for t in range(2):
            assert back.layers[t].adjacency is not None
            g = back.layer_graph(t)
            assert g.n == hier.layer_sizes[t]
        # loaded hierarchy searches end to end
        res = km.hierarchical_search(back, ds, km.Metric.L2, ds.vectors[7],
                                     km.SearchParams(pool_size=8, seed=0))
        assert res.neighbors[0][0] == 7

    def test_manifest_written(self, tmp_path):
        path = tmp_path / "m.json"
        io.write_manifest(path, {"k": 5, "seed": 1})
        import json

        with open(path) as fh:
            assert json.load(fh)["k"] == 5
