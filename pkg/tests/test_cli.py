"""End-to-end CLI flows (run in-process through main)."""

import json
import os

import numpy as np
import pytest

from knnmerge import io
from knnmerge.cli import main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestGen:
    def test_writes_expected_shape(self, workdir):
        assert run("gen", "--n", 50, "--d", 6, "--seed", 3,
                   "--out", "d.fvecs") == 0
        data = io.read_fvecs("d.fvecs")
        assert data.shape == (50, 6)
        assert os.path.exists("d.fvecs.meta.json")

    def test_single_record_size(self, workdir):
        run("gen", "--n", 1, "--d", 1, "--seed", 0, "--out", "one.fvecs")
        assert os.path.getsize("one.fvecs") == 8

    def test_regeneration_is_byte_identical(self, workdir):
        run("gen", "--n", 30, "--d", 4, "--seed", 9, "--out", "a.fvecs")
        run("gen", "--n", 30, "--d", 4, "--seed", 9, "--out", "b.fvecs")
        with open("a.fvecs", "rb") as fa, open("b.fvecs", "rb") as fb:
            assert fa.read() == fb.read()

    def test_env_data_dir(self, workdir, monkeypatch):
        sub = workdir / "datadir"
        sub.mkdir()
        monkeypatch.setenv("KNNMERGE_DATA_DIR", str(sub))
        run("gen", "--n", 10, "--d", 2, "--seed", 0, "--out", "e.fvecs")
        assert (sub / "e.fvecs").exists()


class TestBuildAndMerge:
    @pytest.fixture()
    def data(self, workdir):
        run("gen", "--n", 240, "--d", 4, "--seed", 1, "--out", "d.fvecs")
        rng = np.random.default_rng(0)
        perm = rng.permutation(240)
        io.save_member_ids("s1.ivecs", np.sort(perm[:120]))
        io.save_member_ids("s2.ivecs", np.sort(perm[120:]))
        return workdir

    def test_build_writes_graph_and_manifest(self, data, capsys):
        assert run("build", "--data", "d.fvecs", "--k", 8, "--seed", 2,
                   "--out", "g.knng") == 0
        out = capsys.readouterr().out
        assert "scan_rate=" in out and "phi=" in out and "iters=" in out
        g = io.load_graph("g.knng")
        g.validate()
        meta = json.load(open("g.knng.meta.json"))
        assert meta["k"] == 8 and meta["seed"] == 2

    def test_smerge_flow(self, data, capsys):
        run("build", "--data", "d.fvecs", "--k", 8, "--seed", 2,
            "--ids", "s1.ivecs", "--out", "g1.knng")
        run("build", "--data", "d.fvecs", "--k", 8, "--seed", 3,
            "--ids", "s2.ivecs", "--out", "g2.knng")
        assert run("smerge", "--data", "d.fvecs", "--k", 8, "--r", 0.5,
                   "--seed", 4, "--g1", "g1.knng", "--ids1", "s1.ivecs",
                   "--g2", "g2.knng", "--ids2", "s2.ivecs",
                   "--out", "u.knng") == 0
        merged = io.load_graph("u.knng")
        assert merged.n == 240
        merged.validate()

    def test_smerge_rejects_overlap(self, data, capsys):
        run("build", "--data", "d.fvecs", "--k", 8, "--seed", 2,
            "--ids", "s1.ivecs", "--out", "g1.knng")
        code = run("smerge", "--data", "d.fvecs", "--k", 8,
                   "--g1", "g1.knng", "--ids1", "s1.ivecs",
                   "--g2", "g1.knng", "--ids2", "s1.ivecs",
                   "--out", "u.knng")
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_jmerge_flow_and_empty_raw(self, data):
        run("build", "--data", "d.fvecs", "--k", 8, "--seed", 2,
            "--ids", "s1.ivecs", "--out", "g1.knng")
        assert run("jmerge", "--data", "d.fvecs", "--k", 8, "--seed", 5,
                   "--graph", "g1.knng", "--ids1", "s1.ivecs",
                   "--raw", "s2.ivecs", "--out", "u.knng") == 0
        assert io.load_graph("u.knng").n == 240
        # empty raw set: output graph equals the input graph
        io.save_member_ids("empty.ivecs", np.empty((0,), dtype=np.int64))
        assert run("jmerge", "--data", "d.fvecs", "--k", 8, "--seed", 5,
                   "--graph", "g1.knng", "--ids1", "s1.ivecs",
                   "--raw", "empty.ivecs", "--out", "same.knng") == 0
        a = io.load_graph("g1.knng", member_ids=io.load_member_ids("s1.ivecs"))
        b = io.load_graph("same.knng", member_ids=io.load_member_ids("s1.ivecs"))
        assert np.array_equal(a.ids, b.ids)

    def test_missing_file_fails_cleanly(self, workdir, capsys):
        assert run("build", "--data", "missing.fvecs", "--k", 4,
                   "--out", "g.knng") == 1
        assert "error:" in capsys.readouterr().err


class TestPipeline:
    def test_hmerge_diversify_search_eval(self, workdir, capsys):
        run("gen", "--n", 600, "--d", 4, "--seed", 1, "--out", "d.fvecs")
        run("gen", "--n", 40, "--d", 4, "--seed", 2, "--out", "q.fvecs")
        assert run("hmerge", "--data", "d.fvecs", "--k", 8, "--seed", 3,
                   "--layers", "64,256,n", "--out", "hier") == 0
        manifest = json.load(open("hier/manifest.json"))
        assert manifest["layer_sizes"] == [64, 256, 600]
        assert run("diversify", "--data", "d.fvecs",
                   "--hierarchy", "hier") == 0
        assert run("groundtruth", "--data", "d.fvecs", "--queries",
                   "q.fvecs", "--k", 5, "--out", "truth.ivecs") == 0
        assert run("search", "--data", "d.fvecs", "--queries", "q.fvecs",
                   "--truth", "truth.ivecs", "--hierarchy", "hier",
                   "--pool", "8,16", "--seed", 4,
                   "--out", "results.csv") == 0
        out = capsys.readouterr().out
        assert "recall@1=" in out and "qps=" in out
        lines = open("results.csv").read().splitlines()
        assert lines[0].startswith("pool,query,top_ids")
        assert len(lines) == 1 + 2 * 40

    def test_flat_adjacency_search(self, workdir):
        run("gen", "--n", 300, "--d", 4, "--seed", 5, "--out", "d.fvecs")
        run("gen", "--n", 10, "--d", 4, "--seed", 6, "--out", "q.fvecs")
        run("build", "--data", "d.fvecs", "--k", 8, "--seed", 7,
            "--out", "g.knng")
        assert run("diversify", "--data", "d.fvecs", "--graph", "g.knng",
                   "--out", "g.kadj") == 0
        assert run("search", "--data", "d.fvecs", "--queries", "q.fvecs",
                   "--adjacency", "g.kadj", "--pool", "8",
                   "--seed", 1, "--out", "r.csv") == 0

    def test_eval_truth_vs_itself(self, workdir, capsys):
        io.write_ivecs("t.ivecs", np.arange(20, dtype=np.int32).reshape(4, 5))
        assert run("eval", "--results", "t.ivecs", "--truth", "t.ivecs",
                   "--k", 5) == 0
        assert "recall@5=1.000000" in capsys.readouterr().out

    def test_bench_small_grid(self, workdir, capsys):
        assert run("bench", "--n", 200, "--d", 4, "--k", 6, "--eval-k", 5,
                   "--r-values", "0,0.5", "--ratios", "5/5", "--repeats", 2,
                   "--seed", 1, "--rho-sizes", "150,300",
                   "--out", "sweep.csv") == 0
        out = capsys.readouterr().out
        assert "rho_estimate=" in out
        lines = open("sweep.csv").read().splitlines()
        assert lines[0].startswith("algo,r,ratio")
        assert len(lines) == 1 + 4  # 2 algos x 2 r values

    def test_pipeline_determinism(self, workdir):
        for tag in ("a", "b"):
            run("gen", "--n", 200, "--d", 4, "--seed", 1,
                "--out", f"{tag}.fvecs")
            run("build", "--data", f"{tag}.fvecs", "--k", 6, "--seed", 2,
                "--threads", 1, "--out", f"{tag}.knng")
        with open("a.knng", "rb") as fa, open("b.knng", "rb") as fb:
            assert fa.read() == fb.read()
