import json
import os

import numpy as np
import pytest

from bayes_rvm.cli import main, read_model
from bayes_rvm.data import load_csv

FAST = ["--iterations", "50", "--burn-in", "10"]


def run(*argv):
    return main([str(a) for a in argv])


def read_bytes(directory):
    return {n: open(os.path.join(directory, n), "rb").read() for n in sorted(os.listdir(directory))}


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--n-pos", 3, "--n-neg", 30, "--seed", 1, "--out-dir", out) == 0
    return out


@pytest.fixture
def toy(tmp_path):
    out = tmp_path / "toy"
    assert run("simulate", "--n-pos", 3, "--n-neg", 3, "--seed", 1, "--out-dir", out) == 0
    return out / "train.csv"


class TestSimulate:
    def test_outputs_and_manifest(self, sim):
        assert len(load_csv(sim / "train.csv")) == 33
        m = json.loads((sim / "simulate.json").read_text())
        assert m["results"]["b"] == 10.0 and m["config"]["seed"] == 1
        assert m["format_version"] == 1 and set(m["outputs"]) == {"train.csv", "test.csv"}

    def test_balanced_manifest(self, tmp_path):
        assert run("simulate", "--n-pos", 30, "--n-neg", 30, "--out-dir", tmp_path) == 0
        assert json.loads((tmp_path / "simulate.json").read_text())["results"]["b"] == 1.0

    def test_same_seed_same_bytes(self, sim, tmp_path):
        run("simulate", "--n-pos", 3, "--n-neg", 30, "--seed", 1, "--out-dir", tmp_path / "again")
        assert read_bytes(sim) == read_bytes(tmp_path / "again")


class TestTrain:
    def test_generic_trace_rows(self, toy, tmp_path):
        assert run("train", "--data", toy, "--algorithm", "generic", *FAST, "--out-dir", tmp_path) == 0
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert len(lines) == 51
        assert lines[0].split(",") == [f"w{i}" for i in range(7)] + [f"eta{i}" for i in range(7)]

    def test_hierarchical_columns(self, toy, tmp_path):
        assert run("train", "--data", toy, "--algorithm", "hierarchical", *FAST,
                   "--out-dir", tmp_path) == 0
        header = (tmp_path / "trace.csv").read_text().splitlines()[0].split(",")
        assert header[-3:] == ["rho", "mu", "tau2"]

    def test_original_accuracy(self, toy, tmp_path):
        assert run("train", "--data", toy, "--algorithm", "original", "--out-dir", tmp_path) == 0
        assert json.loads((tmp_path / "train.json").read_text())["results"]["r_g_train"] == 1.0

    def test_model_round_trip(self, toy, tmp_path):
        run("train", "--data", toy, "--algorithm", "original", "--gamma", 2.5, "--out-dir", tmp_path)
        meta, w_hat, X = read_model(tmp_path / "model.txt")
        assert float(meta["gamma"]) == 2.5 and meta["algorithm"] == "original"
        np.testing.assert_array_equal(X, load_csv(toy).X)
        assert w_hat.shape == (7,)

    def test_config_file_and_override(self, toy, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"# toy run\ndata = {toy}\nalgorithm=generic\niterations=30\nburn-in=5\n")
        assert run("train", "--config", cfg, "--iterations", 20, "--out-dir", tmp_path / "o") == 0
        assert len((tmp_path / "o" / "trace.csv").read_text().splitlines()) == 21
        m = json.loads((tmp_path / "o" / "train.json").read_text())
        assert m["config"]["iterations"] == 20 and m["config"]["burn_in"] == 5


class TestEvaluate:
    def test_perfect_fit(self, toy, tmp_path):
        run("train", "--data", toy, "--algorithm", "original", "--out-dir", tmp_path / "m")
        assert run("evaluate", "--model", tmp_path / "m" / "model.txt", "--data", toy,
                   "--out-dir", tmp_path / "e") == 0
        assert json.loads((tmp_path / "e" / "evaluate.json").read_text())["results"]["r_g"] == 1.0
        lines = (tmp_path / "e" / "predictions.csv").read_text().splitlines()
        assert lines[0] == "index,label,predicted,probability" and len(lines) == 7

    def test_zero_weights_predict_positive(self, toy, tmp_path):
        run("train", "--data", toy, "--algorithm", "original", "--out-dir", tmp_path / "m")
        path = tmp_path / "m" / "model.txt"
        text = path.read_text()
        head, rest = text.split("[w_hat]\n")
        _, feats = rest.split("[train_features]\n")
        path.write_text(head + "[w_hat]\n" + "0.0\n" * 7 + "[train_features]\n" + feats)
        run("evaluate", "--model", path, "--data", toy, "--out-dir", tmp_path / "e")
        res = json.loads((tmp_path / "e" / "evaluate.json").read_text())["results"]
        assert res["r_g"] == res["n_p"] / res["n"]

    def test_dimension_mismatch(self, toy, tmp_path):
        run("train", "--data", toy, "--algorithm", "original", "--out-dir", tmp_path / "m")
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,3,1\n")
        assert run("evaluate", "--model", tmp_path / "m" / "model.txt", "--data", bad,
                   "--out-dir", tmp_path / "e") == 1


class TestExperiment:
    def test_table_shape(self, tmp_path, capsys):
        assert run("experiment", "--b-values", "1,10", "--repeats", 2, *FAST,
                   "--out-dir", tmp_path) == 0
        lines = (tmp_path / "summary.txt").read_text().strip().splitlines()
        assert len(lines) == 5
        assert [ln.split()[:2] for ln in lines[1:]] == [
            ["b=1", "generic"], ["b=1", "hierarchical"], ["b=10", "generic"], ["b=10", "hierarchical"]]
        assert "r_p_ltest" in lines[0]

    def test_zero_repeats(self, tmp_path):
        assert run("experiment", "--repeats", 0, "--out-dir", tmp_path) == 1


class TestExitCodes:
    def test_missing_file(self, tmp_path):
        assert run("train", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path) == 3

    def test_bad_flag(self):
        assert run("train", "--algorithm", "svm") == 1

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("colour=blue\n")
        assert run("simulate", "--config", cfg, "--out-dir", tmp_path) == 1

    def test_numerical_failure(self, tmp_path, monkeypatch):
        import bayes_rvm.cli as cli
        from bayes_rvm.errors import NumericalError

        def boom(*a, **k):
            raise NumericalError("diverged")
        monkeypatch.setattr(cli, "train", boom)
        data = tmp_path / "d.csv"
        data.write_text("0,0,1\n1,1,-1\n")
        assert run("train", "--data", data, "--out-dir", tmp_path) == 2

    def test_unwritable_out_dir(self, toy, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run("simulate", "--out-dir", blocker / "sub") == 3
