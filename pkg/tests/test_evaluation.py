import numpy as np
import pytest
from hypothesis import given, strategies as st

from bayes_rvm.algorithms import GENERIC, ORIGINAL, TrainConfig
from bayes_rvm.errors import InputError, NumericalError, UndefinedMetricError
from bayes_rvm.evaluation import (METRICS, MetricsReport, RepeatSummary, Scenario,
                                  compute_metrics, format_cell, run_repeats, summarize_table)
from bayes_rvm.samplers import RngStream

FAST = TrainConfig(iterations=40, burn_in=10)


class TestComputeMetrics:
    def test_identity(self):
        y = np.array([1, -1, -1, 1])
        assert compute_metrics(y, y, "global") == 1.0 and compute_metrics(y, y, "positive") == 1.0

    def test_all_negative_baseline(self):
        y = np.r_[-np.ones(30, int), np.ones(3, int)]
        pred = -np.ones(33, int)
        assert compute_metrics(y, pred, "global") == pytest.approx(30 / 33)
        assert round(compute_metrics(y, pred, "global"), 4) == 0.9091
        assert compute_metrics(y, pred, "positive") == 0.0

    def test_hand_case(self):
        t, p = [1, -1, 1, -1], [1, 1, -1, -1]
        assert compute_metrics(t, p, "global") == 0.5
        assert compute_metrics(t, p, "positive") == 0.5

    def test_undefined_positive(self):
        with pytest.raises(UndefinedMetricError):
            compute_metrics([-1, -1], [-1, 1], "positive")

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            compute_metrics([1, -1], [1], "global")

    @given(st.lists(st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
                    min_size=1, max_size=40), st.randoms())
    def test_permutation_invariant(self, pairs, rnd):
        t, p = map(np.array, zip(*pairs))
        shuffled = pairs[:]
        rnd.shuffle(shuffled)
        ts, ps = map(np.array, zip(*shuffled))
        assert compute_metrics(t, p) == compute_metrics(ts, ps)
        if (t == 1).any():
            assert compute_metrics(t, p, "positive") == compute_metrics(ts, ps, "positive")

    @given(st.integers(1, 50), st.integers(0, 200))
    def test_all_negative_equals_b_over_one_plus_b(self, n_pos, n_neg):
        y = np.r_[-np.ones(n_neg, int), np.ones(n_pos, int)]
        b = n_neg / n_pos
        assert compute_metrics(y, -np.ones_like(y)) == pytest.approx(b / (1 + b), rel=1e-14)


class TestReports:
    def test_range_checked(self):
        with pytest.raises(InputError):
            MetricsReport(r_g_train=1.2)
        assert MetricsReport(r_g_train=0.5).present() == {"r_g_train": 0.5}

    def test_sample_sd(self):
        s = RepeatSummary.from_values("s", GENERIC, ("m",), [[0.2], [0.4], [0.9]])
        assert s.sd["m"] == pytest.approx(np.std([0.2, 0.4, 0.9], ddof=1))
        assert s.mean["m"] == pytest.approx(0.5)

    def test_single_repeat_sd_undefined(self):
        s = RepeatSummary.from_values("s", GENERIC, ("m",), [[0.7]])
        assert s.R == 1 and s.sd["m"] is None and s.mean["m"] == 0.7


class TestScenario:
    def test_footnote_sizes(self):
        s = Scenario.from_train(3, 30)
        assert s.sizes() == {"train": (3, 30), "test": (3, 30), "stest": (1, 10), "ltest": (9, 90)}
        assert s.b == 10.0 and s.name == "b=10"
        assert Scenario.from_train(12, 30).stest == (4, 10)


class TestRunRepeats:
    def test_single_repeat(self):
        s = run_repeats(Scenario.from_train(2, 4), ORIGINAL, FAST, 1, RngStream(0))
        assert s.R == 1 and all(v is None for v in s.sd.values())
        assert set(s.mean) == set(METRICS)
        np.testing.assert_array_equal([s.mean[m] for m in METRICS], s.values[0])

    def test_repeatable(self):
        a = run_repeats(Scenario.from_train(2, 4), GENERIC, FAST, 2, RngStream(5))
        b = run_repeats(Scenario.from_train(2, 4), GENERIC, FAST, 2, RngStream(5))
        np.testing.assert_array_equal(a.values, b.values)
        assert a.mean == b.mean and a.sd == b.sd

    def test_bounds(self):
        s = run_repeats(Scenario.from_train(3, 6), GENERIC, FAST, 3, RngStream(1))
        assert all(0 <= v <= 1 for v in s.mean.values())
        assert all(0 <= v <= 0.5 for v in s.sd.values())

    def test_zero_repeats(self):
        with pytest.raises(InputError):
            run_repeats(Scenario.from_train(2, 4), GENERIC, FAST, 0, RngStream(0))

    def test_failure_carries_repeat_index(self, monkeypatch):
        import bayes_rvm.evaluation as ev
        calls = []

        def fake(*args, **kw):
            calls.append(1)
            if len(calls) == 2:
                raise NumericalError("boom")
            return {m: 0.5 for m in METRICS}
        monkeypatch.setattr(ev, "one_repeat", fake)
        with pytest.raises(NumericalError, match="repeat 1: boom") as info:
            run_repeats(Scenario.from_train(2, 4), GENERIC, FAST, 3, RngStream(0))
        assert info.value.repeat == 1


def summary(scenario, alg, mean, sd):
    return RepeatSummary(scenario, alg, 20, ("r_g_train",), {"r_g_train": mean},
                         {"r_g_train": sd}, np.zeros((20, 1)))


class TestSummarizeTable:
    def test_cell_format(self):
        table = summarize_table([summary("b=1", GENERIC, 0.97825, 0.01484)])
        assert "0.9783 (0.0148)" in table.text

    @pytest.mark.parametrize("x,cell", [(0.97825, "0.9783"), (0.99995, "1.0000"),
                                        (0.0, "0.0000"), (0.12344999, "0.1234"), (None, "NA")])
    def test_format_cell(self, x, cell):
        assert format_cell(x) == cell

    def test_empty(self):
        table = summarize_table([])
        assert table.csv == "scenario,algorithm,metric,mean,sd,R\n"
        assert table.text.split() == ["scenario", "algorithm"]

    def test_two_rows(self):
        table = summarize_table([summary("b=10", GENERIC, 0.9091, 0.0),
                                 summary("b=10", "hierarchical", 0.95, 0.04)])
        lines = table.text.strip().splitlines()
        assert len(lines) == 3 and "*" not in table.text
        assert len(table.csv.strip().splitlines()) == 3
        assert table.csv.splitlines()[1] == "b=10,generic,r_g_train,0.9091,0.0,20"
