"""Accuracy criteria, the repeated-simulation protocol and summary tables."""
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
import csv
import io
import math
from typing import Optional

import numpy as np

from .algorithms import TrainConfig, evaluate_fit, train
from .data import SimSpec, round_half_up, simulate_gaussian
from .errors import InputError, RVMError, UndefinedMetricError
from .kernel import KernelConfig, build_test_design, build_train_design
from .samplers import RngStream

GLOBAL = "global"
POSITIVE = "positive"
SPLITS = ("train", "test", "stest", "ltest")
# column order of the summary tables: all global rates, then positive rates
METRICS = tuple(f"r_g_{s}" for s in SPLITS) + tuple(f"r_p_{s}" for s in SPLITS)


def compute_metrics(y_true, y_pred, scope=GLOBAL) -> float:
    """Global accuracy, or the recall of the +1 class for ``scope="positive"``."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise InputError(f"label vectors differ in shape: {t.shape} vs {p.shape}")
    if scope == GLOBAL:
        if t.size == 0:
            raise UndefinedMetricError("global accuracy of an empty set")
        return float(np.mean(t == p))
    if scope == POSITIVE:
        pos = t == 1
        if not pos.any():
            raise UndefinedMetricError("positive-class accuracy needs a positive label")
        return float(np.mean(p[pos] == 1))
    raise InputError(f"unknown scope {scope!r}")


@dataclass(frozen=True)
class MetricsReport:
    """The eight accuracy rates; splits that were not evaluated stay ``None``.

    ``sizes`` maps a split name to its ``(n, n_p)``.
    """

    r_g_train: Optional[float] = None
    r_p_train: Optional[float] = None
    r_g_test: Optional[float] = None
    r_p_test: Optional[float] = None
    r_g_stest: Optional[float] = None
    r_p_stest: Optional[float] = None
    r_g_ltest: Optional[float] = None
    r_p_ltest: Optional[float] = None
    sizes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in METRICS:
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InputError(f"{name}={v} outside [0, 1]")

    def present(self) -> dict:
        return {m: getattr(self, m) for m in METRICS if getattr(self, m) is not None}


def metrics_for(split, y_true, y_pred) -> dict:
    return {f"r_g_{split}": compute_metrics(y_true, y_pred, GLOBAL),
            f"r_p_{split}": compute_metrics(y_true, y_pred, POSITIVE)}


@dataclass(frozen=True)
class Scenario:
    """Training class sizes plus the three test-set sizes, each ``(n_pos, n_neg)``."""

    sim: SimSpec
    test: tuple
    stest: tuple
    ltest: tuple
    name: str = ""

    @classmethod
    def from_train(cls, n_pos, n_neg, sim: SimSpec = SimSpec(), name=None):
        """Same-size test set, a third-size and a triple-size one."""
        def third(k):
            return round_half_up(k / 3)
        if name is None:
            name = f"b={n_neg / n_pos:g}" if n_pos else "b=inf"
        return cls(sim.with_counts(n_pos, n_neg), (n_pos, n_neg),
                   (third(n_pos), third(n_neg)), (3 * n_pos, 3 * n_neg), name)

    @property
    def b(self):
        return self.sim.n_neg / self.sim.n_pos if self.sim.n_pos else math.inf

    def sizes(self):
        return {"train": (self.sim.n_pos, self.sim.n_neg), "test": tuple(self.test),
                "stest": tuple(self.stest), "ltest": tuple(self.ltest)}


@dataclass(frozen=True)
class RepeatSummary:
    """Mean and sample standard deviation of each metric over ``R`` repeats.

    With ``R = 1`` the deviations are undefined and stored as ``None``.
    ``values`` keeps the raw ``R x len(metrics)`` results.
    """

    scenario: str
    algorithm_id: str
    R: int
    metrics: tuple
    mean: dict
    sd: dict
    values: np.ndarray
    b: float = math.nan
    sizes: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, scenario, algorithm_id, metrics, values, **extra):
        values = np.asarray(values, dtype=float).reshape(-1, len(metrics))
        R = values.shape[0]
        if R < 1:
            raise InputError("need at least one repeat")
        means = values.mean(axis=0)
        sds = values.std(axis=0, ddof=1) if R > 1 else [None] * len(metrics)
        return cls(scenario, algorithm_id, R, tuple(metrics),
                   {m: float(v) for m, v in zip(metrics, means)},
                   {m: (None if s is None else float(s)) for m, s in zip(metrics, sds)},
                   values, **extra)


def one_repeat(scenario: Scenario, algorithm_id, cfg: TrainConfig, stream: RngStream,
               kernel: KernelConfig = KernelConfig()) -> dict:
    """Fresh training and test sets from children of ``stream``, then all eight rates."""
    sizes = scenario.sizes()
    sets = {}
    for i, split in enumerate(SPLITS):
        n_pos, n_neg = sizes[split]
        sets[split] = simulate_gaussian(scenario.sim.with_counts(n_pos, n_neg),
                                        stream.child(i), name=split)
    Xtr = sets["train"].X
    kcfg = kernel.resolve(Xtr)
    phi = build_train_design(Xtr, kcfg)
    fit = train(algorithm_id, phi, sets["train"].y, replace(cfg, rng=stream.child(len(SPLITS))))
    out = {}
    for split in SPLITS:
        d = sets[split]
        design = phi if split == "train" else build_test_design(d.X, Xtr, kcfg)
        labels, _ = evaluate_fit(fit, design, d.y)
        out.update(metrics_for(split, d.y, labels))
    return out


def run_repeats(scenario: Scenario, algorithm_id, cfg: TrainConfig, R, rng: RngStream,
                kernel: KernelConfig = KernelConfig(), progress=None) -> RepeatSummary:
    """Run ``R`` independent repeats; repeat ``r`` uses ``rng.child(r)``.

    A failing repeat aborts the whole run; the raised error carries the
    repeat index in its message and in a ``repeat`` attribute.
    """
    if R < 1:
        raise InputError("R must be at least 1")
    rows = []
    for r in range(R):
        try:
            res = one_repeat(scenario, algorithm_id, cfg, rng.child(r), kernel)
        except RVMError as exc:
            exc.args = (f"repeat {r}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            exc.repeat = r
            raise
        rows.append([res[m] for m in METRICS])
        if progress is not None:
            progress(r)
    return RepeatSummary.from_values(scenario.name, algorithm_id, METRICS, rows,
                                     b=scenario.b, sizes=scenario.sizes())


def format_cell(x) -> str:
    """Four decimals, ties rounded away from zero on the decimal repr of ``x``."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return str(Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class Table:
    csv: str
    text: str


CSV_COLUMNS = ("scenario", "algorithm", "metric", "mean", "sd", "R")


def summarize_table(rows) -> Table:
    """Long-format CSV plus a plain aligned table of ``mean (sd)`` cells."""
    rows = list(rows)
    metrics = [m for m in METRICS if any(m in r.mean for r in rows)]
    metrics += sorted({m for r in rows for m in r.mean} - set(metrics))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        for m in r.metrics:
            sd = r.sd.get(m)
            w.writerow([r.scenario, r.algorithm_id, m, repr(r.mean[m]),
                        "" if sd is None else repr(sd), r.R])

    header = ["scenario", "algorithm"] + metrics
    body = []
    for r in rows:
        cells = [r.scenario, r.algorithm_id]
        for m in metrics:
            cells.append(f"{format_cell(r.mean[m])} ({format_cell(r.sd.get(m))})"
                         if m in r.mean else "")
        body.append(cells)
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(line, widths)).rstrip()
             for line in [header] + body]
    return Table(buf.getvalue(), "\n".join(lines) + "\n")
