"""Synthetic Gaussian classes, CSV ingestion and stratified splitting."""
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
import csv
import math

import numpy as np

from .errors import InputError, ParseError, UndefinedMetricError
from .samplers import RngStream, as_generator, mvn_sample


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (rows are points) with labels in {-1, +1}.

    A set missing one of the two classes is allowed; :attr:`degenerate`
    reports it.
    """

    X: np.ndarray
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y).astype(np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise InputError("features must be finite")
        if not np.all((y == 1) | (y == -1)):
            raise InputError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_pos(self):
        return int(np.sum(self.y == 1))

    @property
    def n_neg(self):
        return int(np.sum(self.y == -1))

    @property
    def degenerate(self):
        return self.n_pos == 0 or self.n_neg == 0


def _check_pd(S, what):
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2) or not np.array_equal(S, S.T):
        raise InputError(f"{what} must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(S)[0] <= 0:
        raise InputError(f"{what} must be positive definite")
    return S


@dataclass(frozen=True)
class SimSpec:
    """Two bivariate normal classes; the defaults are the reference scenario."""

    mu_neg: tuple = (7.0, 8.0)
    mu_pos: tuple = (13.0, 15.0)
    sigma_neg: tuple = ((10.0, 3.0), (3.0, 8.0))
    sigma_pos: tuple = ((1.0, 0.0), (0.0, 2.0))
    n_pos: int = 3
    n_neg: int = 30

    def __post_init__(self):
        _check_pd(self.sigma_neg, "sigma_neg")
        _check_pd(self.sigma_pos, "sigma_pos")
        if self.n_pos < 0 or self.n_neg < 0 or self.n_pos + self.n_neg == 0:
            raise InputError("class counts must be non-negative and not both zero")

    def with_counts(self, n_pos, n_neg) -> "SimSpec":
        return SimSpec(self.mu_neg, self.mu_pos, self.sigma_neg, self.sigma_pos,
                       int(n_pos), int(n_neg))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    stratified: bool = True
    rng: RngStream = field(default_factory=lambda: RngStream(0))

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise InputError("train_fraction must lie in (0, 1]")


def simulate_gaussian(spec: SimSpec, rng, name="simulated") -> Dataset:
    """Draw ``n_neg`` negatives then ``n_pos`` positives, in that row order."""
    gen = as_generator(rng)
    parts = []
    for count, mean, cov in ((spec.n_neg, spec.mu_neg, spec.sigma_neg),
                             (spec.n_pos, spec.mu_pos, spec.sigma_pos)):
        if count:
            parts.append(mvn_sample(np.asarray(mean, float), np.asarray(cov, float),
                                    gen, size=count))
        else:
            parts.append(np.empty((0, 2)))
    X = np.vstack(parts)
    y = np.concatenate([-np.ones(spec.n_neg, np.int64), np.ones(spec.n_pos, np.int64)])
    return Dataset(X, y, name)


def imbalance_index(d: Dataset) -> float:
    """Negatives per positive."""
    if d.n_pos == 0:
        raise UndefinedMetricError("imbalance index undefined without positives")
    return d.n_neg / d.n_pos


def load_csv(path, label_column=-1, positive_label="1", delimiter=",",
             header=False, standardize=False, name=None) -> Dataset:
    """Read a numeric CSV with one label column.

    Rows equal to ``positive_label`` (after stripping whitespace) become +1,
    everything else -1. Blank lines are skipped. ``standardize`` z-scores
    each feature column (zero-variance columns are only centred).
    """
    rows, labels, lines = [], [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError("need at least one feature and a label", lineno)
                col = label_column if label_column >= 0 else width + label_column
                if not 0 <= col < width:
                    raise ParseError(f"label column {label_column} missing", lineno)
            elif len(row) != width:
                raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
            feats = row[:col] + row[col + 1:]
            try:
                values = [float(c) for c in feats]
            except ValueError:
                raise ParseError("non-numeric feature value", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite feature value", lineno)
            rows.append(values)
            labels.append(1 if row[col].strip() == str(positive_label) else -1)
            lines.append(lineno)
    if not rows:
        raise ParseError("no data rows", 1)
    X = np.array(rows, dtype=float)
    if standardize:
        sd = X.std(axis=0)
        X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return Dataset(X, np.array(labels), name if name is not None else str(path))


def round_half_up(x) -> int:
    return int(Decimal(repr(float(x))).to_integral_value(rounding=ROUND_HALF_UP))


def stratified_split(d: Dataset, spec: SplitSpec = SplitSpec()):
    """Random train/test split; returns ``(train, test, test_empty)``.

    Stratified splits send ``round_half_up(fraction * size)`` members of
    each class to the training side.
    """
    gen = as_generator(spec.rng)
    if spec.stratified:
        train_idx = []
        for label in (-1, 1):
            members = np.flatnonzero(d.y == label)
            if members.size == 0:
                raise InputError(f"class {label:+d} is empty; cannot stratify")
            k = round_half_up(spec.train_fraction * members.size)
            train_idx.append(gen.permutation(members)[:k])
        train_idx = np.sort(np.concatenate(train_idx))
    else:
        k = round_half_up(spec.train_fraction * len(d))
        train_idx = np.sort(gen.permutation(len(d))[:k])
    mask = np.zeros(len(d), bool)
    mask[train_idx] = True
    train = Dataset(d.X[mask], d.y[mask], f"{d.name}:train")
    test = Dataset(d.X[~mask], d.y[~mask], f"{d.name}:test")
    return train, test, len(test) == 0


def write_csv(path_or_handle, d: Dataset, positive_label="1", negative_label="-1"):
    """Write features then the label, using ``repr`` floats for exact round trips."""
    close = False
    fh = path_or_handle
    if isinstance(path_or_handle, (str, bytes)) or hasattr(path_or_handle, "__fspath__"):
        fh = open(path_or_handle, "w", newline="", encoding="utf-8")
        close = True
    try:
        w = csv.writer(fh, lineterminator="\n")
        for x, label in zip(d.X, d.y):
            w.writerow([repr(float(v)) for v in x]
                       + [positive_label if label == 1 else negative_label])
    finally:
        if close:
            fh.close()
