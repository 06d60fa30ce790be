"""RBF kernel and the design matrices consumed by every trainer."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigurationError, InputError

FIXED = "fixed"
MEDIAN_HEURISTIC = "median_heuristic"


@dataclass(frozen=True)
class KernelConfig:
    """RBF bandwidth settings.

    With ``bandwidth_mode="median_heuristic"`` the bandwidth is computed
    from the training points by :func:`resolve`; ``gamma`` is ignored.
    """

    gamma: float = 1.0
    bandwidth_mode: str = MEDIAN_HEURISTIC

    def __post_init__(self):
        if self.bandwidth_mode not in (FIXED, MEDIAN_HEURISTIC):
            raise ConfigurationError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == FIXED and not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError("gamma must be positive for a fixed bandwidth")

    def resolve(self, X_train) -> "KernelConfig":
        """Return a fixed-bandwidth config, applying the heuristic if needed."""
        if self.bandwidth_mode == FIXED:
            return self
        return KernelConfig(median_heuristic_gamma(X_train), FIXED)


@dataclass(frozen=True)
class DesignMatrix:
    """Ones column followed by kernel evaluations against the training points."""

    values: np.ndarray
    source_train_size: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


def _as_points(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"expected a 2-d array of points, got shape {X.shape}")
    return X


def rbf_kernel(x1, x2, gamma) -> float:
    """``exp(-||x1 - x2||^2 / (2 gamma^2))``; far-apart points flush to 0."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape:
        raise InputError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    if not gamma > 0:
        raise InputError("gamma must be positive")
    d2 = float(np.sum((x1 - x2) ** 2))
    return math.exp(-d2 / (2.0 * gamma * gamma))


def median_heuristic_gamma(X) -> float:
    """Median pairwise Euclidean distance (smallest positive one if that is 0)."""
    X = _as_points(X)
    if X.shape[0] < 2:
        raise ConfigurationError("median heuristic needs at least two points")
    dist = pdist(X)
    positive = dist[dist > 0]
    if positive.size == 0:
        raise ConfigurationError("median heuristic undefined: all points identical")
    med = float(np.median(dist))
    return med if med > 0 else float(positive.min())


def _kernel_block(A, B, gamma):
    d2 = cdist(A, B, "sqeuclidean")
    return np.exp(-d2 / (2.0 * gamma * gamma))


def build_train_design(X_train, cfg: KernelConfig) -> DesignMatrix:
    X = _as_points(X_train)
    if X.shape[0] < 1:
        raise InputError("need at least one training point")
    cfg = cfg.resolve(X) if X.shape[0] > 1 else _single_point_cfg(cfg)
    block = _kernel_block(X, X, cfg.gamma)
    values = np.hstack([np.ones((X.shape[0], 1)), block])
    return DesignMatrix(values, X.shape[0])


def _single_point_cfg(cfg):
    # K(x, x) = 1 whatever the bandwidth
    return cfg if cfg.bandwidth_mode == FIXED else KernelConfig(1.0, FIXED)


def build_test_design(X_test, X_train, cfg: KernelConfig) -> DesignMatrix:
    Xte = _as_points(X_test)
    Xtr = _as_points(X_train)
    if Xte.shape[0] and Xte.shape[1] != Xtr.shape[1]:
        raise InputError(
            f"feature dimension mismatch: test {Xte.shape[1]} vs train {Xtr.shape[1]}")
    if np.array_equal(Xte, Xtr):
        return build_train_design(Xtr, cfg)
    cfg = cfg.resolve(Xtr) if Xtr.shape[0] > 1 else _single_point_cfg(cfg)
    block = _kernel_block(Xte, Xtr, cfg.gamma) if Xte.shape[0] else np.empty((0, Xtr.shape[0]))
    values = np.hstack([np.ones((Xte.shape[0], 1)), block])
    return DesignMatrix(values, Xtr.shape[0])
