"""The three RVM classification trainers.

``train_original`` is the Newton/Laplace scheme with re-estimated precisions,
``train_generic`` the Gibbs sampler with independent Gamma hyperpriors and
``train_hierarchical`` the Gibbs sampler with the log-normal equicorrelated
hyperprior on the precisions.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import InputError, NumericalError
from .model import (ETA_CLAMP, GenericHyper, HierHyper, alpha_from_eta, check_labels,
                    eta_conditional_kernel, log_conditional_rho, predict,
                    sample_alpha_generic, sample_mu, sample_tau2, w_conditional_kernel)
from .samplers import (ARS_OK, CONCAVITY_TOL, RngStream, _ars_core,
                       raise_for_ars_status, ratio_of_uniforms_sample)

log = logging.getLogger(__name__)

ORIGINAL = "original"
GENERIC = "generic"
HIERARCHICAL = "hierarchical"
ALGORITHMS = (ORIGINAL, GENERIC, HIERARCHICAL)

# bracket extensions beyond +-16 allowed per side before giving up
BRACKET_GROW = 12
ALPHA_PRUNE = 1e12
RIDGE = 1e-8
MAX_CONDITION = 1e12
NEWTON_TOL = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Run settings shared by all trainers.

    ``hier`` holds the initial ``(mu, rho, tau2)`` together with the fixed
    ``(c, d)``. ``likelihood=False`` drops the data term from the weight
    conditional, leaving the prior-only chain (a test hook).
    """

    iterations: int = 5000
    burn_in: int = 500
    generic: GenericHyper = field(default_factory=GenericHyper)
    hier: HierHyper = field(default_factory=HierHyper)
    init_w: Optional[np.ndarray] = None
    init_eta: Optional[np.ndarray] = None
    rng: RngStream = field(default_factory=lambda: RngStream(0))
    thin: int = 1
    likelihood: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise InputError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise InputError("burn-in must satisfy 0 <= B < T")
        if self.thin < 1:
            raise InputError("thin must be >= 1")


@dataclass(frozen=True)
class GibbsTrace:
    """Per-iteration parameter history; burn-in rows are kept.

    Row ``r`` of each history holds iteration ``r * thin + 1`` (1-based).
    ``hyper_history`` columns are ``(rho, mu, tau2)``.
    """

    w_history: np.ndarray
    eta_history: np.ndarray
    hyper_history: Optional[np.ndarray]
    burn_in: int
    thin: int = 1
    clamp_count: int = 0
    ridge_count: int = 0
    converged: Optional[bool] = None
    stationarity: Optional[float] = None

    @property
    def iterations(self):
        return self.w_history.shape[0] * self.thin

    def burn_in_mask(self):
        rows = np.arange(self.w_history.shape[0]) * self.thin + 1
        return rows <= self.burn_in


@dataclass(frozen=True)
class FitResult:
    w_hat: np.ndarray
    algorithm_id: str
    trace: GibbsTrace
    w_mode: Optional[np.ndarray] = None


def _validate(phi, y):
    X = np.asarray(getattr(phi, "values", phi), dtype=float)
    y = check_labels(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InputError(f"design with shape {X.shape} does not match {y.shape[0]} labels")
    return X, y


def _initial_state(cfg, m):
    w = np.zeros(m) if cfg.init_w is None else np.array(cfg.init_w, dtype=float)
    eta = np.zeros(m) if cfg.init_eta is None else np.array(cfg.init_eta, dtype=float)
    if w.shape != (m,) or eta.shape != (m,):
        raise InputError(f"initial vectors must have length {m}")
    return w, eta


def _fresh_rng(cfg):
    # a trainer never consumes the caller's stream; same config -> same chain
    return RngStream(cfg.rng.seed, _key=cfg.rng.key).generator


# ---------------------------------------------------------------------------
# Newton / Laplace
# ---------------------------------------------------------------------------


def _newton_terms(P, targets, w, a):
    s = expit(P @ w)
    bd = s * (1.0 - s)
    grad = P.T @ (targets - s) - a * w
    H = P.T @ (bd[:, None] * P) + np.diag(a)
    return grad, H, bd


def _factor(H):
    ridged = False
    if np.linalg.cond(H) > MAX_CONDITION:
        H = H + RIDGE * np.eye(H.shape[0])
        ridged = True
    try:
        return cho_factor(H), ridged
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hessian not positive definite: {exc}") from exc


def train_original(phi, y, cfg: TrainConfig = TrainConfig()) -> FitResult:
    """Alternate Newton steps on ``w`` with ``alpha_s = gamma_s / w_s^2``.

    ``gamma_s`` uses the posterior covariance diagonal ``(H^-1)_ss``.
    Components whose precision passes ``1e12`` are pruned (weight pinned
    to 0). Stops after ``cfg.iterations`` cycles or once the largest weight
    change falls below ``1e-8``.
    """
    X, y = _validate(phi, y)
    m = X.shape[1]
    targets = (1.0 + y) / 2.0
    w, eta = _initial_state(cfg, m)
    alpha = alpha_from_eta(eta)
    active = np.ones(m, dtype=bool)
    w_rows, eta_rows = [], []
    ridge_count = 0
    converged = False
    for t in range(cfg.iterations):
        idx = np.flatnonzero(active)
        P = X[:, idx]
        a = alpha[idx]
        grad, H, _ = _newton_terms(P, targets, w[idx], a)
        fac, ridged = _factor(H)
        ridge_count += ridged
        step = cho_solve(fac, grad)
        w_new = w.copy()
        w_new[idx] += step
        alpha_step = alpha.copy()
        cov_diag = np.diag(cho_solve(fac, np.eye(idx.size)))
        gamma = 1.0 - a * cov_diag
        with np.errstate(divide="ignore"):
            a_new = gamma / w_new[idx] ** 2
        alpha[idx] = a_new
        prune = idx[~(a_new < ALPHA_PRUNE)]
        if prune.size:
            active[prune] = False
            w_new[prune] = 0.0
            alpha[prune] = ALPHA_PRUNE
        delta = np.max(np.abs(w_new - w))
        w = w_new
        w_rows.append(w.copy())
        eta_rows.append(np.log(alpha))
        if not active.any():
            log.warning("original RVM pruned every component at cycle %d", t + 1)
            break
        if delta < NEWTON_TOL:
            converged = True
            break

    # Laplace output at the final mode, with the precisions of the last
    # Newton step: w_MP = H^-1 Phi' B t, t = Phi w + B^-1 (y - sigma)
    idx = np.flatnonzero(active & (alpha_step < ALPHA_PRUNE))
    w_mp = np.zeros(m)
    stationarity = 0.0
    if idx.size:
        P = X[:, idx]
        grad, H, bd = _newton_terms(P, targets, w[idx], alpha_step[idx])
        fac, ridged = _factor(H)
        ridge_count += ridged
        s = expit(P @ w[idx])
        w_mp[idx] = cho_solve(fac, P.T @ (bd * (P @ w[idx]) + (targets - s)))
        stationarity = float(np.max(np.abs(grad)))
    trace = GibbsTrace(np.array(w_rows), np.array(eta_rows), None, burn_in=0,
                       ridge_count=ridge_count, converged=converged,
                       stationarity=stationarity)
    return FitResult(w_mp, ORIGINAL, trace, w_mode=w)


# ---------------------------------------------------------------------------
# Gibbs sweeps
# ---------------------------------------------------------------------------


@njit
def _sweep_weights(phiT, targets, w, alpha, scores, rng, grow):
    """Update every ``w_k`` in ascending order; ``scores`` tracks ``phi @ w``."""
    x_init = np.empty(2)
    for k in range(w.shape[0]):
        col = phiT[k]
        rest = scores - col * w[k]
        x_init[0] = w[k] - 1.0
        x_init[1] = w[k] + 1.0
        x, status, where = _ars_core(w_conditional_kernel, (rest, col, targets, alpha[k]),
                                     x_init, -np.inf, np.inf, rng, grow, CONCAVITY_TOL)
        if status != ARS_OK:
            return k, status, where
        w[k] = x
        scores[:] = rest + col * x
    return -1, ARS_OK, 0.0


@njit
def _sweep_eta(w, eta, mu, rho, tau2, n, rng, grow):
    """Update every ``eta_k`` in ascending order."""
    total = 0.0
    for s in range(eta.shape[0]):
        total += eta[s] - mu
    x_init = np.empty(2)
    for k in range(eta.shape[0]):
        others = total - (eta[k] - mu)
        params = (w[k] * w[k], mu, rho, tau2, float(n), others)
        x_init[0] = eta[k] - 1.0
        x_init[1] = eta[k] + 1.0
        x, status, where = _ars_core(eta_conditional_kernel, params, x_init,
                                     -np.inf, np.inf, rng, grow, CONCAVITY_TOL)
        if status != ARS_OK:
            return k, status, where
        eta[k] = x
        total = others + (x - mu)
    return -1, ARS_OK, 0.0


class _Recorder:
    """Stores (optionally thinned) draws and the post-burn-in running sum."""

    def __init__(self, cfg, m, hyper):
        rows = -(-cfg.iterations // cfg.thin)
        self.cfg = cfg
        self.w = np.empty((rows, m))
        self.eta = np.empty((rows, m))
        self.hyper = np.empty((rows, 3)) if hyper else None
        self.w_sum = np.zeros(m)
        self.clamps = 0

    def record(self, t, w, eta, hyper=None):
        if t >= self.cfg.burn_in:
            self.w_sum += w
        if t % self.cfg.thin == 0:
            r = t // self.cfg.thin
            self.w[r] = w
            self.eta[r] = eta
            if self.hyper is not None:
                self.hyper[r] = hyper

    def result(self, algorithm_id):
        cfg = self.cfg
        trace = GibbsTrace(self.w, self.eta, self.hyper, cfg.burn_in, cfg.thin,
                           clamp_count=self.clamps)
        if cfg.thin == 1:
            w_hat = self.w[cfg.burn_in:].mean(axis=0)
        else:
            w_hat = self.w_sum / (cfg.iterations - cfg.burn_in)
        if not np.all(np.isfinite(w_hat)):
            raise NumericalError("posterior mean of w is not finite")
        return FitResult(w_hat, algorithm_id, trace)


def _chain_inputs(X, y, cfg):
    if cfg.likelihood:
        return np.ascontiguousarray(X.T), (1.0 + y) / 2.0
    return np.zeros((X.shape[1], 0)), np.zeros(0)


def _w_step(t, phiT, targets, w, eta, rec, gen):
    alpha = alpha_from_eta(eta)
    # clamp events: precisions whose log falls outside [-40, 40]
    rec.clamps += int(np.count_nonzero(np.abs(eta) > ETA_CLAMP))
    scores = phiT.T @ w
    k, status, where = _sweep_weights(phiT, targets, w, alpha, scores, gen, BRACKET_GROW)
    if status != ARS_OK:
        raise_for_ars_status(status, where, f"iteration {t + 1}, weight w_{k}")


def train_generic(phi, y, cfg: TrainConfig = TrainConfig()) -> FitResult:
    """Gibbs sampler: ARS on each ``w_k``, then Gamma draws of every precision."""
    X, y = _validate(phi, y)
    m = X.shape[1]
    phiT, targets = _chain_inputs(X, y, cfg)
    w, eta = _initial_state(cfg, m)
    gen = _fresh_rng(cfg)
    rec = _Recorder(cfg, m, hyper=False)
    for t in range(cfg.iterations):
        _w_step(t, phiT, targets, w, eta, rec, gen)
        eta = sample_alpha_generic(w, cfg.generic, gen)
        rec.record(t, w, eta)
    return rec.result(GENERIC)


def train_hierarchical(phi, y, cfg: TrainConfig = TrainConfig()) -> FitResult:
    """Gibbs sampler over ``w``, ``eta``, ``rho``, ``mu`` and ``tau2`` in that order."""
    X, y = _validate(phi, y)
    m = X.shape[1]
    n = m - 1
    phiT, targets = _chain_inputs(X, y, cfg)
    w, eta = _initial_state(cfg, m)
    h = cfg.hier
    gen = _fresh_rng(cfg)
    rec = _Recorder(cfg, m, hyper=True)
    for t in range(cfg.iterations):
        _w_step(t, phiT, targets, w, eta, rec, gen)
        k, status, where = _sweep_eta(w, eta, h.mu, h.rho, h.tau2, n, gen, BRACKET_GROW)
        if status != ARS_OK:
            raise_for_ars_status(status, where, f"iteration {t + 1}, eta_{k}")
        rho = ratio_of_uniforms_sample(log_conditional_rho(eta, h, n), gen)
        h = h.replace(rho=rho)
        h = h.replace(mu=sample_mu(eta, h, n, gen))
        h = h.replace(tau2=sample_tau2(eta, h, n, gen))
        rec.record(t, w, eta, (h.rho, h.mu, h.tau2))
    return rec.result(HIERARCHICAL)


TRAINERS = {ORIGINAL: train_original, GENERIC: train_generic,
            HIERARCHICAL: train_hierarchical}


def train(algorithm_id, phi, y, cfg: TrainConfig = TrainConfig()) -> FitResult:
    try:
        trainer = TRAINERS[algorithm_id]
    except KeyError:
        raise InputError(f"unknown algorithm {algorithm_id!r}; choose from {ALGORITHMS}")
    return trainer(phi, y, cfg)


def evaluate_fit(fit: FitResult, phi_test, y_test=None):
    """Labels and probabilities for a test design built on the same training set."""
    X = np.asarray(getattr(phi_test, "values", phi_test), dtype=float)
    if X.ndim != 2 or X.shape[1] != fit.w_hat.shape[0]:
        raise InputError(f"test design has {X.shape[-1]} columns, model expects "
                         f"{fit.w_hat.shape[0]}")
    if y_test is not None and len(y_test) != X.shape[0]:
        raise InputError("test labels do not match the test design rows")
    return predict(fit.w_hat, X)
