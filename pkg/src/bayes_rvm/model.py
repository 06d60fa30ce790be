"""Likelihood, priors and full conditionals of the RVM classification model.

Indices run ``s = 0..n`` everywhere, ``s = 0`` being the bias. Hierarchical
sums over ``n + 1`` components include the bias. Precision vectors are
carried as ``eta = log(alpha)``; ``alpha`` is recovered with
:func:`alpha_from_eta`, which clamps the exponent to ``[-40, 40]``. The
clamp applies where a precision enters the weight prior; the ``eta``
conditional itself uses the unclamped exponential so it keeps pulling
``eta`` back once the weight has shrunk.
"""
from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy.special import expit, log_expit

from .errors import InputError, NumericalError
from .samplers import LogDensity, gamma_sample, normal_sample

ETA_CLAMP = 40.0
# largest exponent evaluated exactly in the eta conditional
EXP_LIMIT = 600.0


@dataclass(frozen=True)
class GenericHyper:
    """Gamma(a, b) hyperprior on each precision, shape-rate convention."""

    a: float = 1.0
    b: float = 1.0 / 999.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InputError("Gamma hyperparameters a, b must be positive")


@dataclass(frozen=True)
class HierHyper:
    """State of the hierarchical layer plus the Gamma(c, d) prior on 1/tau2."""

    mu: float = 0.0
    rho: float = 0.5
    tau2: float = 100.0
    c: float = 1.0
    d: float = 1.0 / 999.0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise InputError(f"rho must lie in (0, 1), got {self.rho}")
        if not (self.tau2 > 0 and self.c > 0 and self.d > 0):
            raise InputError("tau2, c and d must be positive")
        if not math.isfinite(self.mu):
            raise InputError("mu must be finite")

    def replace(self, **changes):
        fields = dict(mu=self.mu, rho=self.rho, tau2=self.tau2, c=self.c, d=self.d)
        fields.update(changes)
        return HierHyper(**fields)


def check_labels(y):
    y = np.asarray(y)
    if y.ndim != 1:
        raise InputError("labels must be a 1-d vector")
    if not np.all((y == 1) | (y == -1)):
        raise InputError("labels must be -1 or +1")
    return y.astype(np.int64)


def alpha_from_eta(eta):
    return np.exp(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def _phi_values(phi):
    return getattr(phi, "values", phi)


def log_likelihood(w, phi, y) -> float:
    """Bernoulli-logistic log likelihood of labels ``y`` under scores ``phi @ w``."""
    y = check_labels(y)
    X = np.asarray(_phi_values(phi), dtype=float)
    w = np.asarray(w, dtype=float)
    if X.shape != (y.shape[0], w.shape[0]):
        raise InputError(f"design shape {X.shape} incompatible with {y.shape[0]} labels "
                         f"and {w.shape[0]} weights")
    z = X @ w
    return float(np.sum(np.where(y > 0, log_expit(z), log_expit(-z))))


# ---------------------------------------------------------------------------
# weight conditional
# ---------------------------------------------------------------------------


@njit(cache=True)
def w_conditional_kernel(x, params):
    """Log density of ``w_k`` and its derivative.

    ``params = (rest, column, targets, alpha_k)`` where ``rest`` holds the
    scores with ``w_k`` removed and ``targets`` the 0/1-coded labels.
    """
    rest, col, targets, alpha_k = params
    f = -0.5 * alpha_k * x * x
    d = -alpha_k * x
    for i in range(rest.shape[0]):
        z = rest[i] + col[i] * x
        if z > 0.0:
            softplus = z + math.log1p(math.exp(-z))
            sig = 1.0 / (1.0 + math.exp(-z))
        else:
            ez = math.exp(z)
            softplus = math.log1p(ez)
            sig = ez / (1.0 + ez)
        f += targets[i] * z - softplus
        d += col[i] * (targets[i] - sig)
    return f, d


def _bind(kernel, params, support=(-math.inf, math.inf)):
    return LogDensity(
        log_f=lambda x: kernel(float(x), params)[0],
        dlog_f=lambda x: kernel(float(x), params)[1],
        support=support,
        jit=(kernel, params),
    )


def log_conditional_w(k, w, eta, phi, y) -> LogDensity:
    """Full conditional of ``w_k`` with every other coordinate frozen.

    Pass ``phi=None, y=None`` for the prior-only density N(0, 1/alpha_k).
    """
    w = np.asarray(w, dtype=float)
    if not 0 <= k < w.shape[0]:
        raise InputError(f"coordinate {k} out of range for {w.shape[0]} weights")
    alpha_k = float(alpha_from_eta(np.asarray(eta, dtype=float)[k]))
    if phi is None:
        empty = np.zeros(0)
        return _bind(w_conditional_kernel, (empty, empty, empty, alpha_k))
    y = check_labels(y)
    X = np.asarray(_phi_values(phi), dtype=float)
    col = np.ascontiguousarray(X[:, k])
    rest = X @ w - col * w[k]
    targets = (1.0 + y) / 2.0
    return _bind(w_conditional_kernel, (rest, col, targets, alpha_k))


# ---------------------------------------------------------------------------
# hierarchical layer
# ---------------------------------------------------------------------------


@njit(cache=True)
def eta_conditional_kernel(x, params):
    """Log density of ``eta_k`` and its derivative.

    ``params = (w_k**2, mu, rho, tau2, n, others)`` with ``others`` the sum
    of ``eta_s - mu`` over ``s != k``. The term ``exp(eta_k) w_k^2`` is
    evaluated as ``exp(eta_k + log w_k^2)``; past ``EXP_LIMIT`` the
    exponential is continued by its tangent line, which keeps the density
    log-concave and finite.
    """
    wk2, mu, rho, tau2, n, others = params
    denom = tau2 * (1.0 - rho) * (1.0 + n * rho)
    quad = (1.0 + (n - 1.0) * rho) / denom
    dev = x - mu
    e = 0.0
    if wk2 > 0.0:
        u = x + math.log(wk2)
        if u > EXP_LIMIT:
            e = math.exp(EXP_LIMIT) * (1.0 + (u - EXP_LIMIT))
            de = math.exp(EXP_LIMIT)
        else:
            e = math.exp(u)
            de = e
    else:
        de = 0.0
    f = 0.5 * x - 0.5 * e - 0.5 * quad * dev * dev + rho * dev * others / denom
    d = 0.5 - 0.5 * de - quad * dev + rho * others / denom
    return f, d


def eta_curvature(w_k, eta_k, h: HierHyper, n) -> float:
    """Closed-form second derivative of the ``eta_k`` conditional."""
    return (-0.5 * math.exp(eta_k) * w_k * w_k
            - (1.0 + (n - 1.0) * h.rho) / (h.tau2 * (1.0 - h.rho) * (1.0 + n * h.rho)))


def log_conditional_eta(k, w, eta, h: HierHyper, n) -> LogDensity:
    eta = np.asarray(eta, dtype=float)
    if not 0 <= k <= n or eta.shape[0] != n + 1:
        raise InputError(f"coordinate {k} invalid for n={n}, len(eta)={eta.shape[0]}")
    others = float(np.sum(eta - h.mu) - (eta[k] - h.mu))
    wk = float(np.asarray(w, dtype=float)[k])
    params = (wk * wk, float(h.mu), float(h.rho), float(h.tau2), float(n), others)
    return _bind(eta_conditional_kernel, params)


def _hier_sums(eta, mu):
    dev = np.asarray(eta, dtype=float) - mu
    return float(dev @ dev), float(dev.sum())


def quadratic_form(eta, mu, rho, n) -> float:
    """``(eta - mu 1)' Sigma^{-1} (eta - mu 1)`` for the equicorrelation Sigma.

    Evaluated as ``sum((eta - mean)^2)/(1-rho) + (n+1)(mean - mu)^2/(1+n rho)``,
    which is non-negative term by term.
    """
    eta = np.asarray(eta, dtype=float)
    m = eta.mean()
    spread = float(np.sum((eta - m) ** 2))
    return spread / (1.0 - rho) + (n + 1) * (m - mu) ** 2 / (1.0 + n * rho)


@njit(cache=True)
def rho_conditional_kernel(rho, params):
    """Log density of ``rho``; ``params = (n, spread, offset, tau2)``.

    ``spread`` is ``sum((eta - mean)^2)`` and ``offset`` is
    ``(n+1)(mean - mu)^2``, so the exponent equals ``-Q / (2 tau2)`` with Q
    from :func:`quadratic_form`.
    """
    n, spread, offset, tau2 = params
    if not (rho > 0.0 and rho < 1.0):
        return -np.inf
    return (-0.5 * n * math.log1p(-rho) - 0.5 * math.log1p(n * rho)
            - (spread / (1.0 - rho) + offset / (1.0 + n * rho)) / (2.0 * tau2))


def log_conditional_rho(eta, h: HierHyper, n) -> LogDensity:
    """Conditional of ``rho`` on (0, 1); ``log_f`` also accepts arrays."""
    eta = np.asarray(eta, dtype=float)
    m = eta.mean()
    params = (float(n), float(np.sum((eta - m) ** 2)), float((n + 1) * (m - h.mu) ** 2),
              float(h.tau2))

    def log_f(rho):
        if np.ndim(rho) == 0:
            return rho_conditional_kernel(float(rho), params)
        flat = np.asarray(rho, dtype=float).ravel()
        out = np.array([rho_conditional_kernel(v, params) for v in flat])
        return out.reshape(np.shape(rho))

    return LogDensity(log_f=log_f, support=(0.0, 1.0), vectorized=True,
                      jit=(rho_conditional_kernel, params))


def sample_alpha_generic(w, g: GenericHyper, rng):
    """Independent Gamma(a + 1/2, b + w_s^2/2) precisions, returned as eta."""
    w = np.asarray(w, dtype=float)
    alpha = gamma_sample(np.full(w.shape, g.a + 0.5), g.b + 0.5 * w * w, rng)
    return np.log(alpha)


def mu_posterior(eta, h: HierHyper, n):
    eta = np.asarray(eta, dtype=float)
    return float(eta.mean()), h.tau2 * (1.0 + n * h.rho) / (n + 1)


def tau2_increment(eta, mu, rho, n) -> float:
    """Rate increment ``S1/(1-rho) - rho S2^2/((1-rho)(1+n rho))`` as written."""
    s1, s2 = _hier_sums(eta, mu)
    return s1 / (1.0 - rho) - rho * s2 * s2 / ((1.0 - rho) * (1.0 + n * rho))


def tau2_posterior(eta, h: HierHyper, n):
    """Shape and rate of the Gamma conditional of ``1/tau2``."""
    literal = tau2_increment(eta, h.mu, h.rho, n)
    stable = quadratic_form(eta, h.mu, h.rho, n)
    if literal < -1e-10 * max(1.0, stable):
        raise NumericalError(f"negative tau2 rate increment {literal!r}")
    return h.c + 0.5 * (n + 1), h.d + 0.5 * stable


def sample_mu(eta, h: HierHyper, n, rng) -> float:
    mean, var = mu_posterior(eta, h, n)
    return normal_sample(mean, var, rng)


def sample_tau2(eta, h: HierHyper, n, rng) -> float:
    shape, rate = tau2_posterior(eta, h, n)
    return 1.0 / gamma_sample(shape, rate, rng)


def student_t_marginal(w, g: GenericHyper) -> float:
    """Closed-form marginal prior of one weight after integrating out alpha."""
    a, b = g.a, g.b
    log_c = a * math.log(b) + math.lgamma(a + 0.5) - 0.5 * math.log(2 * math.pi) - math.lgamma(a)
    return math.exp(log_c - (a + 0.5) * math.log(b + 0.5 * w * w))


def predict(w, phi):
    """Labels and probabilities; a probability of exactly 1/2 maps to +1."""
    X = np.asarray(_phi_values(phi), dtype=float)
    w = np.asarray(w, dtype=float)
    if X.shape[1] != w.shape[0]:
        raise InputError(f"design has {X.shape[1]} columns but w has {w.shape[0]} entries")
    prob = expit(X @ w)
    labels = np.where(prob - 0.5 >= 0.0, 1, -1)
    return labels, prob
