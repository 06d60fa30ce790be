"""Random-variate machinery used by the Gibbs trainers.

All samplers draw from an :class:`RngStream`. The adaptive rejection sampler
is written once in numba-compatible Python: the compiled form drives the
trainer sweeps and ``_ars_core.py_func`` serves arbitrary Python callables.
"""
from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import ConfigurationError, InputError, NumericalError

# ARS status codes returned by the core
ARS_OK = 0
ARS_NONCONCAVE = 1
ARS_UNBRACKETED = 2
ARS_NONFINITE = 3
ARS_EXHAUSTED = 4

CONCAVITY_TOL = 1e-8
ARS_MAX_POINTS = 64
ARS_MAX_PROPOSALS = 100_000

ROU_GRID_POINTS = 4096
ROU_INFLATION = 1.05
ROU_MAX_PROPOSALS = 1_000_000


class RngStream:
    """Seeded random source identified by ``(seed, stream_id)``.

    Child streams are derived through :class:`numpy.random.SeedSequence`
    spawn keys, so ``RngStream(s, i).child(j)`` is reproducible and
    independent of every other ``(s, key)`` pair.
    """

    def __init__(self, seed: int, stream_id: int = 0, _key: Optional[tuple] = None):
        if seed < 0 or stream_id < 0:
            raise InputError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.key = (self.stream_id,) if _key is None else tuple(_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, index, _key=self.key + (int(index),))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise InputError(f"expected RngStream, got {type(rng).__name__}")


@dataclass(frozen=True)
class LogDensity:
    """Unnormalized univariate log density on the open interval ``support``.

    ``jit`` optionally holds ``(kernel, params)`` where ``kernel`` is a numba
    function; when present the compiled sampler cores are used. For ARS
    targets the kernel returns ``(log_f, dlog_f)``, for ratio-of-uniforms
    targets just ``log_f``. ``vectorized`` marks a ``log_f`` that accepts
    arrays.
    """

    log_f: Callable[[float], float]
    dlog_f: Optional[Callable[[float], float]] = None
    support: tuple = (-math.inf, math.inf)
    vectorized: bool = False
    jit: Optional[tuple] = field(default=None, compare=False, repr=False)
    _cache: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise InputError(f"empty support {self.support}")


# ---------------------------------------------------------------------------
# adaptive rejection sampling
# ---------------------------------------------------------------------------


@njit(cache=True)
def _intersections(xs, hs, ds, k, lo, hi, z):
    z[0] = lo
    z[k] = hi
    for j in range(k - 1):
        dd = ds[j] - ds[j + 1]
        if dd > 1e-12 * max(1.0, abs(ds[j]), abs(ds[j + 1])):
            zz = (hs[j + 1] - hs[j] - xs[j + 1] * ds[j + 1] + xs[j] * ds[j]) / dd
            # tangents of a concave function cross inside the bracket
            if zz < xs[j]:
                zz = xs[j]
            elif zz > xs[j + 1]:
                zz = xs[j + 1]
        else:
            zz = 0.5 * (xs[j] + xs[j + 1])
        z[j + 1] = zz


@njit(cache=True)
def _piece_logmass(a, b, xj, hj, dj):
    if not b > a:
        return -np.inf
    length = b - a
    if math.isfinite(length) and abs(dj) * length < 1e-12:
        return hj + dj * (a - xj) + math.log(length)
    if dj < 0.0:
        return hj + dj * (a - xj) + math.log(-math.expm1(dj * length)) - math.log(-dj)
    return hj + dj * (b - xj) + math.log(-math.expm1(-dj * length)) - math.log(dj)


@njit(cache=True)
def _upper_at(xs, hs, ds, k, z, x):
    j = 0
    while j < k - 1 and x > z[j + 1]:
        j += 1
    return hs[j] + ds[j] * (x - xs[j])


@njit(cache=True)
def _lower_at(xs, hs, k, x):
    if x < xs[0] or x > xs[k - 1]:
        return -np.inf
    j = 0
    while j < k - 2 and x > xs[j + 1]:
        j += 1
    dx = xs[j + 1] - xs[j]
    if dx <= 0.0:
        return hs[j]
    t = (x - xs[j]) / dx
    return (1.0 - t) * hs[j] + t * hs[j + 1]


@njit(cache=True)
def _check_concave(xs, hs, ds, k, tol):
    """Index of the first abscissa whose tangent dips below a neighbour."""
    for j in range(k - 1):
        dx = xs[j + 1] - xs[j]
        scale = tol * max(1.0, abs(hs[j]), abs(hs[j + 1]))
        if hs[j] + ds[j] * dx < hs[j + 1] - scale:
            return j + 1
        if hs[j + 1] - ds[j + 1] * dx < hs[j] - scale:
            return j
    return -1


@njit(cache=True)
def _insert(xs, hs, ds, k, x, h, d):
    i = k
    while i > 0 and xs[i - 1] > x:
        xs[i] = xs[i - 1]
        hs[i] = hs[i - 1]
        ds[i] = ds[i - 1]
        i -= 1
    xs[i] = x
    hs[i] = h
    ds[i] = d
    return k + 1


@njit(cache=True)
def _ars_core(target, params, x_init, lo, hi, rng, grow, tol):
    """One ARS draw. Returns ``(x, status, offending_abscissa)``.

    ``grow`` > 0 lets the sampler extend the initial bracket outward (at
    most ``grow`` times per side) when the supplied points do not straddle
    the mode on an unbounded side. Starting from ``c +- 1`` the extensions
    land on ``c +- 4``, ``c +- 16``, ``c +- 64``, ...
    """
    cap = ARS_MAX_POINTS
    xs = np.empty(cap)
    hs = np.empty(cap)
    ds = np.empty(cap)
    z = np.empty(cap + 1)
    k = 0
    for i in range(x_init.shape[0]):
        x = x_init[i]
        if not (x > lo and x < hi):
            continue
        dup = False
        for j in range(k):
            if xs[j] == x:
                dup = True
        if dup or k >= cap:
            continue
        h, d = target(x, params)
        if not (math.isfinite(h) and math.isfinite(d)):
            return x, ARS_NONFINITE, x
        k = _insert(xs, hs, ds, k, x, h, d)
    if k == 0:
        return np.nan, ARS_UNBRACKETED, np.nan

    # extend the bracket on unbounded sides
    first_step = 3.0 * max(1.0, 0.5 * (xs[k - 1] - xs[0]))
    if lo == -np.inf:
        step = first_step
        tries = 0
        while ds[0] <= 0.0:
            if tries >= grow or k >= cap:
                return np.nan, ARS_UNBRACKETED, xs[0]
            x = xs[0] - step
            step *= 4.0
            h, d = target(x, params)
            if not (math.isfinite(h) and math.isfinite(d)):
                return x, ARS_NONFINITE, x
            k = _insert(xs, hs, ds, k, x, h, d)
            tries += 1
    if hi == np.inf:
        step = first_step
        tries = 0
        while ds[k - 1] >= 0.0:
            if tries >= grow or k >= cap:
                return np.nan, ARS_UNBRACKETED, xs[k - 1]
            x = xs[k - 1] + step
            step *= 4.0
            h, d = target(x, params)
            if not (math.isfinite(h) and math.isfinite(d)):
                return x, ARS_NONFINITE, x
            k = _insert(xs, hs, ds, k, x, h, d)
            tries += 1

    logm = np.empty(cap)
    for _ in range(ARS_MAX_PROPOSALS):
        bad = _check_concave(xs, hs, ds, k, tol)
        if bad >= 0:
            return np.nan, ARS_NONCONCAVE, xs[bad]
        _intersections(xs, hs, ds, k, lo, hi, z)
        top = -np.inf
        for j in range(k):
            logm[j] = _piece_logmass(z[j], z[j + 1], xs[j], hs[j], ds[j])
            if logm[j] > top:
                top = logm[j]
        if not math.isfinite(top):
            return np.nan, ARS_UNBRACKETED, xs[0]
        total = 0.0
        for j in range(k):
            total += math.exp(logm[j] - top)

        # pick a piece, then invert its truncated exponential CDF
        u = rng.random() * total
        j = 0
        acc = math.exp(logm[0] - top)
        while acc < u and j < k - 1:
            j += 1
            acc += math.exp(logm[j] - top)
        a = z[j]
        b = z[j + 1]
        s = ds[j]
        u2 = rng.random()
        length = b - a
        if math.isfinite(length) and abs(s) * length < 1e-12:
            x = a + u2 * length
        elif s < 0.0:
            x = a + math.log1p(u2 * math.expm1(s * length)) / s
        else:
            x = b + math.log1p(u2 * math.expm1(-s * length)) / s
        u3 = rng.random()
        if not (x > lo and x < hi) or not math.isfinite(x):
            continue
        upper = hs[j] + ds[j] * (x - xs[j])
        logu = math.log(u3) if u3 > 0.0 else -np.inf
        if logu <= _lower_at(xs, hs, k, x) - upper:
            return x, ARS_OK, np.nan
        h, d = target(x, params)
        if not (math.isfinite(h) and math.isfinite(d)):
            return x, ARS_NONFINITE, x
        if h > upper + tol * max(1.0, abs(h)):
            return np.nan, ARS_NONCONCAVE, x
        if logu <= h - upper:
            return x, ARS_OK, np.nan
        if k < cap:
            dup = False
            for i in range(k):
                if xs[i] == x:
                    dup = True
            if not dup:
                k = _insert(xs, hs, ds, k, x, h, d)
    return np.nan, ARS_EXHAUSTED, np.nan


def raise_for_ars_status(status, where, context=""):
    """Translate a core status code into the package's exceptions."""
    if status == ARS_OK:
        return
    ctx = f" ({context})" if context else ""
    if status == ARS_NONCONCAVE:
        raise NumericalError(f"log density is not concave near x={where!r}{ctx}")
    if status == ARS_UNBRACKETED:
        raise ConfigurationError(
            f"initial abscissae do not bracket the mode (edge x={where!r}){ctx}")
    if status == ARS_NONFINITE:
        raise NumericalError(f"log density not finite at x={where!r}{ctx}")
    raise NumericalError(f"adaptive rejection sampling made no progress{ctx}")


def _python_target(x, params):
    log_f, dlog_f = params
    return float(log_f(x)), float(dlog_f(x))


def _numeric_derivative(log_f):
    def dlog_f(x):
        h = 1e-5 * max(1.0, abs(x))
        return (log_f(x + h) - log_f(x - h)) / (2.0 * h)

    return dlog_f


def ars_sample(target: LogDensity, init_abscissae, rng, grow: int = 0) -> float:
    """Draw one exact sample from ``exp(target.log_f)`` by adaptive rejection.

    Parameters
    ----------
    target : LogDensity
        Log-concave target. Without ``dlog_f`` a central difference is used.
    init_abscissae : sequence of float
        Starting points inside the support; on an unbounded side they must
        include a point with the derivative pointing back towards the mode.
    rng : RngStream
    grow : int
        Allowed number of outward bracket extensions per side (0 = strict).
    """
    lo, hi = (float(v) for v in target.support)
    x0 = np.asarray(init_abscissae, dtype=float).ravel()
    if x0.size < 2 and grow == 0:
        raise ConfigurationError("need at least two initial abscissae")
    gen = as_generator(rng)
    if target.jit is not None:
        kernel, params = target.jit
        x, status, where = _ars_core(kernel, params, x0, lo, hi, gen, grow, CONCAVITY_TOL)
    else:
        dlog_f = target.dlog_f or _numeric_derivative(target.log_f)
        x, status, where = _ars_core.py_func(
            _python_target, (target.log_f, dlog_f), x0, lo, hi, gen, grow, CONCAVITY_TOL)
    raise_for_ars_status(status, where)
    return float(x)


class Hull:
    """Upper (tangent) and lower (chord) hulls over a set of abscissae.

    Exposed for inspection and testing; the sampler builds the same
    envelopes internally.
    """

    def __init__(self, target: LogDensity, abscissae):
        lo, hi = target.support
        dlog_f = target.dlog_f or _numeric_derivative(target.log_f)
        xs = np.sort(np.unique(np.asarray(abscissae, dtype=float)))
        self.k = xs.size
        self.xs = xs
        self.hs = np.array([target.log_f(x) for x in xs], dtype=float)
        self.ds = np.array([dlog_f(x) for x in xs], dtype=float)
        self.z = np.empty(self.k + 1)
        self.lo, self.hi = float(lo), float(hi)
        bad = _check_concave(self.xs, self.hs, self.ds, self.k, CONCAVITY_TOL)
        if bad >= 0:
            raise NumericalError(f"log density is not concave near x={self.xs[bad]!r}")
        _intersections(self.xs, self.hs, self.ds, self.k, self.lo, self.hi, self.z)

    def upper(self, x):
        return _upper_at(self.xs, self.hs, self.ds, self.k, self.z, float(x))

    def lower(self, x):
        return _lower_at(self.xs, self.hs, self.k, float(x))


# ---------------------------------------------------------------------------
# ratio of uniforms
# ---------------------------------------------------------------------------

ROU_ZOOM_LEVELS = 3
ROU_ZOOM_POINTS = 64
# offsets from the mode probed on each side, as fractions of the distance
# to the support edge, from 1e-15 up to 1
ROU_OFFSET_POINTS = 64


@njit(cache=True)
def _rou_objective(j, x, log_f, shift, mode):
    half_log = 0.5 * (log_f - shift)
    if j == 0:
        return half_log
    r = math.exp(half_log)
    return (x - mode) * r if j == 1 else (mode - x) * r


@njit(cache=True)
def _rou_extremum(j, xs, vals, lo, hi, shift, mode):
    """Best candidate for objective ``j``; returns its value and the bracket around it."""
    best = -np.inf
    i_best = 0
    for i in range(xs.shape[0]):
        if vals[i] == -np.inf:
            continue
        o = _rou_objective(j, xs[i], vals[i], shift, mode)
        if o > best:
            best = o
            i_best = i
    left = lo if i_best == 0 else xs[i_best - 1]
    right = hi if i_best == xs.shape[0] - 1 else xs[i_best + 1]
    return best, xs[i_best], left, right


@njit(cache=True)
def _merge_sorted(xa, va, xb, vb):
    """Merge two x-sorted point sets, carrying their values along."""
    n = xa.shape[0] + xb.shape[0]
    xs = np.empty(n)
    vals = np.empty(n)
    i = 0
    j = 0
    for m in range(n):
        if j == xb.shape[0] or (i < xa.shape[0] and xa[i] <= xb[j]):
            xs[m] = xa[i]
            vals[m] = va[i]
            i += 1
        else:
            xs[m] = xb[j]
            vals[m] = vb[j]
            j += 1
    return xs, vals


@njit(cache=True)
def _rou_bounds_core(target, params, lo, hi, n_grid, inflation):
    """Returns ``(shift, mode, a, b_minus, b_plus, bad_x)``; ``bad_x`` is NaN on success.

    Phase 0 scans the uniform grid and refines the mode. Phase 1 adds points
    packed geometrically around that mode, so narrow peaks are resolved at
    every scale, and locates all three extrema.
    """
    h = (hi - lo) / n_grid
    xs = np.empty(n_grid)
    vals = np.empty(n_grid)
    shift = -np.inf
    mode = 0.5 * (lo + hi)
    for i in range(n_grid):
        x = lo + (i + 0.5) * h
        v = target(x, params)
        if not math.isfinite(v):
            return np.nan, np.nan, np.nan, np.nan, np.nan, x
        xs[i] = x
        vals[i] = v
        if v > shift:
            shift = v
            mode = x
    bounds = np.zeros(3)
    for phase in range(2):
        if phase == 1:
            # offsets in increasing x: left side, the mode, right side
            k = 2 * ROU_OFFSET_POINTS + 1
            more_x = np.empty(k)
            more_v = np.empty(k)
            for i in range(k):
                if i < ROU_OFFSET_POINTS:
                    frac = 10.0 ** (-15.0 * i / (ROU_OFFSET_POINTS - 1))
                    x = mode - (mode - lo) * frac
                elif i == ROU_OFFSET_POINTS:
                    x = mode
                else:
                    frac = 10.0 ** (-15.0 * (k - 1 - i) / (ROU_OFFSET_POINTS - 1))
                    x = mode + (hi - mode) * frac
                v = target(x, params) if lo < x < hi else -np.inf
                if math.isnan(v) or v == np.inf:
                    return np.nan, np.nan, np.nan, np.nan, np.nan, x
                more_x[i] = x
                more_v[i] = v
            xs, vals = _merge_sorted(xs, vals, more_x, more_v)
        for j in range(1 if phase == 0 else 3):
            best, x_best, left, right = _rou_extremum(j, xs, vals, lo, hi, shift, mode)
            # nested grids between the neighbours of the best candidate
            for _ in range(ROU_ZOOM_LEVELS):
                step = (right - left) / ROU_ZOOM_POINTS
                for p in range(1, ROU_ZOOM_POINTS):
                    x = left + p * step
                    v = target(x, params)
                    if not math.isfinite(v):
                        continue
                    o = _rou_objective(j, x, v, shift, mode)
                    if o > best:
                        best = o
                        x_best = x
                left = max(left, x_best - step)
                right = min(right, x_best + step)
            if j == 0:
                # move to the refined mode; objective 0 is then exactly 0
                shift += 2.0 * best
                mode = x_best
                best = 0.0
            bounds[j] = best
    a = math.exp(bounds[0]) * inflation
    return shift, mode, a, -bounds[2] * inflation, bounds[1] * inflation, np.nan


@njit(cache=True)
def _rou_core(target, params, lo, hi, rng, shift, mode, a, b_minus, b_plus, max_proposals):
    for _ in range(max_proposals):
        u = rng.random() * a
        v = b_minus + rng.random() * (b_plus - b_minus)
        if u <= 0.0:
            continue
        x = mode + v / u
        if not (x > lo and x < hi):
            continue
        if 2.0 * math.log(u) <= target(x, params) - shift:
            return x
    return np.nan


def _python_scalar_target(x, log_f):
    return float(log_f(x))


def _rou_callable(target):
    if target.jit is not None:
        kernel, params = target.jit
        return kernel, params, True
    return _python_scalar_target, target.log_f, False


def rou_bounds(target: LogDensity, n_grid=ROU_GRID_POINTS):
    """Bounding rectangle ``(log_shift, mode, a, b_minus, b_plus)`` for ratio of uniforms.

    Proposals are ``x = mode + v/u`` with ``(u, v)`` uniform on
    ``[0, a] x [b_minus, b_plus]``. For the shifted density
    ``g = f * exp(-log_shift)``, ``a`` is the sup of ``sqrt(g)`` and
    ``b_minus``/``b_plus`` the inf/sup of ``(x - mode) sqrt(g)``. They are
    located on an ``n_grid``-point grid plus geometrically spaced offsets
    around the mode, polished on nested grids and inflated by 5%. The
    result is cached on the target.
    """
    cached = target._cache.get(("rou", n_grid))
    if cached is not None:
        return cached
    lo, hi = (float(v) for v in target.support)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InputError("ratio-of-uniforms sampling needs a bounded support")
    fn, params, compiled = _rou_callable(target)
    core = _rou_bounds_core if compiled else _rou_bounds_core.py_func
    shift, mode, a, b_minus, b_plus, bad = core(fn, params, lo, hi, n_grid, ROU_INFLATION)
    if not math.isnan(bad):
        raise NumericalError(f"target not finite at grid point x={bad!r}")
    if not math.isfinite(shift):
        raise NumericalError("target has no finite value on the grid")
    bounds = (shift, mode, a, b_minus, b_plus)
    target._cache[("rou", n_grid)] = bounds
    return bounds


def ratio_of_uniforms_sample(target: LogDensity, rng) -> float:
    """One exact draw from a bounded-support density by ratio of uniforms."""
    lo, hi = (float(v) for v in target.support)
    shift, mode, a, b_minus, b_plus = rou_bounds(target)
    fn, params, compiled = _rou_callable(target)
    core = _rou_core if compiled else _rou_core.py_func
    x = core(fn, params, lo, hi, as_generator(rng), shift, mode, a, b_minus, b_plus,
             ROU_MAX_PROPOSALS)
    if math.isnan(x):
        raise NumericalError(
            f"ratio of uniforms accepted nothing in {ROU_MAX_PROPOSALS} proposals")
    return float(x)


# ---------------------------------------------------------------------------
# standard draws
# ---------------------------------------------------------------------------


def gamma_sample(shape, rate, rng, size=None):
    """Gamma draw in the shape-rate parameterization (mean ``shape/rate``)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise InputError("gamma shape and rate must be positive")
    out = as_generator(rng).gamma(shape, 1.0 / rate, size=size)
    return float(out) if np.ndim(out) == 0 else out


def normal_sample(mean, variance, rng, size=None):
    if not variance > 0:
        raise InputError("normal variance must be positive")
    out = as_generator(rng).normal(mean, math.sqrt(variance), size=size)
    return float(out) if np.ndim(out) == 0 else out


def mvn_sample(mean, covariance, rng, size=None):
    """Multivariate normal draw(s) through a symmetric eigen-factorization.

    Returns shape ``(d,)`` for ``size=None`` and ``(size, d)`` otherwise.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise InputError(f"covariance shape {cov.shape} does not match mean length {d}")
    if not np.array_equal(cov, cov.T):
        raise InputError("covariance must be symmetric")
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -1e-10 * max(1.0, abs(evals.max())):
        raise InputError("covariance must be positive semi-definite")
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    count = 1 if size is None else int(size)
    draws = as_generator(rng).standard_normal((count, d)) @ factor.T + mean
    return draws[0] if size is None else draws
