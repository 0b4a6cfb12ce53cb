"""Closed-form WAIC on two-component mixture posteriors and the borrowing gate.

WAIC here is ``-2 sum_i E[log f(y_i|theta)] + 2 sum_i Var[log f(y_i|theta)]``
with moments taken under the mixture posterior.  It is a concave quadratic in
the posterior weight ``w*``, so the gate only compares full borrowing
(``w = 1``) with no borrowing (``w = 0``) through
``k = WAIC(1) - WAIC(0)``; ``k <= 0`` means borrow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from . import specfun
from .errors import DomainError, IntegrityError
from .model import (
    BetaShape,
    BinaryDataset,
    ContinuousStats,
    HistoricalBinary,
    HistoricalContinuous,
    _posterior_weight,
    binary_posterior,
    continuous_posterior,
)

__all__ = [
    "WaicValue",
    "GateDecision",
    "BorrowingRegionBinary",
    "BorrowingRegionContinuous",
    "beta_log_moments",
    "waic_binary",
    "waic_binary_at",
    "waic_binary_curve",
    "binary_quadratic_coefficients",
    "k_binary",
    "borrowing_region_binary",
    "region_table_binary",
    "waic_continuous",
    "waic_continuous_at",
    "waic_continuous_raw",
    "k_continuous",
    "borrowing_region_continuous",
    "gate_binary",
    "gate_continuous",
]


@dataclass(frozen=True)
class WaicValue:
    total: float
    fit_term: float
    penalty_term: float
    w_star: float = float("nan")


@dataclass(frozen=True)
class GateDecision:
    borrow: bool
    waic0: WaicValue
    waic1: WaicValue
    k: float


@dataclass(frozen=True)
class BorrowingRegionBinary:
    x_lower: int
    x_upper: int
    empty: bool
    connected: bool = True

    def contains(self, x: int) -> bool:
        return not self.empty and self.x_lower <= x <= self.x_upper


@dataclass(frozen=True)
class BorrowingRegionContinuous:
    ybar_lower: float
    ybar_upper: float
    sigma: float
    empty: bool
    sign_changes: int = 2
    diagnostics: tuple = field(default=())

    def contains(self, ybar: float) -> bool:
        return not self.empty and self.ybar_lower <= ybar <= self.ybar_upper


# --------------------------------------------------------------------------
# binary endpoint


def beta_log_moments(a, b):
    """Mean and variance of log(theta) and log(1 - theta) under Beta(a, b).

    Returns ``(E log t, E log(1-t), Var log t, Var log(1-t))``; broadcasts.
    """
    psi_ab = specfun.digamma(np.asarray(a, float) + b)
    tri_ab = specfun.trigamma(np.asarray(a, float) + b)
    return (specfun.digamma(a) - psi_ab, specfun.digamma(b) - psi_ab,
            specfun.trigamma(a) - tri_ab, specfun.trigamma(b) - tri_ab)


def _binary_moments(prior, x, n, hist):
    a, b = prior.a, prior.b
    h = beta_log_moments(a + x + hist.x_h, b + n + hist.n_h - x - hist.x_h)
    z = beta_log_moments(a + x, b + n - x)
    return h, z


def _binary_waic(h, z, x, n, w):
    """WAIC pieces from component log-moments at posterior weight ``w``."""
    e1h, e0h, v1h, v0h = h
    e1z, e0z, v1z, v0z = z
    # successes contribute log(theta), failures log(1 - theta)
    e1 = w * e1h + (1 - w) * e1z
    e0 = w * e0h + (1 - w) * e0z
    var1 = w * v1h + (1 - w) * v1z + w * (1 - w) * (e1h - e1z) ** 2
    var0 = w * v0h + (1 - w) * v0z + w * (1 - w) * (e0h - e0z) ** 2
    fit = -2.0 * (x * e1 + (n - x) * e0)
    pen = 2.0 * (x * var1 + (n - x) * var0)
    return fit, pen


def waic_binary(prior: BetaShape, data: BinaryDataset, hist: HistoricalBinary,
                w_h: float) -> WaicValue:
    """WAIC of the concurrent binary data under the mixture posterior with prior weight ``w_h``."""
    post = binary_posterior(prior, data, hist, w_h)
    return waic_binary_at(prior, data, hist, post.w_star)


def waic_binary_at(prior: BetaShape, data: BinaryDataset, hist: HistoricalBinary,
                   w_star: float) -> WaicValue:
    """WAIC evaluated directly at a posterior weight ``w_star``."""
    h, z = _binary_moments(prior, data.x, data.n, hist)
    fit, pen = _binary_waic(h, z, data.x, data.n, w_star)
    return WaicValue(float(fit + pen), float(fit), float(pen), float(w_star))


def waic_binary_curve(prior: BetaShape, data: BinaryDataset, hist: HistoricalBinary,
                      w_grid) -> np.ndarray:
    """WAIC totals for an array of prior weights, sharing the component moments.

    Equal to ``[waic_binary(prior, data, hist, w).total for w in w_grid]``.
    """
    post = binary_posterior(prior, data, hist, 0.5)
    w_star = np.array([_posterior_weight(float(w), post.log_z_h, post.log_z_0)
                       for w in np.ravel(w_grid)])
    h, z = _binary_moments(prior, data.x, data.n, hist)
    fit, pen = _binary_waic(h, z, data.x, data.n, w_star)
    return (fit + pen).reshape(np.shape(w_grid))


def binary_quadratic_coefficients(prior: BetaShape, data: BinaryDataset,
                                  hist: HistoricalBinary):
    """``(I1, I2, I3)`` with ``WAIC = -I1 w*^2 + I2 w* + I3``.

    Written term by term from the expanded quadratic.  With integer shapes
    the beta log-moments come from the exact finite sums
    ``psi(p) - psi(p+q) = -sum 1/(p+i)`` instead of digamma/trigamma.
    """
    a, b = prior.a, prior.b
    x, n = data.x, data.n
    a_h, b_h = a + x + hist.x_h, b + n + hist.n_h - x - hist.x_h
    a_0, b_0 = a + x, b + n - x

    def moments(p, q):
        if float(p).is_integer() and float(q).is_integer():
            return (specfun.digamma_diff_int(p, int(q)), specfun.digamma_diff_int(q, int(p)),
                    specfun.trigamma_diff_int(p, int(q)), specfun.trigamma_diff_int(q, int(p)))
        return tuple(float(v) for v in beta_log_moments(p, q))

    el_h, el1_h, vl_h, vl1_h = moments(a_h, b_h)
    el_0, el1_0, vl_0, vl1_0 = moments(a_0, b_0)
    d1 = el1_h - el1_0  # log(1 - theta)
    d = el_h - el_0     # log(theta)
    i1 = 2.0 * ((n - x) * d1 ** 2 + x * d ** 2)
    i2 = (2.0 * (n - x) * (vl1_h - vl1_0 + d1 ** 2 + el1_0 - el1_h)
          + 2.0 * x * (vl_h - vl_0 + d ** 2 + el_0 - el_h))
    i3 = -2.0 * (x * el_0 + (n - x) * el1_0) + 2.0 * (x * vl_0 + (n - x) * vl1_0)
    return i1, i2, i3


def k_binary(prior: BetaShape, x, n: int, hist: HistoricalBinary):
    """``WAIC(w=1) - WAIC(w=0)`` as a function of the success count ``x``.

    ``x`` may be an array (vectorised region scans) and may be non-integer,
    treating the moments as the smooth digamma/trigamma expressions in ``x``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > n):
        raise DomainError("x must satisfy 0 <= x <= n")
    h, z = _binary_moments(prior, xa, n, hist)
    f1, p1 = _binary_waic(h, z, xa, n, 1.0)
    f0, p0 = _binary_waic(h, z, xa, n, 0.0)
    k = (f1 + p1) - (f0 + p0)
    return float(k) if np.ndim(x) == 0 else k


def _is_uniform(prior: BetaShape) -> bool:
    return prior.a == 1.0 and prior.b == 1.0


def borrowing_region_binary(prior: BetaShape, n: int,
                            hist: HistoricalBinary) -> BorrowingRegionBinary:
    """Exhaustive scan of x = 0..n for the set {x : k(x) <= 0}.

    The set is a single interval under a Beta(1, 1) prior; a disconnected set
    there raises ``IntegrityError``.  Under other priors it is only reported.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    xs = np.arange(n + 1)
    borrow = xs[np.asarray(k_binary(prior, xs, n, hist)) <= 0.0]
    if borrow.size == 0:
        return BorrowingRegionBinary(0, 0, True, True)
    lo, hi = int(borrow[0]), int(borrow[-1])
    connected = borrow.size == hi - lo + 1
    if not connected:
        msg = (f"borrow set for n={n}, x_h={hist.x_h}, n_h={hist.n_h} is not a single interval")
        if _is_uniform(prior):
            raise IntegrityError(msg)
        warnings.warn(msg + f" under Beta({prior.a:g}, {prior.b:g})", stacklevel=2)
    return BorrowingRegionBinary(lo, hi, False, connected)


def region_table_binary(prior: BetaShape, n: int, hist: HistoricalBinary) -> list[dict]:
    """Per-x decision table: WAIC at w=0 and w=1, their difference, verdict."""
    rows = []
    for x in range(n + 1):
        data = BinaryDataset(x, n)
        w0 = waic_binary_at(prior, data, hist, 0.0).total
        w1 = waic_binary_at(prior, data, hist, 1.0).total
        rows.append({"x": x, "waic0": w0, "waic1": w1, "k": w1 - w0, "borrow": w1 - w0 <= 0.0})
    return rows


def gate_binary(prior: BetaShape, data: BinaryDataset, hist: HistoricalBinary) -> GateDecision:
    w0 = waic_binary_at(prior, data, hist, 0.0)
    w1 = waic_binary_at(prior, data, hist, 1.0)
    k = w1.total - w0.total
    return GateDecision(k <= 0.0, w0, w1, k)


# --------------------------------------------------------------------------
# continuous endpoint (known sigma)


def _normal_obs_polys(mu: float, tau2: float, sigma: float):
    """E and Var of log N(y | theta, sigma^2) over theta ~ N(mu, tau2), as polynomials in y."""
    s2 = sigma * sigma
    sq = Polynomial([-mu, 1.0]) ** 2  # (y - mu)^2
    e = -0.5 * math.log(2 * math.pi * s2) - (sq + tau2) / (2 * s2)
    v = (2 * tau2 * tau2 + 4 * tau2 * sq) / (4 * s2 * s2)
    return e, v


def _sum_poly(p: Polynomial, data: ContinuousStats) -> float:
    sums = (data.n, data.s1, data.s2, data.s3, data.s4)
    coef = p.coef
    if len(coef) > len(sums):
        raise ValueError("polynomial degree exceeds stored power sums")
    return float(sum(c * s for c, s in zip(coef, sums)))


def waic_continuous_at(hist: HistoricalContinuous, data: ContinuousStats,
                       w_star: float) -> WaicValue:
    post = continuous_posterior(hist, data, 0.5)
    e_h, v_h = _normal_obs_polys(post.mu_h, post.tau2_h, data.sigma)
    e_0, v_0 = _normal_obs_polys(post.mu_0, post.tau2_0, data.sigma)
    w = float(w_star)
    e_mix = w * e_h + (1 - w) * e_0
    var_mix = w * v_h + (1 - w) * v_0 + w * (1 - w) * (e_h - e_0) ** 2
    fit = -2.0 * _sum_poly(e_mix, data)
    pen = 2.0 * _sum_poly(var_mix, data)
    return WaicValue(fit + pen, fit, pen, w)


def waic_continuous(hist: HistoricalContinuous, data: ContinuousStats,
                    w_h: float) -> WaicValue:
    """WAIC of the concurrent normal sample under the mixture posterior with prior weight ``w_h``."""
    post = continuous_posterior(hist, data, w_h)
    return waic_continuous_at(hist, data, post.w_star)


def waic_continuous_raw(hist: HistoricalContinuous, data: ContinuousStats,
                        w_h: float) -> WaicValue:
    """Same quantity via raw second moments ``w(V_h+E_h^2)+(1-w)(V_0+E_0^2)-E_mix^2``.

    Uses all four power sums; kept as an independent algebraic route.
    """
    post = continuous_posterior(hist, data, w_h)
    e_h, v_h = _normal_obs_polys(post.mu_h, post.tau2_h, data.sigma)
    e_0, v_0 = _normal_obs_polys(post.mu_0, post.tau2_0, data.sigma)
    w = post.w_star
    e_mix = w * e_h + (1 - w) * e_0
    var_mix = w * (v_h + e_h ** 2) + (1 - w) * (v_0 + e_0 ** 2) - e_mix ** 2
    fit = -2.0 * _sum_poly(e_mix, data)
    pen = 2.0 * _sum_poly(var_mix, data)
    return WaicValue(fit + pen, fit, pen, w)


def k_continuous(hist: HistoricalContinuous, data: ContinuousStats) -> float:
    return (waic_continuous_at(hist, data, 1.0).total
            - waic_continuous_at(hist, data, 0.0).total)


def gate_continuous(hist: HistoricalContinuous, data: ContinuousStats) -> GateDecision:
    """Retrospective gate on observed power sums."""
    w0 = waic_continuous_at(hist, data, 0.0)
    w1 = waic_continuous_at(hist, data, 1.0)
    k = w1.total - w0.total
    return GateDecision(k <= 0.0, w0, w1, k)


def borrowing_region_continuous(hist: HistoricalContinuous, n: int, sigma: float,
                                grid_points: int = 2001,
                                xtol: float = 1e-12) -> BorrowingRegionContinuous:
    """Prospective region [ybar_L, ybar_U] of sample means that pass the gate.

    A hypothetical sample with mean ``ybar`` is given the exact normal
    population power sums.  Sign changes of k are located on a grid over
    ``ybar_h +- 10 vague_sd`` and refined by bracketing root search.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    if not sigma > 0:
        raise DomainError("sigma must be > 0")

    def k_at(ybar):
        return k_continuous(hist, ContinuousStats.from_population(ybar, n, sigma))

    center = hist.ybar_h
    half = 10.0 * hist.vague_sd
    grid = np.linspace(center - half, center + half, grid_points)
    grid = np.unique(np.append(grid, center))
    ks = np.array([k_at(g) for g in grid])
    signs = ks <= 0.0
    changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
    diagnostics = ()
    if changes > 2:
        msg = f"k changes sign {changes} times on the search grid"
        warnings.warn(msg, stacklevel=2)
        diagnostics = (msg,)
    ic = int(np.searchsorted(grid, center))
    if not signs[ic]:
        return BorrowingRegionContinuous(math.nan, math.nan, sigma, True, changes, diagnostics)

    i = ic
    while i > 0 and signs[i - 1]:
        i -= 1
    lower = grid[0] if i == 0 else brentq(k_at, grid[i - 1], grid[i], xtol=xtol)
    j = ic
    while j < len(grid) - 1 and signs[j + 1]:
        j += 1
    upper = grid[-1] if j == len(grid) - 1 else brentq(k_at, grid[j], grid[j + 1], xtol=xtol)
    return BorrowingRegionContinuous(float(lower), float(upper), sigma, False, changes, diagnostics)
