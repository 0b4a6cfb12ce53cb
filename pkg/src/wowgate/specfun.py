"""Special functions behind the closed-form moments and predictive probabilities.

Everything here accepts scalars or numpy arrays and returns the same shape.
Scalar input gives a plain ``float`` back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import DomainError

__all__ = [
    "RealTolerance",
    "digamma",
    "trigamma",
    "digamma_diff_int",
    "trigamma_diff_int",
    "log_beta",
    "beta_cdf",
    "beta_binomial_log_pmf",
    "normal_cdf",
]

# Recurrence shifts the argument up to this value before the asymptotic series.
_ASYMPTOTIC_FROM = 8.0

# Bernoulli-number coefficients B_2k / (2k) for the digamma series in 1/z^2.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_2k coefficients for the trigamma series in 1/z^(2k+1).
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_CF_MAX_ITER = 1000
_CF_EPS = 1e-16
_CF_TINY = 1e-300


@dataclass(frozen=True)
class RealTolerance:
    """Absolute/relative tolerance pair used by numerical cross-checks."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")

    def close(self, a, b) -> bool:
        return bool(np.all(np.abs(np.asarray(a) - np.asarray(b))
                           <= self.abs_tol + self.rel_tol * np.abs(np.asarray(b))))


def _as_positive(z, name="z"):
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be > 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _horner(coeffs, t):
    acc = np.zeros_like(t)
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def digamma(z):
    """Digamma function psi(z) for z > 0."""
    z0 = _as_positive(z)
    x = np.array(z0, dtype=float, copy=True)
    acc = np.zeros_like(x)
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not np.any(low):
            break
        acc = np.where(low, acc - 1.0 / np.where(low, x, 1.0), acc)
        x = np.where(low, x + 1.0, x)
    t = 1.0 / (x * x)
    series = t * _horner(_DIGAMMA_SERIES, t)
    return _out(acc + np.log(x) - 0.5 / x - series, z)


def trigamma(z):
    """Trigamma function psi_1(z) for z > 0."""
    z0 = _as_positive(z)
    x = np.array(z0, dtype=float, copy=True)
    acc = np.zeros_like(x)
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not np.any(low):
            break
        xs = np.where(low, x, 1.0)
        acc = np.where(low, acc + 1.0 / (xs * xs), acc)
        x = np.where(low, x + 1.0, x)
    t = 1.0 / (x * x)
    series = _horner(_TRIGAMMA_SERIES, t) * t / x
    return _out(acc + 1.0 / x + 0.5 * t + series, z)


def digamma_diff_int(p: float, q: int) -> float:
    """psi(p) - psi(p + q) for a non-negative integer ``q`` as an exact finite sum.

    Uses ``psi(p) - psi(p+q) = -sum_{i=0}^{q-1} 1/(p+i)``.
    """
    if p <= 0:
        raise DomainError("p must be > 0")
    if q < 0 or int(q) != q:
        raise DomainError("q must be a non-negative integer")
    return -math.fsum(1.0 / (p + i) for i in range(int(q)))


def trigamma_diff_int(p: float, q: int) -> float:
    """psi_1(p) - psi_1(p + q) = sum_{i=0}^{q-1} 1/(p+i)^2 for integer ``q``."""
    if p <= 0:
        raise DomainError("p must be > 0")
    if q < 0 or int(q) != q:
        raise DomainError("q must be a non-negative integer")
    return math.fsum(1.0 / (p + i) ** 2 for i in range(int(q)))


def log_beta(a, b):
    """Natural log of the beta function B(a, b)."""
    a_ = _as_positive(a, "a")
    b_ = _as_positive(b, "b")
    res = gammaln(a_) + gammaln(b_) - gammaln(a_ + b_)
    return float(res) if np.ndim(res) == 0 else res


def _betacf(a, b, u):
    """Continued fraction for the incomplete beta (modified Lentz), vectorised."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(u)
    d = 1.0 - qab * u / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(u.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * u / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * u / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _CF_EPS
        if done.all():
            break
    return h


def beta_cdf(u, shape):
    """Regularized incomplete beta I_u(a, b), the Beta(a, b) CDF at ``u``.

    ``shape`` is anything with ``a`` and ``b`` attributes (a ``BetaShape``).
    The continued fraction is evaluated directly for ``u <= a/(a+b)`` and
    through the reflection ``1 - I_{1-u}(b, a)`` above it.
    """
    a = float(shape.a)
    b = float(shape.b)
    if not (a > 0 and b > 0):
        raise DomainError("beta shape parameters must be > 0")
    uu = np.asarray(u, dtype=float)
    if np.any((uu < 0) | (uu > 1) | np.isnan(uu)):
        raise DomainError("u must lie in [0, 1]")
    flat = np.atleast_1d(uu).astype(float)
    out = np.empty_like(flat)
    edge0 = flat == 0.0
    edge1 = flat == 1.0
    out[edge0] = 0.0
    out[edge1] = 1.0
    inner = ~(edge0 | edge1)
    if np.any(inner):
        x = flat[inner]
        lbeta = gammaln(a) + gammaln(b) - gammaln(a + b)
        with np.errstate(divide="ignore"):
            front = np.exp(a * np.log(x) + b * np.log1p(-x) - lbeta)
        direct = x <= a / (a + b)
        res = np.empty_like(x)
        if np.any(direct):
            xd = x[direct]
            res[direct] = front[direct] * _betacf(a, b, xd) / a
        if np.any(~direct):
            xr = x[~direct]
            res[~direct] = 1.0 - front[~direct] * _betacf(b, a, 1.0 - xr) / b
        out[inner] = np.clip(res, 0.0, 1.0)
    if np.ndim(uu) == 0:
        return float(out[0])
    return out.reshape(uu.shape)


def beta_binomial_log_pmf(k, m: int, shape):
    """log P(K = k) for K ~ BetaBinomial(m, a, b)."""
    kk = np.asarray(k)
    if np.any(kk < 0) or np.any(kk > m):
        raise DomainError("k must satisfy 0 <= k <= m")
    a = float(shape.a)
    b = float(shape.b)
    if not (a > 0 and b > 0):
        raise DomainError("beta shape parameters must be > 0")
    kf = kk.astype(float)
    log_choose = gammaln(m + 1.0) - gammaln(kf + 1.0) - gammaln(m - kf + 1.0)
    res = (log_choose + gammaln(a + kf) + gammaln(b + m - kf) - gammaln(a + b + m)
           - (gammaln(a) + gammaln(b) - gammaln(a + b)))
    return _out(res, k)


def normal_cdf(z):
    """Standard normal CDF."""
    return _out(ndtr(np.asarray(z, dtype=float)), z)
