"""Conjugate mixture-prior updating for binary and continuous endpoints.

A mixture prior ``w * pi_h + (1 - w) * pi_0`` stays a two-component mixture
after a conjugate update.  The posterior weight on the informative component
is ``w* = w z_h / (w z_h + (1 - w) z_0)`` where ``z_h`` and ``z_0`` are the
marginal likelihoods of the concurrent data under each prior component.  A
random weight with prior mean ``m`` yields exactly the same posterior as the
fixed weight ``m``, so all policies here work with fixed weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import expit, xlog1py, xlogy

from . import specfun
from .errors import DomainError

__all__ = [
    "BetaShape",
    "NormalShape",
    "BinaryDataset",
    "HistoricalBinary",
    "ContinuousStats",
    "HistoricalContinuous",
    "BinaryMixturePosterior",
    "NormalMixturePosterior",
    "binary_posterior",
    "continuous_posterior",
    "marginal_posterior_via_weight_prior",
    "treatment_posterior_binary",
    "treatment_posterior_continuous",
    "posterior_mean",
    "posterior_pdf",
    "posterior_cdf",
    "credible_interval",
    "prob_greater",
    "beta_quadrature",
    "GL_NODES",
]

GL_NODES = 256
QUAD_HALF_WIDTH = 40.0
_gl_t, _gl_w = np.polynomial.legendre.leggauss(GL_NODES)
# Nodes and weights mapped from [-1, 1] to [0, 1].
_GL_U = 0.5 * (_gl_t + 1.0)
_GL_W = 0.5 * _gl_w


@dataclass(frozen=True)
class BetaShape:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0) or math.isinf(self.a) or math.isinf(self.b):
            raise DomainError(f"Beta shapes must be positive and finite, got ({self.a}, {self.b})")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def var(self) -> float:
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            # xlogy keeps 0 * log(0) = 0 so shape-1 densities are finite at 0 and 1
            logp = (xlogy(self.a - 1.0, u) + xlog1py(self.b - 1.0, -u)
                    - specfun.log_beta(self.a, self.b))
        out = np.exp(logp)
        return float(out) if out.ndim == 0 else out

    def cdf(self, u):
        return specfun.beta_cdf(u, self)


@dataclass(frozen=True)
class NormalShape:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError("normal variance must be > 0")

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.exp(-0.5 * (u - self.mean) ** 2 / self.var) / math.sqrt(2 * math.pi * self.var)
        return float(out) if out.ndim == 0 else out

    def cdf(self, u):
        return specfun.normal_cdf((np.asarray(u, dtype=float) - self.mean) / math.sqrt(self.var))


@dataclass(frozen=True)
class BinaryDataset:
    x: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not 0 <= self.x <= self.n:
            raise DomainError(f"x must satisfy 0 <= x <= n, got x={self.x}, n={self.n}")


@dataclass(frozen=True)
class HistoricalBinary:
    x_h: int
    n_h: int

    def __post_init__(self):
        if self.n_h < 1:
            raise DomainError("n_h must be >= 1")
        if self.x_h > self.n_h:
            raise DomainError("x_h exceeds n_h")
        if self.x_h < 0:
            raise DomainError("x_h must be >= 0")

    @property
    def rate(self) -> float:
        return self.x_h / self.n_h


@dataclass(frozen=True)
class ContinuousStats:
    """Power sums of a concurrent normal sample with known sampling sd."""

    n: int
    s1: float
    s2: float
    s3: float
    s4: float
    sigma: float

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be > 0")
        slack = 1e-9 * max(1.0, abs(self.s2 * self.n), abs(self.s4 * self.n))
        if self.s2 * self.n < self.s1 ** 2 - slack or self.s4 * self.n < self.s2 ** 2 - slack:
            raise DomainError("power sums violate Cauchy-Schwarz")

    @property
    def ybar(self) -> float:
        return self.s1 / self.n

    @classmethod
    def from_sample(cls, y, sigma: float | None = None) -> "ContinuousStats":
        """Power sums of ``y``; ``sigma=None`` plugs in the sample sd."""
        y = np.asarray(y, dtype=float)
        if sigma is None:
            if y.size < 2:
                raise DomainError("plug-in sigma needs at least two observations")
            sigma = float(np.std(y, ddof=1))
        return cls(n=int(y.size), s1=float(y.sum()), s2=float(np.sum(y ** 2)),
                   s3=float(np.sum(y ** 3)), s4=float(np.sum(y ** 4)), sigma=float(sigma))

    @classmethod
    def from_population(cls, ybar: float, n: int, sigma: float) -> "ContinuousStats":
        """Sums for a hypothetical sample with mean ``ybar`` whose higher power
        sums equal the exact N(ybar, sigma^2) population moments."""
        m, v = float(ybar), float(sigma) ** 2
        return cls(n=int(n), s1=n * m, s2=n * (v + m * m), s3=n * (m ** 3 + 3 * m * v),
                   s4=n * (m ** 4 + 6 * m * m * v + 3 * v * v), sigma=float(sigma))


@dataclass(frozen=True)
class HistoricalContinuous:
    """Historical summary and the vague component N(vague_mean, vague_sd^2).

    ``vague_mean=None`` centres the vague component on ``ybar_h``.
    """

    ybar_h: float
    s2_h: float
    n_h: int
    vague_sd: float = 10.0
    vague_mean: float | None = None

    def __post_init__(self):
        if not self.s2_h > 0:
            raise DomainError("s2_h must be > 0")
        if not self.vague_sd > 0:
            raise DomainError("vague_sd must be > 0")
        if self.n_h < 1:
            raise DomainError("n_h must be >= 1")
        if self.vague_sd ** 2 < 10.0 * self.var_h:
            warnings.warn("vague component is not much wider than the informative one "
                          f"(vague_sd^2={self.vague_sd ** 2:g}, s2_h/n_h={self.var_h:g})",
                          stacklevel=2)

    @property
    def var_h(self) -> float:
        return self.s2_h / self.n_h

    @property
    def center0(self) -> float:
        return self.ybar_h if self.vague_mean is None else float(self.vague_mean)


@dataclass(frozen=True)
class BinaryMixturePosterior:
    w_star: float
    borrow: BetaShape
    noborrow: BetaShape
    log_z_h: float
    log_z_0: float

    def __post_init__(self):
        if not 0.0 <= self.w_star <= 1.0:
            raise DomainError("w_star must lie in [0, 1]")


@dataclass(frozen=True)
class NormalMixturePosterior:
    w_star: float
    mu_h: float
    tau2_h: float
    mu_0: float
    tau2_0: float
    log_z_h: float = 0.0
    log_z_0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.w_star <= 1.0:
            raise DomainError("w_star must lie in [0, 1]")
        if not (self.tau2_h > 0 and self.tau2_0 > 0):
            raise DomainError("component variances must be > 0")

    @property
    def borrow(self) -> NormalShape:
        return NormalShape(self.mu_h, self.tau2_h)

    @property
    def noborrow(self) -> NormalShape:
        return NormalShape(self.mu_0, self.tau2_0)


MixturePosterior = Union[BinaryMixturePosterior, NormalMixturePosterior]
Distribution = Union[BetaShape, NormalShape, BinaryMixturePosterior, NormalMixturePosterior]


def _posterior_weight(w_h: float, log_z_h: float, log_z_0: float) -> float:
    if not 0.0 <= w_h <= 1.0:
        raise DomainError("w_h must lie in [0, 1]")
    if w_h == 0.0:
        return 0.0
    if w_h == 1.0:
        return 1.0
    return float(expit(math.log(w_h) - math.log1p(-w_h) + log_z_h - log_z_0))


def binary_posterior(prior: BetaShape, data: BinaryDataset, hist: HistoricalBinary,
                     w_h: float) -> BinaryMixturePosterior:
    """Posterior under the prior ``w_h Beta(a+x_h, b+n_h-x_h) + (1-w_h) Beta(a, b)``."""
    a, b = prior.a, prior.b
    x, n, x_h, n_h = data.x, data.n, hist.x_h, hist.n_h
    noborrow = BetaShape(a + x, b + n - x)
    borrow = BetaShape(a + x + x_h, b + n + n_h - x - x_h)
    log_z_0 = specfun.log_beta(noborrow.a, noborrow.b) - specfun.log_beta(a, b)
    log_z_h = (specfun.log_beta(borrow.a, borrow.b)
               - specfun.log_beta(a + x_h, b + n_h - x_h))
    w_star = _posterior_weight(w_h, log_z_h, log_z_0)
    return BinaryMixturePosterior(w_star, borrow, noborrow, log_z_h, log_z_0)


def continuous_posterior(hist: HistoricalContinuous, data: ContinuousStats,
                         w_h: float) -> NormalMixturePosterior:
    sigma2 = data.sigma ** 2
    n = data.n
    ybar = data.ybar
    prec_data = n / sigma2
    var_h = hist.var_h
    var_0 = hist.vague_sd ** 2
    c0 = hist.center0

    tau2_h = 1.0 / (1.0 / var_h + prec_data)
    mu_h = tau2_h * (hist.ybar_h / var_h + prec_data * ybar)
    tau2_0 = 1.0 / (1.0 / var_0 + prec_data)
    mu_0 = tau2_0 * (c0 / var_0 + prec_data * ybar)

    def log_phi(v, m, s2):
        return -0.5 * math.log(2 * math.pi * s2) - 0.5 * (v - m) ** 2 / s2

    log_z_h = log_phi(ybar, hist.ybar_h, var_h + sigma2 / n)
    log_z_0 = log_phi(ybar, c0, var_0 + sigma2 / n)
    w_star = _posterior_weight(w_h, log_z_h, log_z_0)
    return NormalMixturePosterior(w_star, mu_h, tau2_h, mu_0, tau2_0, log_z_h, log_z_0)


def marginal_posterior_via_weight_prior(prior: BetaShape, data: BinaryDataset,
                                        hist: HistoricalBinary,
                                        weight_prior_mean: float) -> BinaryMixturePosterior:
    """Posterior when the mixture weight itself carries a prior.

    Only the prior mean of the weight matters, so this is the fixed-weight
    posterior at that mean.
    """
    return binary_posterior(prior, data, hist, weight_prior_mean)


def treatment_posterior_binary(x_t: int, n_t: int,
                               prior: BetaShape = BetaShape(1.0, 1.0)) -> BetaShape:
    BinaryDataset(x_t, n_t)
    return BetaShape(prior.a + x_t, prior.b + n_t - x_t)


def treatment_posterior_continuous(ybar_t: float, n_t: int, sigma: float,
                                   prior_mean: float = 0.0,
                                   prior_sd: float = 10.0) -> NormalShape:
    prec = 1.0 / prior_sd ** 2 + n_t / sigma ** 2
    return NormalShape((prior_mean / prior_sd ** 2 + n_t * ybar_t / sigma ** 2) / prec, 1.0 / prec)


def _components(dist: Distribution):
    if isinstance(dist, (BinaryMixturePosterior, NormalMixturePosterior)):
        return [(dist.w_star, dist.borrow), (1.0 - dist.w_star, dist.noborrow)]
    if isinstance(dist, (BetaShape, NormalShape)):
        return [(1.0, dist)]
    raise TypeError(f"not a posterior: {type(dist).__name__}")


def posterior_mean(post: Distribution) -> float:
    """Mean of a (mixture) posterior: ``w* mean_h + (1 - w*) mean_0``."""
    return sum(w * c.mean for w, c in _components(post))


def posterior_pdf(post: Distribution, u):
    return sum(w * c.pdf(u) for w, c in _components(post))


def posterior_cdf(post: Distribution, u):
    return sum(w * c.cdf(u) for w, c in _components(post))


def credible_interval(post: Distribution, level: float = 0.95, tol: float = 1e-8):
    """Equal-tailed credible interval by bisection on the mixture CDF."""
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    comps = _components(post)
    if isinstance(comps[0][1], BetaShape):
        lo, hi = 0.0, 1.0
    else:
        spread = 12.0 * max(math.sqrt(c.var) for _, c in comps)
        lo = min(c.mean for _, c in comps) - spread
        hi = max(c.mean for _, c in comps) + spread

    def quantile(p):
        left, right = lo, hi
        while right - left > tol:
            mid = 0.5 * (left + right)
            if posterior_cdf(post, mid) < p:
                left = mid
            else:
                right = mid
        return 0.5 * (left + right)

    tail = 0.5 * (1.0 - level)
    return quantile(tail), quantile(1.0 - tail)


def prob_greater(post_t: Distribution, post_c: Distribution) -> float:
    """P(theta_t > theta) for independent posteriors of treatment and control.

    Normal components use the closed form
    ``Phi((mu_t - mu_c) / sqrt(tau_t^2 + tau_c^2))``.  For each pair of Beta
    components the integral ``int f_c(u) (1 - F_t(u)) du`` is taken by
    256-node Gauss-Legendre quadrature on the control component's window
    (mean +- 40 sd, clipped to [0, 1]).  The equivalent form
    ``int f_t(u) F_c(u) du`` is used instead when only the control density is
    unbounded at an endpoint (a shape below 1).
    """
    comps_t = [(w, c) for w, c in _components(post_t) if w > 0.0]
    comps_c = [(w, c) for w, c in _components(post_c) if w > 0.0]
    kinds = {type(c) for _, c in comps_t + comps_c}
    if kinds == {NormalShape}:
        total = 0.0
        for wt, ct in comps_t:
            for wc, cc in comps_c:
                z = (ct.mean - cc.mean) / math.sqrt(ct.var + cc.var)
                total += wt * wc * specfun.normal_cdf(z)
        return min(1.0, max(0.0, total))
    if kinds != {BetaShape}:
        raise TypeError("treatment and control posteriors must share an endpoint type")
    total = 0.0
    for wt, ct in comps_t:
        for wc, cc in comps_c:
            if _is_singular(cc) and not _is_singular(ct):
                u, w = beta_quadrature(ct)
                part = np.sum(w * ct.pdf(u) * cc.cdf(u))
            else:
                u, w = beta_quadrature(cc)
                part = np.sum(w * cc.pdf(u) * (1.0 - ct.cdf(u)))
            total += wt * wc * part
    return float(min(1.0, max(0.0, total)))


def _is_singular(shape: BetaShape) -> bool:
    return min(shape.a, shape.b) < 1.0


@lru_cache(maxsize=4096)
def beta_quadrature(shape: BetaShape) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights adapted to one Beta density.

    The rule covers mean +- 40 sd clipped to [0, 1].  When the window reaches
    0 or 1, the substitution ``u = (1 - cos(pi s)) / 2`` on the window
    smooths power-law endpoint behaviour of the density.
    """
    m = shape.mean
    sd = math.sqrt(shape.var)
    lo = max(0.0, m - QUAD_HALF_WIDTH * sd)
    hi = min(1.0, m + QUAD_HALF_WIDTH * sd)
    if lo == 0.0 or hi == 1.0:
        g = 0.5 * (1.0 - np.cos(np.pi * _GL_U))
        gw = _GL_W * 0.5 * np.pi * np.sin(np.pi * _GL_U)
    else:
        g, gw = _GL_U, _GL_W
    u = lo + (hi - lo) * g
    w = (hi - lo) * gw
    u.flags.writeable = False
    w.flags.writeable = False
    return u, w
