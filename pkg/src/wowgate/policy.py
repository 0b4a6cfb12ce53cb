"""Borrowing-weight policies and the gated wrapper.

``Fixed`` is the rMAP fixed weight (``Fixed(0)`` is no borrowing, ``Fixed(0.5)``
is Mix50).  ``SAM`` turns a likelihood ratio against clinically shifted
alternatives into a weight, ``EBrMAP`` turns a prior predictive p-value into
one.  Any policy can be wrapped by the WAIC gate, which forces ``w = 0`` when
full borrowing does not improve WAIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
from scipy.special import expit, logsumexp, xlogy

from . import specfun
from .errors import DomainError
from .model import (
    BetaShape,
    BinaryDataset,
    ContinuousStats,
    HistoricalBinary,
    HistoricalContinuous,
)
from .waic import GateDecision

__all__ = [
    "Fixed",
    "SAM",
    "EBrMAP",
    "WeightPolicy",
    "WeightDecision",
    "fixed_weight",
    "sam_weight",
    "ebrmap_weight",
    "gated",
    "decide_weight",
    "policy_from_name",
]

Tail = Literal["lower", "upper", "two_sided"]


@dataclass(frozen=True)
class Fixed:
    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise DomainError("Fixed.w must lie in [0, 1]")


@dataclass(frozen=True)
class SAM:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("SAM.delta must be > 0")


@dataclass(frozen=True)
class EBrMAP:
    gamma: float
    tail: Tail = "two_sided"
    grid_step: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DomainError("EBrMAP.gamma must lie in (0, 1)")
        if self.tail not in ("lower", "upper", "two_sided"):
            raise DomainError(f"unknown tail {self.tail!r}")
        if not 0.0 <= self.grid_step <= 1.0:
            raise DomainError("EBrMAP.grid_step must lie in [0, 1]")


WeightPolicy = Union[Fixed, SAM, EBrMAP]


@dataclass(frozen=True)
class WeightDecision:
    w_h: float
    gated_out: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not 0.0 <= self.w_h <= 1.0:
            raise DomainError("w_h must lie in [0, 1]")
        if self.gated_out and self.w_h != 0.0:
            raise DomainError("a gated-out decision must carry w_h = 0")


def fixed_weight(policy: Fixed) -> WeightDecision:
    return WeightDecision(float(policy.w))


def sam_weight(policy: SAM, data, hist) -> WeightDecision:
    """Self-adapting weight ``R / (1 + R)``.

    ``R = L(D | t_h) / max(L(D | t_h + delta), L(D | t_h - delta))`` with ``t_h``
    the historical estimate and ``L`` the sampling likelihood of the concurrent
    control summary (binomial count or normal mean).  Binary alternatives
    outside (0, 1) are dropped.
    """
    delta = policy.delta
    if isinstance(data, BinaryDataset):
        theta_h = hist.rate
        alts = [t for t in (theta_h + delta, theta_h - delta) if 0.0 < t < 1.0]
        if not alts:
            raise DomainError(f"SAM delta={delta} leaves no alternative inside (0, 1)")
        x, n = data.x, data.n

        def loglik(t):
            return float(xlogy(x, t) + xlogy(n - x, 1.0 - t))
    elif isinstance(data, ContinuousStats):
        theta_h = hist.ybar_h
        alts = [theta_h + delta, theta_h - delta]
        ybar, prec = data.ybar, data.n / data.sigma ** 2

        def loglik(t):
            return -0.5 * prec * (ybar - t) ** 2
    else:
        raise TypeError(f"unsupported data type {type(data).__name__}")
    log_r = loglik(theta_h) - max(loglik(t) for t in alts)
    w = float(min(1.0, max(0.0, expit(log_r))))
    return WeightDecision(w, diagnostics={"log_R": log_r, "R": math.exp(min(log_r, 700.0))})


def _ppp(lower: float, upper: float, tail: Tail) -> float:
    if tail == "lower":
        return lower
    if tail == "upper":
        return upper
    return min(1.0, 2.0 * min(lower, upper))


def prior_predictive_tails(data, hist, prior: BetaShape = BetaShape(1.0, 1.0)):
    """``(P(X <= obs), P(X >= obs))`` under the informative component's prior predictive."""
    if isinstance(data, BinaryDataset):
        shape = BetaShape(prior.a + hist.x_h, prior.b + hist.n_h - hist.x_h)
        logp = specfun.beta_binomial_log_pmf(np.arange(data.n + 1), data.n, shape)
        lower = float(np.exp(logsumexp(logp[: data.x + 1])))
        upper = float(np.exp(logsumexp(logp[data.x:])))
        return min(1.0, lower), min(1.0, upper)
    if isinstance(data, ContinuousStats):
        sd = math.sqrt(hist.var_h + data.sigma ** 2 / data.n)
        z = (data.ybar - hist.ybar_h) / sd
        return specfun.normal_cdf(z), specfun.normal_cdf(-z)
    raise TypeError(f"unsupported data type {type(data).__name__}")


def ebrmap_weight(policy: EBrMAP, data, hist,
                  prior: BetaShape = BetaShape(1.0, 1.0)) -> WeightDecision:
    """Weight ``min(1, PPP / (1 - gamma))`` snapped to the policy grid."""
    lower, upper = prior_predictive_tails(data, hist, prior)
    ppp = _ppp(lower, upper, policy.tail)
    w = min(1.0, ppp / (1.0 - policy.gamma))
    if policy.grid_step > 0:
        w = round(w / policy.grid_step) * policy.grid_step
    w = float(min(1.0, max(0.0, w)))
    return WeightDecision(w, diagnostics={"PPP": ppp, "ppp_lower": lower, "ppp_upper": upper})


def decide_weight(policy: WeightPolicy, data, hist,
                  prior: BetaShape = BetaShape(1.0, 1.0)) -> WeightDecision:
    if isinstance(policy, Fixed):
        return fixed_weight(policy)
    if isinstance(policy, SAM):
        return sam_weight(policy, data, hist)
    if isinstance(policy, EBrMAP):
        return ebrmap_weight(policy, data, hist, prior)
    raise TypeError(f"unknown policy {policy!r}")


def gated(policy: WeightPolicy, gate_decision: GateDecision | bool, data, hist,
          prior: BetaShape = BetaShape(1.0, 1.0)) -> WeightDecision:
    """Apply ``policy`` only if the gate allows borrowing, else ``w = 0``.

    ``gate_decision`` may be a bare bool when the verdict comes from a
    precomputed borrowing region.
    """
    if isinstance(gate_decision, GateDecision):
        borrow, diag = gate_decision.borrow, {"k": gate_decision.k}
    else:
        borrow, diag = bool(gate_decision), {}
    if not borrow:
        return WeightDecision(0.0, gated_out=True, diagnostics=diag)
    inner = decide_weight(policy, data, hist, prior)
    return WeightDecision(inner.w_h, False, {**inner.diagnostics, **diag})


def policy_from_name(name: str, **params) -> WeightPolicy:
    """Build a policy from a short name: np, mix/fixed, sam, ebrmap."""
    key = name.lower().replace("-", "").replace("_", "")
    if key == "np":
        return Fixed(0.0)
    if key in ("mix", "fixed", "rmap"):
        return Fixed(float(params.get("w", 0.5)))
    if key == "mix50":
        return Fixed(0.5)
    if key == "sam":
        return SAM(float(params.get("delta", 0.15)))
    if key == "ebrmap":
        return EBrMAP(float(params.get("gamma", 0.8)), params.get("tail", "two_sided"),
                      float(params.get("grid_step", 0.01)))
    raise DomainError(f"unknown policy {name!r}")
