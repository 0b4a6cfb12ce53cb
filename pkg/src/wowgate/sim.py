"""Monte-Carlo operating characteristics: calibration, power, relative bias/MSE.

Each replicate draws from its own Philox stream keyed by the scenario seed
with the replicate index in the counter, so a replicate's outcome depends on
``(config, rep_index)`` alone.  Work can be split over any number of worker
processes and the aggregate is reduced in replicate order, which keeps the
results bitwise identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import DomainError
from .model import (
    BetaShape,
    BinaryDataset,
    ContinuousStats,
    HistoricalBinary,
    HistoricalContinuous,
    beta_quadrature,
    binary_posterior,
    continuous_posterior,
    posterior_mean,
    prob_greater,
    treatment_posterior_continuous,
)
from .policy import Fixed, WeightPolicy, decide_weight, gated
from .waic import borrowing_region_binary, gate_continuous

__all__ = [
    "ScenarioConfig",
    "ReplicateRecord",
    "CalibrationResult",
    "ScenarioResult",
    "replicate_rng",
    "derive_seed",
    "run_replicate",
    "simulate_records",
    "calibrate_threshold",
    "estimate_power",
    "evaluate_scenario",
    "sweep",
]


@dataclass(frozen=True)
class ScenarioConfig:
    endpoint: str
    theta: float
    theta_t: float
    theta_h: float
    n: int
    n_t: int
    n_h: int
    policy: WeightPolicy = Fixed(0.0)
    gated: bool = False
    sigma: float = 3.0
    sigma0: float = 10.0
    theta0: float = 0.0
    prior_a: float = 1.0
    prior_b: float = 1.0
    alpha: float = 0.05
    reps: int = 2000
    seed: int = 0
    method: str = ""
    plug_in_sigma: bool = False

    def __post_init__(self):
        if self.endpoint not in ("binary", "continuous"):
            raise DomainError(f"endpoint must be 'binary' or 'continuous', got {self.endpoint!r}")
        if min(self.n, self.n_t, self.n_h) < 1:
            raise DomainError("n, n_t and n_h must be >= 1")
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.endpoint == "binary":
            for name in ("theta", "theta_t", "theta_h"):
                v = getattr(self, name)
                if not 0.0 < v < 1.0:
                    raise DomainError(f"{name} must lie in (0, 1) for a binary endpoint, got {v}")
        else:
            if not (self.sigma > 0 and self.sigma0 > 0):
                raise DomainError("sigma and sigma0 must be > 0")
            if self.n < 2:
                raise DomainError("continuous endpoint needs n >= 2")

    @property
    def effect_size(self) -> float:
        """Standardised effect ``(theta_t - theta) / sigma`` (continuous)."""
        return (self.theta_t - self.theta) / self.sigma

    @property
    def prior(self) -> BetaShape:
        return BetaShape(self.prior_a, self.prior_b)

    def historical(self):
        """Deterministic historical summary for this scenario."""
        if self.endpoint == "binary":
            # round-half-to-even; exact for every tabulated scenario
            return HistoricalBinary(int(round(self.n_h * self.theta_h)), self.n_h)
        return HistoricalContinuous(self.theta_h, self.sigma ** 2, self.n_h,
                                    vague_sd=self.sigma0, vague_mean=self.theta0)

    def null(self) -> "ScenarioConfig":
        return dataclasses.replace(self, theta_t=self.theta)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def _analysis_key(self) -> "ScenarioConfig":
        # fields that do not affect per-(x, x_t) analysis are normalised out
        return dataclasses.replace(self, theta=0.5, theta_t=0.5, reps=1, seed=0,
                                   method="", alpha=0.05)


@dataclass(frozen=True)
class ReplicateRecord:
    stat: float
    reject: bool
    control_post_mean: float
    np_post_mean: float
    w_h: float


@dataclass(frozen=True)
class CalibrationResult:
    threshold_c: float
    achieved_alpha: float
    reps_used: int


@dataclass(frozen=True)
class ScenarioResult:
    rejection_rate: float
    mean_estimate: float
    bias: float
    mse: float
    rel_bias: float
    rel_mse: float
    mc_stderr: float
    rel_bias_se: float = 0.0
    mean_weight: float = 0.0
    reps: int = 0
    threshold_c: float = math.nan


def replicate_rng(seed: int, rep_index: int) -> np.random.Generator:
    """Counter-based substream: Philox keyed by ``seed``, counter offset by ``rep_index``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(rep_index)]))


def derive_seed(base_seed: int, *keys: int) -> int:
    """A 64-bit seed derived from ``base_seed`` and integer keys."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


# --------------------------------------------------------------------------
# binary analysis with per-outcome caching


class _BinaryEngine:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.prior = cfg.prior
        self.hist = cfg.historical()
        self.region = borrowing_region_binary(self.prior, cfg.n, self.hist) if cfg.gated else None
        self._control = {}
        self._stats = {}

    def control(self, x: int):
        hit = self._control.get(x)
        if hit is None:
            cfg = self.cfg
            data = BinaryDataset(x, cfg.n)
            if cfg.gated:
                dec = gated(cfg.policy, self.region.contains(x), data, self.hist, self.prior)
            else:
                dec = decide_weight(cfg.policy, data, self.hist, self.prior)
            post = binary_posterior(self.prior, data, self.hist, dec.w_h)
            np_post = binary_posterior(self.prior, data, self.hist, 0.0)
            hit = (dec.w_h, post, posterior_mean(post), posterior_mean(np_post))
            self._control[x] = hit
        return hit

    def stats(self, x: int) -> np.ndarray:
        """P(theta_t > theta | x, x_t) for every treatment count x_t = 0..n_t."""
        row = self._stats.get(x)
        if row is None:
            _, post, _, _ = self.control(x)
            row = np.zeros(self.cfg.n_t + 1)
            for wc, comp in ((post.w_star, post.borrow), (1.0 - post.w_star, post.noborrow)):
                if wc > 0.0:
                    row += wc * _component_row(comp, self.cfg.n_t, self.prior)
            row = np.clip(row, 0.0, 1.0)
            self._stats[x] = row
        return row


@lru_cache(maxsize=8192)
def _component_row(comp: BetaShape, n_t: int, prior: BetaShape) -> np.ndarray:
    """P(theta_t > theta) with theta ~ comp, for every treatment count 0..n_t.

    Shared by every method that puts weight on the same control component.
    """
    a_t = prior.a + np.arange(n_t + 1.0)
    b_t = prior.b + n_t - np.arange(n_t + 1.0)
    if min(comp.a, comp.b) < 1.0:
        return np.array([prob_greater(BetaShape(a, b), comp) for a, b in zip(a_t, b_t)])
    u, w = beta_quadrature(comp)
    # treatment survival 1 - I_u(a_t, b_t) = I_{1-u}(b_t, a_t) for all x_t at once
    surv = betainc(b_t[:, None], a_t[:, None], 1.0 - u[None, :])
    row = surv @ (w * comp.pdf(u))
    row.flags.writeable = False
    return row


@lru_cache(maxsize=64)
def _binary_engine(key: ScenarioConfig) -> _BinaryEngine:
    return _BinaryEngine(key)


@lru_cache(maxsize=64)
def _continuous_hist(key: ScenarioConfig) -> HistoricalContinuous:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return key.historical()


def _replicate_values(cfg: ScenarioConfig, rep_index: int):
    rng = replicate_rng(cfg.seed, rep_index)
    if cfg.endpoint == "binary":
        x = int(rng.binomial(cfg.n, cfg.theta))
        x_t = int(rng.binomial(cfg.n_t, cfg.theta_t))
        eng = _binary_engine(cfg._analysis_key())
        w_h, _, cmean, npmean = eng.control(x)
        return float(eng.stats(x)[x_t]), cmean, npmean, w_h

    y = rng.normal(cfg.theta, cfg.sigma, cfg.n)
    y_t = rng.normal(cfg.theta_t, cfg.sigma, cfg.n_t)
    hist = _continuous_hist(cfg._analysis_key())
    stats = ContinuousStats.from_sample(y, None if cfg.plug_in_sigma else cfg.sigma)
    if cfg.gated:
        dec = gated(cfg.policy, gate_continuous(hist, stats), stats, hist)
    else:
        dec = decide_weight(cfg.policy, stats, hist)
    post = continuous_posterior(hist, stats, dec.w_h)
    np_post = continuous_posterior(hist, stats, 0.0)
    treat = treatment_posterior_continuous(float(np.mean(y_t)), cfg.n_t, stats.sigma,
                                           cfg.theta0, cfg.sigma0)
    return prob_greater(treat, post), posterior_mean(post), posterior_mean(np_post), dec.w_h


def run_replicate(cfg: ScenarioConfig, rep_index: int, threshold_c: float) -> ReplicateRecord:
    """One simulated trial: draw data, weigh, update, decide ``P(theta_t > theta) > C``."""
    if not 0 <= rep_index < cfg.reps:
        raise DomainError("rep_index out of range")
    stat, cmean, npmean, w_h = _replicate_values(cfg, rep_index)
    return ReplicateRecord(stat, stat > threshold_c, cmean, npmean, w_h)


def _run_block(cfg: ScenarioConfig, start: int, stop: int) -> np.ndarray:
    out = np.empty((stop - start, 4))
    for i, r in enumerate(range(start, stop)):
        out[i] = _replicate_values(cfg, r)
    return out


def simulate_records(cfg: ScenarioConfig, workers: int = 1) -> np.ndarray:
    """Array of shape (reps, 4): statistic, control mean, NP mean, weight; row = replicate."""
    reps = cfg.reps
    if workers <= 1 or reps < 2 * workers:
        return _run_block(cfg, 0, reps)
    nblocks = workers * 4
    edges = np.linspace(0, reps, nblocks + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_block, [cfg] * len(spans),
                              [s for s, _ in spans], [e for _, e in spans]))
    return np.concatenate(parts, axis=0)


def calibrate_threshold(cfg_null: ScenarioConfig, workers: int = 1) -> CalibrationResult:
    """Threshold C = empirical (1 - alpha) quantile of the statistic under the null."""
    if cfg_null.theta_t != cfg_null.theta:
        raise DomainError("calibration requires theta_t == theta")
    if cfg_null.reps < 100:
        msg = f"calibrating with reps={cfg_null.reps} < 100 gives an unstable quantile"
        warnings.warn(msg, stacklevel=2)
    stats = simulate_records(cfg_null, workers)[:, 0]
    c = float(np.quantile(stats, 1.0 - cfg_null.alpha, method="linear"))
    return CalibrationResult(c, float(np.mean(stats > c)), cfg_null.reps)


def _summarise(cfg: ScenarioConfig, rec: np.ndarray, threshold_c: float) -> ScenarioResult:
    reps = rec.shape[0]
    reject = rec[:, 0] > threshold_c
    p = float(np.mean(reject))
    est, np_est = rec[:, 1], rec[:, 2]
    err = est - cfg.theta
    np_err = np_est - cfg.theta
    diff = est - np_est
    mse = float(np.mean(err ** 2))
    return ScenarioResult(
        rejection_rate=p,
        mean_estimate=float(np.mean(est)),
        bias=float(np.mean(err)),
        mse=mse,
        rel_bias=float(np.mean(diff)),
        rel_mse=mse - float(np.mean(np_err ** 2)),
        mc_stderr=math.sqrt(p * (1.0 - p) / reps),
        rel_bias_se=float(np.std(diff, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        mean_weight=float(np.mean(rec[:, 3])),
        reps=reps,
        threshold_c=float(threshold_c),
    )


def estimate_power(cfg: ScenarioConfig, threshold_c: float, workers: int = 1) -> ScenarioResult:
    """Rejection rate and estimation metrics at a fixed threshold."""
    return _summarise(cfg, simulate_records(cfg, workers), threshold_c)


def evaluate_scenario(cfg: ScenarioConfig, workers: int = 1,
                      calibration_reps: int | None = None):
    """Calibrate C on an independent null run, then estimate power at ``cfg``.

    The null run uses a seed derived from ``cfg.seed`` so its draws do not
    overlap the power run.
    """
    null = cfg.null().replace(seed=derive_seed(cfg.seed, 1),
                              reps=calibration_reps or cfg.reps)
    cal = calibrate_threshold(null, workers)
    return cal, estimate_power(cfg, cal.threshold_c, workers)


def _data_key(cfg: ScenarioConfig):
    return (cfg.endpoint, cfg.theta, cfg.theta_t, cfg.theta_h, cfg.n, cfg.n_t, cfg.n_h,
            cfg.sigma, cfg.sigma0, cfg.theta0)


def sweep(grid: Sequence[ScenarioConfig], base_seed: int | None = None, workers: int = 1,
          calibrate: bool = False, threshold_c: float = 1.0) -> list[dict]:
    """Evaluate every config and return long-format rows.

    With ``base_seed`` set, each distinct data-generating scenario gets a seed
    derived from ``(base_seed, scenario index)``; methods evaluated on the same
    scenario share it, so their comparisons are paired.
    """
    if not grid:
        raise DomainError("sweep grid is empty")
    keys: dict = {}
    rows = []
    for cfg in grid:
        if base_seed is not None:
            idx = keys.setdefault(_data_key(cfg), len(keys))
            cfg = cfg.replace(seed=derive_seed(base_seed, idx))
        if calibrate:
            cal, res = evaluate_scenario(cfg, workers)
        else:
            cal, res = None, estimate_power(cfg, threshold_c, workers)
        rows.append(result_row(cfg, res, cal))
    return rows


def result_row(cfg: ScenarioConfig, res: ScenarioResult,
               cal: CalibrationResult | None = None, scenario_id: str = "") -> dict:
    return {
        "scenario": scenario_id,
        "method": cfg.method,
        "gated": cfg.gated,
        "theta": cfg.theta,
        "theta_t": cfg.theta_t,
        "theta_h": cfg.theta_h,
        "n": cfg.n,
        "n_t": cfg.n_t,
        "n_h": cfg.n_h,
        "power": res.rejection_rate,
        "mean_estimate": res.mean_estimate,
        "bias": res.bias,
        "mse": res.mse,
        "rel_bias": res.rel_bias,
        "rel_mse": res.rel_mse,
        "mc_stderr": res.mc_stderr,
        "rel_bias_se": res.rel_bias_se,
        "mean_weight": res.mean_weight,
        "C": res.threshold_c,
        "achieved_alpha": cal.achieved_alpha if cal else math.nan,
        "reps": res.reps,
    }
