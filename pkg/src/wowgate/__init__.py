"""WAIC-gated dynamic borrowing of historical control data.

Closed-form WAIC for conjugate two-component mixture posteriors (binary and
normal endpoints), the borrowing gate built on it, weight policies that the
gate can wrap, and a Monte-Carlo engine for operating characteristics.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, IntegrityError
from .model import (
    BetaShape,
    BinaryDataset,
    ContinuousStats,
    HistoricalBinary,
    HistoricalContinuous,
    NormalShape,
    binary_posterior,
    continuous_posterior,
    credible_interval,
    posterior_mean,
    prob_greater,
)
from .policy import EBrMAP, SAM, Fixed, WeightDecision, decide_weight, gated
from .waic import (
    borrowing_region_binary,
    borrowing_region_continuous,
    gate_binary,
    gate_continuous,
    k_binary,
    k_continuous,
    waic_binary,
    waic_continuous,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "IntegrityError",
    "BetaShape",
    "BinaryDataset",
    "ContinuousStats",
    "HistoricalBinary",
    "HistoricalContinuous",
    "NormalShape",
    "binary_posterior",
    "continuous_posterior",
    "credible_interval",
    "posterior_mean",
    "prob_greater",
    "EBrMAP",
    "SAM",
    "Fixed",
    "WeightDecision",
    "decide_weight",
    "gated",
    "borrowing_region_binary",
    "borrowing_region_continuous",
    "gate_binary",
    "gate_continuous",
    "k_binary",
    "k_continuous",
    "waic_binary",
    "waic_continuous",
]
