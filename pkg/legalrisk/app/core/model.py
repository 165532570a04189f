"""Parameter types of the insider-trading model with dynamic legal risk.

The regulator's design (hazard, criminal and civil penalties, aggregation) is a
``RegulatoryRegime``; the market side (horizon, values, noise intensity, population) is a
``MarketConfig``. Both are immutable; helpers derive the stealth index and pick which
limiting control problem applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np

from legalrisk.app.core.errors import ValidityError

EXPONENT_TOL = 1e-12
PROBABILITY_TOL = 1e-12
MEAN_TOL = 1e-9

ArrayLike = Union[float, np.ndarray]


class Aggregation(str, Enum):
    SUM = "sum"
    PRODUCT = "product"
    MAX = "max"


class ScenarioTag(str, Enum):
    NO_OBSCURING = "NoObscuring"
    LINEAR_PENALTY = "LinearPenalty"
    SUPERLINEAR_PENALTY = "SuperlinearPenalty"


@dataclass(frozen=True)
class RegulatoryRegime:
    beta: float = 0.0
    eta: float = 1.0
    alpha: float = 1.0
    kappa: float = 1.0
    b: float = 0.0
    c: float = 0.0
    c1: float = 1.0
    p: float = 1.0
    aggregation: Aggregation = Aggregation.SUM

    def __post_init__(self) -> None:
        if not isinstance(self.aggregation, Aggregation):
            object.__setattr__(self, "aggregation", Aggregation(str(self.aggregation).lower()))

    @property
    def c2(self) -> float:
        return self.kappa * self.b * self.c1

    @property
    def sup_penalty(self) -> bool:
        return math.isinf(self.p)

    @property
    def admits_limit(self) -> bool:
        return 2.0 * self.beta * self.eta < self.eta + self.alpha - 1.0

    def with_(self, **changes) -> "RegulatoryRegime":
        return replace(self, **changes)


@dataclass(frozen=True)
class SigmaSchedule:
    """Piecewise-constant noise intensity; ``values[k]`` holds on ``[knots[k], knots[k+1])``."""

    knots: Tuple[float, ...] = (0.0,)
    values: Tuple[float, ...] = (1.0,)

    @classmethod
    def constant(cls, value: float) -> "SigmaSchedule":
        return cls((0.0,), (float(value),))

    @property
    def floor(self) -> float:
        return min(self.values)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        idx = np.searchsorted(np.asarray(self.knots), t, side="right") - 1
        out = np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)]
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MarketConfig:
    horizon_t: float = 1.0
    mean_value: float = 0.0
    v: float = 1.0
    sigma: SigmaSchedule = field(default_factory=SigmaSchedule)
    population_n: int = 1
    value_support: Tuple[Tuple[float, float], ...] = ()

    @property
    def delta(self) -> float:
        return self.v - self.mean_value

    @property
    def sign(self) -> float:
        return float(np.sign(self.delta))

    def with_(self, **changes) -> "MarketConfig":
        return replace(self, **changes)


def _is_one(value: float) -> bool:
    return abs(value - 1.0) <= EXPONENT_TOL


def stealth_index(regime: RegulatoryRegime) -> float:
    if not regime.admits_limit:
        raise ValidityError(
            "2*beta*eta >= eta + alpha - 1: no limiting equilibrium",
            ["2*beta*eta >= eta + alpha - 1"],
        )
    if regime.beta <= 0.0:
        return 0.0
    if _is_one(regime.alpha):
        return regime.beta
    return regime.beta * regime.eta / (regime.eta + regime.alpha - 1.0)


def classify_scenario(regime: RegulatoryRegime) -> ScenarioTag:
    if regime.beta <= 0.0:
        return ScenarioTag.NO_OBSCURING
    if _is_one(regime.alpha):
        return ScenarioTag.LINEAR_PENALTY
    return ScenarioTag.SUPERLINEAR_PENALTY


def validate_regime(regime: RegulatoryRegime, market: MarketConfig) -> List[str]:
    report: List[str] = []
    if regime.beta < 0:
        report.append("beta < 0")
    if regime.eta < 1:
        report.append("eta < 1")
    if regime.alpha < 1:
        report.append("alpha < 1")
    if regime.kappa <= 0:
        report.append("kappa <= 0")
    if regime.b < 0:
        report.append("b < 0")
    if regime.c < 0:
        report.append("c < 0")
    if regime.c1 < 0:
        report.append("c1 < 0")
    if not regime.p >= 1:
        report.append("p < 1")
    if not regime.admits_limit:
        report.append("2*beta*eta >= eta + alpha - 1")

    if market.horizon_t <= 0:
        report.append("T <= 0")
    if market.sigma.floor <= 0:
        report.append("sigma <= 0")
    if market.population_n < 1:
        report.append("N < 1")
    report.extend(_support_report(market.value_support, market.mean_value))
    if market.v == market.mean_value:
        report.append("degenerate value: v == mean_value")
    return report


def _support_report(support: Sequence[Tuple[float, float]], mean_value: float) -> List[str]:
    if not support:
        return []
    probs = np.array([prob for _, prob in support], dtype=float)
    values = np.array([value for value, _ in support], dtype=float)
    issues: List[str] = []
    if np.any(probs < 0):
        issues.append("support probability < 0")
    if abs(probs.sum() - 1.0) > PROBABILITY_TOL:
        issues.append("support probabilities do not sum to 1")
    if abs(float(values @ probs) - mean_value) > MEAN_TOL:
        issues.append("support mean != mean_value")
    return issues


def epsilon_rate_exponent(regime: RegulatoryRegime) -> float:
    """Exponent r with ε_N = O(N^r) for the limiting equilibrium played at population N."""
    gamma = stealth_index(regime)
    if regime.beta <= 0.0:
        return gamma - 0.5
    if _is_one(regime.alpha):
        return max(gamma - 0.5, -gamma)
    return max(gamma - 0.5, -gamma * (regime.alpha - 1.0))


def penalty_gap_exponent(regime: RegulatoryRegime) -> float:
    gamma = stealth_index(regime)
    if regime.beta <= 0.0:
        return 0.0
    if _is_one(regime.alpha):
        return -gamma
    return -gamma * (regime.alpha - 1.0)


def value_variance(market: MarketConfig) -> float:
    if not market.value_support:
        return 0.0
    values = np.array([value for value, _ in market.value_support], dtype=float)
    probs = np.array([prob for _, prob in market.value_support], dtype=float)
    return float(probs @ (values - market.mean_value) ** 2)
