"""Limiting-equilibrium solvers, objective evaluators and first-order diagnostics.

Three closed forms are available:

* ``η = 1, α > 1``: the strategy explodes at ``T`` through the inverse of ``g_v``;
* ``η = pα, α > 1``: the strategy is constant in time;
* ``α = η = 1``: a degenerate family fixed by its cumulative order when ``p = 1`` or ``b = 0``,
  otherwise the two-parameter shooting solution in ``services/shooting.py``.

Every solver works on ``Δ = |v - E[V]|`` and applies ``sgn(v - E[V])`` at the end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, interpolate

from legalrisk.app.core.errors import DivisionError, FitError, ValidityError
from legalrisk.app.core.model import (
    EXPONENT_TOL,
    Aggregation,
    MarketConfig,
    RegulatoryRegime,
    ScenarioTag,
    classify_scenario,
    stealth_index,
    validate_regime,
)
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import ClosedFormStrategy, StrategyPath, constant_strategy
from legalrisk.app.numerics.special_fn import GvParams, gap_inverse, g_v, integrate_segments
from legalrisk.app.services.penalty import integrate_state, running_sup_profile, survival_weighted_objective
from legalrisk.app.services.records import SolutionRecord
from legalrisk.app.services.shooting import ShootingState, solve_shooting

logger = logging.getLogger(__name__)

BLOWUP_WINDOW = (1e-3, 1e-6)
BLOWUP_SAMPLES = 25
MIN_FIT_SAMPLES = 5
L2_CUTOFF = 1e-3
RESIDUAL_POINTS = 20

SOLVER_FORMS = {
    "scenario_I": ScenarioTag.SUPERLINEAR_PENALTY,
    "scenario_II": ScenarioTag.SUPERLINEAR_PENALTY,
    "scenario_III_degenerate": ScenarioTag.LINEAR_PENALTY,
    "scenario_III_shooting": ScenarioTag.LINEAR_PENALTY,
}


@dataclass(frozen=True)
class DegenerateFamily:
    """All sign-consistent square-integrable strategies with ``∫₀ᵀ|θ| = x̄``."""

    x_bar: float
    horizon: float
    sign: float

    @property
    def representative(self) -> ClosedFormStrategy:
        return constant_strategy(self.sign * self.x_bar / self.horizon, self.horizon)

    def is_member(self, strategy: StrategyPath, tol: float = 1e-6) -> bool:
        grid = np.linspace(0.0, self.horizon, 1025)[:-1]
        if np.any(self.sign * np.asarray(strategy(grid)) < -tol):
            return False
        total = integrate_segments(lambda s: abs(float(strategy(s))), strategy.segments())
        return abs(total - self.x_bar) <= tol * max(1.0, self.x_bar)


@dataclass
class EquilibriumSolution:
    gamma: float
    scenario: ScenarioTag
    strategy: StrategyPath
    limiting_price: float
    objective: float
    solver: str
    regime: RegulatoryRegime
    market: MarketConfig
    diagnostics: Dict[str, float] = field(default_factory=dict)
    shooting: Optional[ShootingState] = None
    family: Optional[DegenerateFamily] = None

    @property
    def objective_form(self) -> ScenarioTag:
        return SOLVER_FORMS[self.solver]


@dataclass
class ResidualProfile:
    grid: np.ndarray
    values: np.ndarray
    max_deviation: float


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= EXPONENT_TOL * max(1.0, abs(b))


def _require(
    solver: str,
    regime: RegulatoryRegime,
    market: MarketConfig,
    checks: Iterable[Tuple[bool, str]],
) -> None:
    report = validate_regime(regime, market)
    report.extend(message for ok, message in checks if not ok)
    if report:
        raise ValidityError(f"{solver}: " + "; ".join(report), report)


def _scenario_tag(regime: RegulatoryRegime, solver: str) -> ScenarioTag:
    tag = classify_scenario(regime)
    if tag is ScenarioTag.NO_OBSCURING:
        logger.warning("%s with beta=0: objective reported in the %s form", solver, SOLVER_FORMS[solver].value)
    return tag


def scenario_I_blowup_constant(params: GvParams, horizon: float) -> float:
    """``K∞`` with ``|θ̃*(t)| ≈ K∞ (T-t)^{-1/(pα+1)}`` near ``T``."""
    q = params.q
    g0 = g_v(0.0, params)
    k = (g0 / horizon) ** (1.0 / q)
    return k / (params.delta * ((q + 1.0) * g0 / (params.scale * horizon)) ** (1.0 / (q + 1.0)))


def _scenario_I_strategy(params: GvParams, horizon: float, sign: float) -> Tuple[ClosedFormStrategy, float, float]:
    g0 = g_v(0.0, params)
    k = (g0 / horizon) ** (1.0 / params.q)

    def evaluate(t: np.ndarray) -> np.ndarray:
        remaining = np.clip((horizon - t) / horizon, 0.0, 1.0) * g0
        gap = np.asarray(gap_inverse(remaining, params))
        with np.errstate(divide="ignore"):
            return sign * k / gap

    return ClosedFormStrategy(evaluate, horizon, singular_at_end=True), g0, k


def solve_scenario_I(regime: RegulatoryRegime, market: MarketConfig) -> EquilibriumSolution:
    _require(
        "scenario_I",
        regime,
        market,
        [
            (_close(regime.eta, 1.0), "eta != 1"),
            (regime.alpha > 1.0 + EXPONENT_TOL, "alpha <= 1"),
            (regime.c2 > 0.0, "c2 = kappa*b*c1 <= 0"),
            (not regime.sup_penalty, "p = inf has no closed form"),
        ],
    )
    params = GvParams.from_model(regime, market)
    horizon = market.horizon_t
    strategy, g0, k = _scenario_I_strategy(params, horizon, market.sign)
    diagnostics = {
        "x_bar": params.x_bar,
        "g0": g0,
        "K": k,
        "K_inf": scenario_I_blowup_constant(params, horizon),
        "blowup_exponent": blowup_rate_fit(strategy, _window(horizon)),
        "l2_truncated": _truncated_l2(strategy),
    }
    solution = EquilibriumSolution(
        gamma=stealth_index(regime),
        scenario=_scenario_tag(regime, "scenario_I"),
        strategy=strategy,
        limiting_price=market.mean_value,
        objective=k * horizon,
        solver="scenario_I",
        regime=regime,
        market=market,
        diagnostics=diagnostics,
    )
    _log_solution(solution)
    return solution


def solve_scenario_II(regime: RegulatoryRegime, market: MarketConfig) -> EquilibriumSolution:
    p, alpha = regime.p, regime.alpha
    _require(
        "scenario_II",
        regime,
        market,
        [
            (not regime.sup_penalty, "p = inf has no closed form"),
            (_close(regime.eta, p * alpha), "eta != p*alpha"),
            (alpha > 1.0 + EXPONENT_TOL, "alpha <= 1"),
            (regime.c2 > 0.0, "c2 = kappa*b*c1 <= 0"),
        ],
    )
    delta, c2, horizon = abs(market.delta), regime.c2, market.horizon_t
    theta = (delta / (p * alpha * c2)) ** (1.0 / ((p + 1.0) * alpha - 1.0)) * horizon ** (
        1.0 / (p * (1.0 - alpha - p * alpha))
    )
    objective = delta * horizon * theta - c2 * p / (p + 1.0) * horizon ** (1.0 + 1.0 / p) * theta ** (
        regime.eta + alpha
    )
    solution = EquilibriumSolution(
        gamma=stealth_index(regime),
        scenario=_scenario_tag(regime, "scenario_II"),
        strategy=constant_strategy(market.sign * theta, horizon),
        limiting_price=market.mean_value,
        objective=objective,
        solver="scenario_II",
        regime=regime,
        market=market,
        diagnostics={
            "theta_const": theta,
            "x_bar": horizon * theta ** (p * alpha),
            "foc_residual": _scenario_II_residual(theta, delta, regime, horizon),
        },
    )
    _log_solution(solution)
    return solution


def _scenario_III_checks(regime: RegulatoryRegime) -> List[Tuple[bool, str]]:
    return [
        (_close(regime.alpha, 1.0), "alpha != 1"),
        (_close(regime.eta, 1.0), "eta != 1"),
    ]


def degenerate_objective(x_bar: float, k1: float, kappa: float, delta: float) -> float:
    """``∫₀^{x̄} e^{-κx}(Δ - K₁x) dx``."""
    decay = math.exp(-kappa * x_bar)
    return delta * (1.0 - decay) / kappa - k1 * (1.0 - decay * (1.0 + kappa * x_bar)) / kappa**2


def solve_scenario_III_degenerate(regime: RegulatoryRegime, market: MarketConfig) -> EquilibriumSolution:
    checks = _scenario_III_checks(regime)
    checks.append((_close(regime.p, 1.0) or regime.b == 0.0, "p > 1 with b > 0 needs the shooting solver"))
    _require("scenario_III_degenerate", regime, market, checks)
    delta = abs(market.delta)
    k1 = regime.kappa * regime.c1 * (regime.b + regime.c * delta)
    if k1 == 0.0:
        raise DivisionError("kappa*c1*(b + c*|v - mean|) = 0: no penalty, no interior optimum")
    x_bar = delta / k1
    family = DegenerateFamily(x_bar=x_bar, horizon=market.horizon_t, sign=market.sign)
    solution = EquilibriumSolution(
        gamma=stealth_index(regime),
        scenario=_scenario_tag(regime, "scenario_III_degenerate"),
        strategy=family.representative,
        limiting_price=market.mean_value,
        objective=degenerate_objective(x_bar, k1, regime.kappa, delta),
        solver="scenario_III_degenerate",
        regime=regime,
        market=market,
        diagnostics={"x_bar": x_bar, "k1": k1, "transversality": delta - k1 * x_bar},
        family=family,
    )
    _log_solution(solution)
    return solution


def solve_scenario_III_shooting(regime: RegulatoryRegime, market: MarketConfig) -> EquilibriumSolution:
    checks = _scenario_III_checks(regime)
    checks.extend(
        [
            (regime.p > 1.0 + EXPONENT_TOL, "p = 1 is the degenerate case"),
            (not regime.sup_penalty, "p = inf is not supported by the shooting solver"),
            (regime.b > 0.0, "b = 0 is the degenerate case"),
        ]
    )
    _require("scenario_III_shooting", regime, market, checks)
    state, strategy = solve_shooting(regime, market)
    horizon = market.horizon_t
    diagnostics = {
        "chi": state.chi,
        "varsigma": state.varsigma,
        "mu": state.mu,
        "theta0": state.theta0,
        "x_bar": state.x_bar,
        "h_bar": state.h_bar,
        "r_transversality": state.residuals[0],
        "r_time": state.residuals[1],
        "iterations": float(state.iterations),
        "blowup_exponent": blowup_rate_fit(strategy, _window(horizon)),
    }
    solution = EquilibriumSolution(
        gamma=stealth_index(regime),
        scenario=_scenario_tag(regime, "scenario_III_shooting"),
        strategy=strategy,
        limiting_price=market.mean_value,
        objective=state.objective,
        solver="scenario_III_shooting",
        regime=regime,
        market=market,
        diagnostics=diagnostics,
        shooting=state,
    )
    _log_solution(solution)
    return solution


def closed_form_kind(regime: RegulatoryRegime) -> str:
    """``"I"``, ``"II"`` or ``"III"``; raises ValidityError when no closed form applies."""
    if _close(regime.eta, 1.0) and regime.alpha > 1.0 + EXPONENT_TOL:
        return "I"
    if not regime.sup_penalty and _close(regime.eta, regime.p * regime.alpha) and regime.alpha > 1.0 + EXPONENT_TOL:
        return "II"
    if _close(regime.alpha, 1.0) and _close(regime.eta, 1.0):
        return "III"
    message = f"no closed form for eta={regime.eta}, alpha={regime.alpha}, p={regime.p}"
    raise ValidityError(message, [message])


def solve(regime: RegulatoryRegime, market: MarketConfig, scenario: str = "auto") -> EquilibriumSolution:
    kind = closed_form_kind(regime) if scenario.lower() == "auto" else scenario.upper()
    if kind == "I":
        return solve_scenario_I(regime, market)
    if kind == "II":
        return solve_scenario_II(regime, market)
    if kind == "III":
        if _close(regime.p, 1.0) or regime.b == 0.0:
            return solve_scenario_III_degenerate(regime, market)
        return solve_scenario_III_shooting(regime, market)
    raise ValidityError(f"unknown scenario {scenario!r}", [f"unknown scenario {scenario!r}"])


def _superlinear_objective(strategy: StrategyPath, regime: RegulatoryRegime, delta: float) -> float:
    """``∫θΔ dt - C₂∫|θ|^η Π₀(θ_{[0,t]})/b dt``; survival weights have dropped out."""
    if regime.aggregation is Aggregation.PRODUCT:
        raise ValidityError("product aggregation has no superlinear limit", ["aggregation = product"])
    sup_profile = running_sup_profile(strategy, regime.with_(b=1.0)) if regime.sup_penalty else None
    p, q = regime.p, regime.p * regime.alpha

    def rates(t: float, theta: float, state: np.ndarray) -> np.ndarray:
        size = abs(theta)
        if sup_profile is not None:
            crim, growth = sup_profile(t), 0.0
        else:
            crim, growth = max(state[0], 0.0) ** (1.0 / p), size**q
        return np.array([growth, theta * delta - regime.c2 * size**regime.eta * crim])

    return float(integrate_state(strategy, rates, n_states=2)[-1])


def limiting_objective(
    strategy: StrategyPath,
    scenario: Union[ScenarioTag, str],
    regime: RegulatoryRegime,
    market: MarketConfig,
) -> float:
    tag = ScenarioTag(scenario)
    if tag is ScenarioTag.SUPERLINEAR_PENALTY:
        return _superlinear_objective(strategy, regime, market.delta)
    # N^γ scaling leaves the hazard argument unchanged when γ = β.
    return survival_weighted_objective(strategy, regime, market.delta, hazard_scale=1.0)


def finite_N_scaled_objective(
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    market: MarketConfig,
    population_n: Optional[int] = None,
) -> float:
    """``N^{-γ} J(E[V]; N^γθ̃, v)`` for a deterministic strategy."""
    n = float(market.population_n if population_n is None else population_n)
    scale = n ** stealth_index(regime)
    value = survival_weighted_objective(
        strategy.scaled(scale), regime, market.delta, hazard_scale=n ** (-regime.beta)
    )
    return value / scale


def blowup_rate_fit(
    strategy: StrategyPath,
    window: Sequence[float] = BLOWUP_WINDOW,
    samples: int = BLOWUP_SAMPLES,
) -> float:
    """Least-squares slope of ``log|θ|`` against ``log(T - t)`` for ``T - t`` in ``[b, a]``."""
    far, near = float(window[0]), float(window[1])
    if not far > near > 0.0:
        raise FitError(f"window needs a > b > 0, got {window}")
    time_to_go = np.geomspace(far, near, samples)
    values = np.abs(np.asarray(strategy(strategy.horizon - time_to_go), dtype=float))
    valid = np.isfinite(values) & (values > 0.0)
    if int(valid.sum()) < MIN_FIT_SAMPLES:
        raise FitError(f"only {int(valid.sum())} usable samples in the blowup window")
    slope, _ = np.polyfit(np.log(time_to_go[valid]), np.log(values[valid]), 1)
    return float(slope)


def _window(horizon: float) -> Tuple[float, float]:
    return BLOWUP_WINDOW[0] * horizon, BLOWUP_WINDOW[1] * horizon


def _truncated_l2(strategy: StrategyPath) -> float:
    end = strategy.horizon * (1.0 - L2_CUTOFF)
    return integrate_segments(lambda s: float(strategy(s)) ** 2, strategy.segments(end))


def _scenario_II_residual(theta: float, delta: float, regime: RegulatoryRegime, horizon: float) -> float:
    eta, p = regime.eta, regime.p
    return (delta / eta) * theta ** (1.0 - eta) - regime.c2 * (horizon * theta**eta) ** (1.0 / p)


def first_order_residual(solution: EquilibriumSolution) -> ResidualProfile:
    if solution.solver == "scenario_I":
        return _scenario_I_residual(solution)
    if solution.solver == "scenario_II":
        theta = abs(float(solution.strategy(0.5 * solution.market.horizon_t)))
        value = _scenario_II_residual(theta, abs(solution.market.delta), solution.regime, solution.market.horizon_t)
        return ResidualProfile(np.array([theta]), np.array([value]), abs(value))
    if solution.solver == "scenario_III_shooting":
        return _scenario_III_residual(solution)
    value = solution.diagnostics["transversality"]
    return ResidualProfile(np.array([solution.diagnostics["x_bar"]]), np.array([value]), abs(value))


def _scenario_I_residual(solution: EquilibriumSolution) -> ResidualProfile:
    """``|θ(t)|·(Δ - C₂x(t)^{1/p})`` against ``K``, with ``x(t) = ∫₀ᵗ|θ|^{pα}`` by quadrature."""
    regime, market = solution.regime, solution.market
    strategy = solution.strategy
    q = regime.p * regime.alpha
    delta = abs(market.delta)
    times = np.linspace(0.0, 0.9 * market.horizon_t, RESIDUAL_POINTS)
    state = np.zeros_like(times)
    for k in range(1, times.size):
        piece = integrate_segments(lambda s: abs(float(strategy(s))) ** q, [(times[k - 1], times[k])])
        state[k] = state[k - 1] + piece
    products = np.abs(strategy(times)) * (delta - regime.c2 * state ** (1.0 / regime.p))
    deviation = products / solution.diagnostics["K"] - 1.0
    return ResidualProfile(state, deviation, float(np.max(np.abs(deviation))))


def _scenario_III_residual(solution: EquilibriumSolution) -> ResidualProfile:
    """``(h')^{p/(p-1)} ∫ₓ^{x̄} e^{-κy} h^{1/p-1} dy - ς``, relative to ``ς``, off the shooting trace."""
    state = solution.shooting
    regime = solution.regime
    p, kappa = regime.p, regime.kappa
    trace = state.trace
    finite = np.isfinite(trace["h_prime"])
    x, h, h_prime = trace["x"][finite], trace["h"][finite], trace["h_prime"][finite]
    order = np.argsort(x)
    x, h, h_prime = x[order], h[order], h_prime[order]
    increasing = np.concatenate([[True], np.diff(x) > 0])
    x, h, h_prime = x[increasing], h[increasing], h_prime[increasing]
    h_of_x = interpolate.PchipInterpolator(x, h)
    log_slope = interpolate.PchipInterpolator(x, np.log(h_prime))
    x_bar = state.x_bar
    grid = np.linspace(0.01 * x_bar, 0.9 * x_bar, RESIDUAL_POINTS)
    values = np.empty_like(grid)
    for k, point in enumerate(grid):
        tail, _ = integrate.quad(
            lambda y: math.exp(-kappa * y) * float(h_of_x(min(y, x[-1]))) ** (1.0 / p - 1.0),
            point,
            x_bar,
            epsabs=0.0,
            epsrel=1e-12,
            limit=200,
        )
        values[k] = math.exp(float(log_slope(point)) * p / (p - 1.0)) * tail / state.varsigma - 1.0
    return ResidualProfile(grid, values, float(np.max(np.abs(values))))


def sample_strategy(
    solution: EquilibriumSolution, grid: Union[int, Sequence[float], np.ndarray, None] = None
) -> pd.DataFrame:
    horizon = solution.market.horizon_t
    if grid is None:
        grid = settings.default_steps
    if isinstance(grid, (int, np.integer)):
        times = np.linspace(0.0, horizon, int(grid), endpoint=False)
    else:
        times = np.asarray(grid, dtype=float)
    return pd.DataFrame({"t": times, "theta": np.asarray(solution.strategy(times), dtype=float)})


def solution_record(solution: EquilibriumSolution, meta: Optional[Dict[str, str]] = None) -> SolutionRecord:
    return SolutionRecord(
        scenario=solution.scenario.value,
        solver=solution.solver,
        gamma=solution.gamma,
        limiting_price=solution.limiting_price,
        objective=solution.objective,
        diagnostics={key: float(value) for key, value in solution.diagnostics.items()},
        meta=dict(meta or {}),
    )


def _log_solution(solution: EquilibriumSolution) -> None:
    logger.info(
        "solved %s scenario=%s gamma=%.6g objective=%.10g x_bar=%.10g",
        solution.solver,
        solution.scenario.value,
        solution.gamma,
        solution.objective,
        solution.diagnostics.get("x_bar", float("nan")),
    )
