"""Acceptance suites behind ``legalrisk verify``.

Each suite returns ``CheckResult`` rows; an exception inside a suite becomes a failed check so one
broken suite never hides the others.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from legalrisk.app.core.model import (
    MarketConfig,
    RegulatoryRegime,
    ScenarioTag,
    penalty_gap_exponent,
    stealth_index,
)
from legalrisk.app.core.strategy import ClosedFormStrategy, PiecewiseConstantStrategy, constant_strategy
from legalrisk.app.numerics.special_fn import GvParams, g_v, g_v_beta_difference, g_v_quadrature, incomplete_beta
from legalrisk.app.services import control_oracle, equilibrium, market_sim
from legalrisk.app.services.penalty import sup_penalty_convergence
from legalrisk.app.services.records import CheckResult, VerificationReport

logger = logging.getLogger(__name__)

SQRT_E = math.sqrt(math.e)
REFERENCE_MARKET = MarketConfig(horizon_t=1.0, mean_value=SQRT_E, v=3.0)
SCENARIO_I_REGIME = RegulatoryRegime(beta=0.3, eta=1.0, alpha=2.0, kappa=1.0, b=1.0, c1=1.0, p=2.0)
SCENARIO_II_REGIME = SCENARIO_I_REGIME.with_(eta=4.0)
SHOOTING_REGIME = RegulatoryRegime(beta=0.3, eta=1.0, alpha=1.0, kappa=1.0, b=2.0, c=1.0, c1=1.0, p=1.5)
DEGENERATE_REGIME = SHOOTING_REGIME.with_(p=1.0)
REFERENCE_BLOWUP_VALUES = {1.5: 135497.0, 1.75: 127866.0, 2.0: 105855.0}
NEAR_END = 1e-5

Suite = Callable[[int], List[CheckResult]]


def _check(suite: str, name: str, observed: float, expected: float, tolerance: float, relative: bool = False) -> CheckResult:
    gap = abs(observed - expected)
    if relative:
        gap /= max(abs(expected), 1e-300)
    return CheckResult(
        suite=suite,
        name=name,
        passed=bool(gap <= tolerance),
        observed=float(observed),
        expected=float(expected),
        tolerance=tolerance,
        detail=f"{'relative' if relative else 'absolute'} gap {gap:.3g}",
    )


def _flag(suite: str, name: str, passed: bool, detail: str = "", observed: Optional[float] = None) -> CheckResult:
    return CheckResult(suite=suite, name=name, passed=bool(passed), observed=observed, detail=detail)


def suite_special_fn(seed: int) -> List[CheckResult]:
    checks: List[CheckResult] = []
    worst = 0.0
    worst_difference = 0.0
    for p in (1.0, 1.5, 2.0, 3.0, 4.0):
        for alpha in (1.5, 2.0):
            params = GvParams(REFERENCE_MARKET.delta, 1.0, p, alpha)
            for fraction in np.linspace(0.0, 0.95, 20):
                x = fraction * params.x_bar
                closed, quad = g_v(x, params), g_v_quadrature(x, params)
                worst = max(worst, abs(closed - quad) / abs(quad))
                if fraction <= 0.5:
                    worst_difference = max(worst_difference, abs(g_v_beta_difference(x, params) - closed) / closed)
    checks.append(_check("special_fn", "beta_form_vs_quadrature", worst, 0.0, 1e-10))
    checks.append(_check("special_fn", "reflected_vs_difference_form", worst_difference, 0.0, 1e-10))
    checks.append(_check("special_fn", "complete_beta", incomplete_beta(1.0, 2.5, 1.5), math.gamma(2.5) * math.gamma(1.5) / math.gamma(4.0), 1e-13, relative=True))
    params = GvParams(REFERENCE_MARKET.delta, 1.0, 2.0, 2.0)
    checks.append(_check("special_fn", "g_v_at_zero", g_v(0.0, params), REFERENCE_MARKET.delta**6 / 15.0, 1e-12, relative=True))
    return checks


def suite_penalty(seed: int) -> List[CheckResult]:
    regime = RegulatoryRegime(b=1.0, alpha=1.0)
    wavy = ClosedFormStrategy(lambda t: 1.0 + 0.5 * np.sin(2.0 * np.pi * t), 1.0)
    table = sup_penalty_convergence(wavy, regime)
    increasing = bool(np.all(np.diff(table["lp_integral"]) > 0.0))
    below_sup = bool(np.all(np.asarray(table["lp_integral"]) <= table["sup_integral"][0] * (1.0 + 1e-9)))
    flat = sup_penalty_convergence(constant_strategy(1.0, 1.0), regime)
    gap = flat["sup_integral"][0] - flat["lp_integral"][-1]
    p_last = flat["p"][-1]
    return [
        _flag("penalty", "lp_integral_increasing_in_p", increasing),
        _flag("penalty", "lp_integral_below_sup", below_sup),
        _check("penalty", "gap_at_p64_constant_strategy", gap, 1.0 / (p_last + 1.0), 0.5 / (p_last + 1.0)),
    ]


def suite_scenario_I(seed: int) -> List[CheckResult]:
    solution = equilibrium.solve_scenario_I(SCENARIO_I_REGIME, REFERENCE_MARKET)
    delta = REFERENCE_MARKET.delta
    expected = (delta**6 / 15.0) ** 0.25 / delta
    problem = control_oracle.build_problem(ScenarioTag.SUPERLINEAR_PENALTY, SCENARIO_I_REGIME, REFERENCE_MARKET, 50, graded=True, reference=solution)
    result = control_oracle.optimize_piecewise(problem, seed=seed)
    gaps = control_oracle.compare_to_closed_form(result, solution)
    return [
        _check("scenario_I", "theta_at_zero", float(solution.strategy(0.0)), expected, 1e-10, relative=True),
        _check("scenario_I", "oracle_pointwise_gap", gaps["max_rel_gap"], 0.0, 0.05),
        _check("scenario_I", "oracle_objective_gap", gaps["objective_gap"], 0.0, 0.01),
    ]


def suite_scenario_II(seed: int) -> List[CheckResult]:
    solution = equilibrium.solve_scenario_II(SCENARIO_II_REGIME, REFERENCE_MARKET)
    theta = solution.diagnostics["theta_const"]
    problem = control_oracle.build_problem(ScenarioTag.SUPERLINEAR_PENALTY, SCENARIO_II_REGIME, REFERENCE_MARKET, 20, reference=solution)
    result = control_oracle.optimize_piecewise(problem, seed=seed)
    cells = np.abs(result.theta)
    gaps = control_oracle.compare_to_closed_form(result, solution)
    return [
        _check("scenario_II", "theta_const", theta, (REFERENCE_MARKET.delta / 4.0) ** 0.2, 1e-12, relative=True),
        _check("scenario_II", "oracle_cell_mean", float(cells.mean()), theta, 0.01, relative=True),
        _check("scenario_II", "oracle_cell_spread", float(cells.std() / cells.mean()), 0.0, 0.02),
        _check("scenario_II", "oracle_objective_gap", gaps["objective_gap"], 0.0, 0.01),
    ]


def _two_step(x_bar: float, horizon: float, sign: float) -> PiecewiseConstantStrategy:
    # three quarters of the order in the first half
    return PiecewiseConstantStrategy([0.0, 0.5 * horizon, horizon], [sign * 1.5 * x_bar / horizon, sign * 0.5 * x_bar / horizon])


def suite_scenario_III(seed: int) -> List[CheckResult]:
    solution = equilibrium.solve_scenario_III_degenerate(DEGENERATE_REGIME, REFERENCE_MARKET)
    x_bar = solution.diagnostics["x_bar"]
    expected = REFERENCE_MARKET.delta / (2.0 + REFERENCE_MARKET.delta)
    family = solution.family
    front = _two_step(x_bar, REFERENCE_MARKET.horizon_t, REFERENCE_MARKET.sign)
    value_flat = equilibrium.limiting_objective(family.representative, ScenarioTag.LINEAR_PENALTY, DEGENERATE_REGIME, REFERENCE_MARKET)
    value_front = equilibrium.limiting_objective(front, ScenarioTag.LINEAR_PENALTY, DEGENERATE_REGIME, REFERENCE_MARKET)
    problem = control_oracle.build_problem(ScenarioTag.LINEAR_PENALTY, DEGENERATE_REGIME, REFERENCE_MARKET, 20, reference=solution)
    result = control_oracle.optimize_piecewise(problem, seed=seed)
    total = float(np.sum(np.abs(result.theta) * problem.widths))
    return [
        _check("scenario_III", "x_bar", x_bar, expected, 1e-12, relative=True),
        _check("scenario_III", "family_members_equal_objective", value_front, value_flat, 1e-8),
        _check("scenario_III", "closed_objective_matches_evaluator", solution.objective, value_flat, 1e-8),
        _flag("scenario_III", "two_step_is_member", family.is_member(front)),
        _check("scenario_III", "oracle_cumulative_order", total, x_bar, 0.02, relative=True),
    ]


def suite_near_end(seed: int) -> List[CheckResult]:
    checks: List[CheckResult] = []
    near: Dict[float, float] = {}
    for p, reference in REFERENCE_BLOWUP_VALUES.items():
        solution = equilibrium.solve_scenario_III_shooting(SHOOTING_REGIME.with_(p=p), REFERENCE_MARKET)
        horizon = REFERENCE_MARKET.horizon_t
        value = float(solution.strategy(horizon * (1.0 - NEAR_END)))
        near[p] = value
        residual = max(abs(solution.diagnostics["r_transversality"]), abs(solution.diagnostics["r_time"]))
        checks.append(_check("near_end", f"residuals_p{p:g}", residual, 0.0, 1e-8))
        feasible = value * horizon * NEAR_END < solution.diagnostics["x_bar"]
        checks.append(
            CheckResult(
                suite="near_end",
                name=f"near_end_value_p{p:g}",
                passed=bool(feasible),
                observed=value,
                expected=reference,
                detail=(
                    f"reference {reference:g} not asserted: it gives theta*(T-t) = {reference * horizon * NEAR_END:.3g} "
                    f"above x_bar={solution.diagnostics['x_bar']:.6g}; asserted theta*(T-t) < x_bar instead"
                ),
            )
        )
    ordered = near[1.5] > near[1.75] > near[2.0]
    checks.append(_flag("near_end", "near_end_decreasing_in_p", ordered, detail=str(near)))
    return checks


def suite_blowup(seed: int) -> List[CheckResult]:
    scenario_one = equilibrium.solve_scenario_I(SCENARIO_I_REGIME, REFERENCE_MARKET)
    q = SCENARIO_I_REGIME.p * SCENARIO_I_REGIME.alpha
    checks = [_check("blowup", "scenario_I_slope", scenario_one.diagnostics["blowup_exponent"], -1.0 / (q + 1.0), 0.01)]
    for p in (1.5, 2.0):
        solution = equilibrium.solve_scenario_III_shooting(SHOOTING_REGIME.with_(p=p), REFERENCE_MARKET)
        checks.append(_check("blowup", f"scenario_III_slope_p{p:g}", solution.diagnostics["blowup_exponent"], -1.0 / (p + 1.0), 0.02))
    return checks


def _benchmark() -> tuple:
    regime = RegulatoryRegime(beta=0.0, eta=1.0, alpha=1.0, kappa=1.0, b=0.0, c=0.0, p=1.0)
    market = MarketConfig(horizon_t=1.0, mean_value=0.0, v=1.0)
    return regime, market, constant_strategy(1.0, 1.0)


def suite_survival_objective(seed: int, num_paths: int = 100_000, draws: int = 5) -> List[CheckResult]:
    regime, market, strategy = _benchmark()
    outcome = market_sim.simulate_paths(market, strategy, regime, num_paths, seed=seed)
    closed = 1.0 - math.exp(-1.0)
    checks = [
        _check("survival_objective", "benchmark_mean", outcome.mean_net_payoff, closed, 3.0 * outcome.stderr),
        _check("survival_objective", "benchmark_deterministic", market_sim.deterministic_objective(market, strategy, regime), closed, 1e-9),
        _check("survival_objective", "prosecution_vs_survival", outcome.prosecution_frequency, 1.0 - outcome.mean_survival,
               3.0 * math.sqrt(closed * (1.0 - closed) / num_paths)),
    ]
    halved = market_sim.simulate_paths(market, strategy, regime, num_paths, dt=market.horizon_t / 4096, seed=seed)
    checks.append(_check("survival_objective", "dt_halving", halved.mean_net_payoff, outcome.mean_net_payoff, outcome.stderr))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    for draw in range(draws):
        trial = RegulatoryRegime(
            beta=0.0,
            eta=float(rng.choice([1.0, 2.0])),
            alpha=float(rng.choice([1.0, 2.0])),
            kappa=float(rng.uniform(0.5, 2.0)),
            b=float(rng.uniform(0.0, 1.0)),
            c=float(rng.uniform(0.0, 1.0)),
            c1=1.0,
            p=float(rng.choice([1.0, 2.0])),
        )
        level, slope = float(rng.uniform(0.5, 1.5)), float(rng.uniform(-0.4, 0.4))
        path = ClosedFormStrategy(lambda t, a=level, s=slope: a + s * t, 1.0)
        mc = market_sim.simulate_paths(market, path, trial, num_paths, seed=seed + draw + 1)
        exact = market_sim.deterministic_objective(market, path, trial)
        checks.append(_check("survival_objective", f"random_draw_{draw}", mc.mean_net_payoff, exact, 3.0 * mc.stderr))
    return checks


def pricing_market(population_n: int = 1) -> MarketConfig:
    return MarketConfig(
        horizon_t=1.0,
        mean_value=SQRT_E,
        v=SQRT_E + 1.0,
        population_n=population_n,
        value_support=((SQRT_E - 1.0, 0.5), (SQRT_E + 1.0, 0.5)),
    )


def pricing_decay(
    regime: RegulatoryRegime,
    populations: Sequence[int],
    num_paths: int,
    seed: int,
    dt: float = 1.0 / 256,
) -> List[float]:
    """Mean ``|P_T - E[V]|`` for scaled constant strategies ``N^γ·(v - E[V])``."""
    gamma = stealth_index(regime)
    means = []
    for n in populations:
        market = pricing_market(n)
        strategies = {
            value: constant_strategy(n**gamma * (value - market.mean_value), market.horizon_t)
            for value, _ in market.value_support
        }
        outcome = market_sim.simulate_paths(
            market, None, regime, num_paths, dt=dt, seed=seed, pricing=market_sim.FINITE_N,
            strategies=strategies, keep_paths=num_paths,
        )
        terminal = np.array([record.price[-1] for record in outcome.paths])
        means.append(float(np.mean(np.abs(terminal - market.mean_value))))
    return means


def suite_pricing(seed: int) -> List[CheckResult]:
    regime = RegulatoryRegime(beta=0.5, eta=1.0, alpha=2.0, kappa=0.0, b=1.0, p=2.0)
    populations = [10**2, 10**3, 10**4, 10**5]
    means = pricing_decay(regime, populations, 2000, seed)
    slope, _ = np.polyfit(np.log(populations), np.log(means), 1)
    gamma = stealth_index(regime)

    market = pricing_market(100)
    strategies = {value: constant_strategy(value - market.mean_value, 1.0) for value, _ in market.value_support}
    outcome = market_sim.simulate_paths(
        market, None, regime, 4000, dt=1.0 / 128, seed=seed, pricing=market_sim.FINITE_N,
        strategies=strategies, keep_paths=4000,
    )
    prices = np.stack([record.price for record in outcome.paths])
    spread = prices.std(axis=0, ddof=1) / math.sqrt(prices.shape[0])
    worst = float(np.max(np.abs(prices.mean(axis=0) - market.mean_value) / np.maximum(spread, 1e-12)))
    return [
        _check("pricing", "decay_slope", float(slope), gamma - 0.5, 0.1),
        _check("pricing", "price_starts_at_mean", float(prices[:, 0].max()), market.mean_value, 1e-12),
        CheckResult(suite="pricing", name="price_rationality", passed=worst <= 4.0, observed=worst, tolerance=4.0,
                    detail="max over grid times of |mean price - E[V]| in standard errors"),
    ]


def epsilon_gaps(regime: RegulatoryRegime, market: MarketConfig, populations: Sequence[int]) -> List[float]:
    solution = equilibrium.solve_scenario_I(regime, market)
    limit = equilibrium.limiting_objective(solution.strategy, ScenarioTag.SUPERLINEAR_PENALTY, regime, market)
    return [
        abs(equilibrium.finite_N_scaled_objective(solution.strategy, regime, market, n) - limit)
        for n in populations
    ]


EPSILON_REGIME = RegulatoryRegime(beta=0.5, eta=1.0, alpha=2.0, kappa=0.05, b=20.0, c=0.0, c1=1.0, p=2.0)


def suite_epsilon(seed: int) -> List[CheckResult]:
    populations = [10**2, 10**3, 10**4]
    gaps = epsilon_gaps(EPSILON_REGIME, REFERENCE_MARKET, populations)
    slope, _ = np.polyfit(np.log(populations), np.log(gaps), 1)
    return [
        _flag("epsilon", "gap_decreasing_in_N", bool(np.all(np.diff(gaps) < 0.0)), detail=str(gaps)),
        _check("epsilon", "gap_slope", float(slope), penalty_gap_exponent(EPSILON_REGIME), 0.15),
    ]


def suite_residuals(seed: int) -> List[CheckResult]:
    one = equilibrium.solve_scenario_I(SCENARIO_I_REGIME, REFERENCE_MARKET)
    two = equilibrium.solve_scenario_II(SCENARIO_II_REGIME, REFERENCE_MARKET)
    three = equilibrium.solve_scenario_III_shooting(SHOOTING_REGIME, REFERENCE_MARKET)
    return [
        _check("residuals", "scenario_I_product", equilibrium.first_order_residual(one).max_deviation, 0.0, 1e-6),
        _check("residuals", "scenario_II_foc", equilibrium.first_order_residual(two).max_deviation, 0.0, 1e-9),
        _check("residuals", "shooting_transversality", abs(three.diagnostics["r_transversality"]), 0.0, 1e-8),
        _check("residuals", "shooting_time", abs(three.diagnostics["r_time"]), 0.0, 1e-8),
        _check("residuals", "shooting_first_order", equilibrium.first_order_residual(three).max_deviation, 0.0, 1e-5),
    ]


def suite_monotonicity(seed: int) -> List[CheckResult]:
    ps = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    c2s = [1.0, 1.5, 2.0, 2.5, 3.0]
    times = np.linspace(0.0, 0.9, 10)
    paths = {}
    constants = {}
    for p in ps:
        for c2 in c2s:
            regime = SCENARIO_I_REGIME.with_(p=p, b=c2)
            paths[(p, c2)] = np.asarray(equilibrium.solve_scenario_I(regime, REFERENCE_MARKET).strategy(times))
            tied = regime.with_(eta=p * regime.alpha)
            constants[(p, c2)] = equilibrium.solve_scenario_II(tied, REFERENCE_MARKET).diagnostics["theta_const"]
    in_c2 = all(np.all(paths[(p, a)] > paths[(p, b)]) for p in ps for a, b in zip(c2s, c2s[1:]))
    in_p = all(np.all(paths[(a, c2)] > paths[(b, c2)]) for c2 in c2s for a, b in zip(ps, ps[1:]))
    const_c2 = all(constants[(p, a)] > constants[(p, b)] for p in ps for a, b in zip(c2s, c2s[1:]))
    return [
        _flag("monotonicity", "scenario_I_decreasing_in_c2", in_c2),
        _flag("monotonicity", "scenario_I_decreasing_in_p", in_p),
        _flag("monotonicity", "scenario_II_decreasing_in_c2", const_c2),
    ]


SUITES: Dict[str, Suite] = {
    "special_fn": suite_special_fn,
    "penalty": suite_penalty,
    "scenario_I": suite_scenario_I,
    "scenario_II": suite_scenario_II,
    "scenario_III": suite_scenario_III,
    "near_end": suite_near_end,
    "blowup": suite_blowup,
    "survival_objective": suite_survival_objective,
    "pricing": suite_pricing,
    "epsilon": suite_epsilon,
    "residuals": suite_residuals,
    "monotonicity": suite_monotonicity,
}

SUITE_ALIASES: Dict[str, str] = {"footnote15": "near_end", "prop23": "survival_objective"}


def run_suites(selector: str, seed: int = 0, meta: Optional[Dict[str, str]] = None) -> VerificationReport:
    names = list(SUITES) if selector == "all" else [name.strip() for name in selector.split(",") if name.strip()]
    names = list(dict.fromkeys(SUITE_ALIASES.get(name, name) for name in names))
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)} or 'all'")
    checks: List[CheckResult] = []
    for name in names:
        logger.info("running suite %s", name)
        try:
            checks.extend(SUITES[name](seed))
        except Exception as exc:  # a crashing suite is a failed suite
            logger.exception("suite %s raised", name)
            checks.append(_flag(name, "suite_completed", False, detail=f"{type(exc).__name__}: {exc}"))
    passed = all(check.passed for check in checks)
    return VerificationReport(suites=names, passed=passed, checks=checks, meta=dict(meta or {}))
