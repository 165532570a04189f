import math

import numpy as np
import pytest

from legalrisk.app.core.errors import DivisionError, FitError, ValidityError
from legalrisk.app.core.model import Aggregation, MarketConfig, RegulatoryRegime, ScenarioTag
from legalrisk.app.core.strategy import ClosedFormStrategy, PiecewiseConstantStrategy, constant_strategy
from legalrisk.app.services import equilibrium
from legalrisk.app.services.penalty import survival_weighted_objective

SQRT_E = math.sqrt(math.e)
MARKET = MarketConfig(horizon_t=1.0, mean_value=SQRT_E, v=3.0)
DELTA = MARKET.delta


def _make_regime(**changes) -> RegulatoryRegime:
    base = RegulatoryRegime(beta=0.3, eta=1.0, alpha=2.0, kappa=1.0, b=1.0, c=0.0, c1=1.0, p=2.0)
    return base.with_(**changes)


@pytest.fixture(scope="module")
def scenario_one():
    return equilibrium.solve_scenario_I(_make_regime(), MARKET)


def test_scenario_I_initial_intensity(scenario_one):
    expected = (DELTA**6 / 15.0) ** 0.25 / DELTA
    assert scenario_one.strategy(0.0) == pytest.approx(expected, rel=1e-10)
    assert scenario_one.strategy(0.0) == pytest.approx(0.5907, abs=1e-4)
    assert scenario_one.scenario is ScenarioTag.SUPERLINEAR_PENALTY
    assert scenario_one.gamma == pytest.approx(0.15)
    assert scenario_one.limiting_price == pytest.approx(SQRT_E)


def test_scenario_I_increasing_and_explodes(scenario_one):
    times = np.linspace(0.0, 1.0 - 1e-6, 200)
    values = scenario_one.strategy(times)
    assert np.all(np.diff(values) > 0)
    assert values[-1] > 10.0 * values[0]
    assert scenario_one.strategy.singular_at_end


def test_scenario_I_blowup_slope(scenario_one):
    assert scenario_one.diagnostics["blowup_exponent"] == pytest.approx(-0.2, abs=0.01)


def test_scenario_I_blowup_constant_matches_tail(scenario_one):
    k_inf = scenario_one.diagnostics["K_inf"]
    ttg = 1e-8
    assert abs(scenario_one.strategy(1.0 - ttg)) == pytest.approx(k_inf * ttg ** (-0.2), rel=1e-2)


def test_scenario_I_objective_is_K_times_T(scenario_one):
    value = equilibrium.limiting_objective(scenario_one.strategy, ScenarioTag.SUPERLINEAR_PENALTY, _make_regime(), MARKET)
    assert scenario_one.objective == pytest.approx(scenario_one.diagnostics["K"])
    assert value == pytest.approx(scenario_one.objective, rel=1e-5)


@pytest.mark.parametrize("factor", [0.9, 1.1])
def test_scenario_I_scaled_strategy_does_worse(scenario_one, factor):
    regime = _make_regime()
    base = equilibrium.limiting_objective(scenario_one.strategy, ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET)
    scaled = equilibrium.limiting_objective(
        scenario_one.strategy.scaled(factor), ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET
    )
    assert math.isfinite(scaled)
    assert scaled < base


def test_scenario_I_first_order_residual(scenario_one):
    profile = equilibrium.first_order_residual(scenario_one)
    assert profile.max_deviation < 1e-6


def test_scenario_I_sign_follows_value():
    solution = equilibrium.solve_scenario_I(_make_regime(), MARKET.with_(v=2.0 * SQRT_E - 3.0))
    assert solution.strategy(0.5) < 0.0


def test_scenario_I_rejects_sup_penalty():
    with pytest.raises(ValidityError) as info:
        equilibrium.solve_scenario_I(_make_regime(p=math.inf), MARKET)
    assert "p = inf has no closed form" in info.value.report


def test_scenario_I_rejects_degenerate_value():
    with pytest.raises(ValidityError) as info:
        equilibrium.solve_scenario_I(_make_regime(), MARKET.with_(v=SQRT_E))
    assert "degenerate value: v == mean_value" in info.value.report


def test_scenario_I_decreasing_in_c2_and_p():
    times = np.linspace(0.0, 0.9, 5)
    base = equilibrium.solve_scenario_I(_make_regime(), MARKET).strategy(times)
    more_c2 = equilibrium.solve_scenario_I(_make_regime(b=2.0), MARKET).strategy(times)
    more_p = equilibrium.solve_scenario_I(_make_regime(p=3.0), MARKET).strategy(times)
    assert np.all(more_c2 < base)
    assert np.all(more_p < base)


def test_scenario_II_constant():
    regime = _make_regime(eta=4.0)
    solution = equilibrium.solve_scenario_II(regime, MARKET)
    theta = solution.diagnostics["theta_const"]
    assert theta == pytest.approx((DELTA / 4.0) ** 0.2, rel=1e-12)
    assert theta == pytest.approx(0.805, abs=1e-3)
    assert solution.strategy(0.1) == solution.strategy(0.9) == pytest.approx(theta)
    assert abs(solution.diagnostics["foc_residual"]) < 1e-12
    assert equilibrium.first_order_residual(solution).max_deviation < 1e-12


def test_scenario_II_objective_matches_evaluator():
    regime = _make_regime(eta=4.0)
    solution = equilibrium.solve_scenario_II(regime, MARKET)
    value = equilibrium.limiting_objective(solution.strategy, ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET)
    assert value == pytest.approx(solution.objective, rel=1e-6)


def test_scenario_II_is_locally_optimal():
    regime = _make_regime(eta=4.0)
    solution = equilibrium.solve_scenario_II(regime, MARKET)
    theta = solution.diagnostics["theta_const"]
    for factor in (0.95, 1.05):
        bumped = constant_strategy(factor * theta, 1.0)
        value = equilibrium.limiting_objective(bumped, ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET)
        assert value < solution.objective


def test_scenario_II_requires_tied_eta():
    with pytest.raises(ValidityError):
        equilibrium.solve_scenario_II(_make_regime(eta=3.0), MARKET)


def test_scenario_III_degenerate_x_bar():
    regime = _make_regime(alpha=1.0, b=2.0, c=1.0, p=1.0)
    solution = equilibrium.solve_scenario_III_degenerate(regime, MARKET)
    assert solution.diagnostics["x_bar"] == pytest.approx(DELTA / (2.0 + DELTA), rel=1e-12)
    assert solution.diagnostics["x_bar"] == pytest.approx(0.40321, abs=1e-5)
    assert solution.diagnostics["transversality"] == pytest.approx(0.0, abs=1e-12)
    assert solution.scenario is ScenarioTag.LINEAR_PENALTY
    assert solution.gamma == pytest.approx(0.3)


def test_degenerate_family_members_share_objective():
    regime = _make_regime(alpha=1.0, b=2.0, c=1.0, p=1.0)
    solution = equilibrium.solve_scenario_III_degenerate(regime, MARKET)
    x_bar = solution.family.x_bar
    front = PiecewiseConstantStrategy([0.0, 0.5, 1.0], [1.5 * x_bar, 0.5 * x_bar])
    assert solution.family.is_member(front)
    assert not solution.family.is_member(constant_strategy(x_bar * 1.1, 1.0))
    flat = equilibrium.limiting_objective(solution.strategy, ScenarioTag.LINEAR_PENALTY, regime, MARKET)
    shifted = equilibrium.limiting_objective(front, ScenarioTag.LINEAR_PENALTY, regime, MARKET)
    assert flat == pytest.approx(solution.objective, abs=1e-8)
    assert shifted == pytest.approx(flat, abs=1e-8)


def test_degenerate_objective_matches_direct_integral():
    from scipy import integrate

    x_bar, k1, kappa = 0.4, 2.0, 1.5
    direct, _ = integrate.quad(lambda x: math.exp(-kappa * x) * (DELTA - k1 * x), 0.0, x_bar)
    assert equilibrium.degenerate_objective(x_bar, k1, kappa, DELTA) == pytest.approx(direct, rel=1e-12)


def test_degenerate_without_penalty_raises_division_error():
    with pytest.raises(DivisionError):
        equilibrium.solve_scenario_III_degenerate(_make_regime(alpha=1.0, b=0.0, c=0.0, p=1.0), MARKET)


def test_solve_dispatches_on_exponents():
    assert equilibrium.solve(_make_regime(), MARKET).solver == "scenario_I"
    assert equilibrium.solve(_make_regime(eta=4.0), MARKET).solver == "scenario_II"
    assert equilibrium.solve(_make_regime(alpha=1.0, b=2.0, c=1.0, p=1.0), MARKET).solver == "scenario_III_degenerate"
    with pytest.raises(ValidityError):
        equilibrium.solve(_make_regime(eta=1.5), MARKET)
    with pytest.raises(ValidityError):
        equilibrium.solve(_make_regime(), MARKET, scenario="IV")


def test_closed_form_kind():
    assert equilibrium.closed_form_kind(_make_regime()) == "I"
    assert equilibrium.closed_form_kind(_make_regime(eta=4.0)) == "II"
    assert equilibrium.closed_form_kind(_make_regime(alpha=1.0)) == "III"


def test_no_obscuring_keeps_solver_form(caplog):
    with caplog.at_level("WARNING"):
        solution = equilibrium.solve_scenario_I(_make_regime(beta=0.0), MARKET)
    assert solution.scenario is ScenarioTag.NO_OBSCURING
    assert solution.objective_form is ScenarioTag.SUPERLINEAR_PENALTY
    assert "beta=0" in caplog.text


def test_superlinear_objective_rejects_product_aggregation():
    regime = _make_regime(aggregation=Aggregation.PRODUCT)
    with pytest.raises(ValidityError):
        equilibrium.limiting_objective(constant_strategy(1.0, 1.0), ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET)


def test_superlinear_sup_objective():
    regime = _make_regime(p=math.inf, b=1.0)
    value = equilibrium.limiting_objective(constant_strategy(1.0, 1.0), ScenarioTag.SUPERLINEAR_PENALTY, regime, MARKET)
    # ∫ θΔ - C₂θ·sup θ^α with θ = 1
    assert value == pytest.approx(DELTA - 1.0, rel=1e-8)


def test_finite_N_objective_single_trader_is_survival_objective():
    regime = _make_regime(alpha=1.0, b=0.5, c=0.2, p=1.0)
    strategy = constant_strategy(0.4, 1.0)
    direct = survival_weighted_objective(strategy, regime, DELTA)
    assert equilibrium.finite_N_scaled_objective(strategy, regime, MARKET, 1) == pytest.approx(direct, rel=1e-10)


def test_linear_limit_equals_finite_N_objective():
    regime = _make_regime(alpha=1.0, b=0.5, c=0.2, p=1.0)
    strategy = constant_strategy(0.4, 1.0)
    limit = equilibrium.limiting_objective(strategy, ScenarioTag.LINEAR_PENALTY, regime, MARKET)
    scaled = equilibrium.finite_N_scaled_objective(strategy, regime, MARKET, 10_000)
    assert scaled == pytest.approx(limit, rel=1e-8)


def test_blowup_rate_fit_on_power_law():
    strategy = ClosedFormStrategy(lambda t: (1.0 - t) ** -0.4, 1.0, singular_at_end=True)
    assert equilibrium.blowup_rate_fit(strategy) == pytest.approx(-0.4, abs=1e-9)


def test_blowup_rate_fit_needs_valid_window():
    strategy = constant_strategy(1.0, 1.0)
    with pytest.raises(FitError):
        equilibrium.blowup_rate_fit(strategy, window=(1e-6, 1e-3))
    with pytest.raises(FitError):
        equilibrium.blowup_rate_fit(ClosedFormStrategy(lambda t: np.zeros_like(t), 1.0))


def test_sample_strategy_and_record(scenario_one):
    frame = equilibrium.sample_strategy(scenario_one, 8)
    assert list(frame.columns) == ["t", "theta"]
    assert frame["t"].tolist() == pytest.approx([k / 8.0 for k in range(8)])
    record = equilibrium.solution_record(scenario_one, {"seed": "0"})
    assert record.scenario == "SuperlinearPenalty"
    assert record.solver == "scenario_I"
    assert record.diagnostics["K"] == pytest.approx(scenario_one.objective)
    assert record.meta == {"seed": "0"}
