import math

import numpy as np
import pytest

from legalrisk.app.core.errors import DomainError, QuadratureError
from legalrisk.app.core.model import Aggregation, RegulatoryRegime
from legalrisk.app.core.strategy import ClosedFormStrategy, PiecewiseConstantStrategy, constant_strategy
from legalrisk.app.services.penalty import (
    additional_penalty,
    aggregate,
    criminal_penalty,
    criminal_penalty_lp,
    criminal_penalty_sup,
    cumulative_intensity,
    hazard_rate,
    integrate_state,
    penalty_rate,
    running_state,
    running_sup_profile,
    sup_penalty_convergence,
    survival_weighted_objective,
    total_penalty,
)


def _make_regime(**changes) -> RegulatoryRegime:
    base = RegulatoryRegime(beta=0.0, eta=1.0, alpha=2.0, kappa=1.0, b=1.0, c=0.0, c1=1.0, p=2.0)
    return base.with_(**changes)


def _make_step() -> PiecewiseConstantStrategy:
    return PiecewiseConstantStrategy([0.0, 0.5, 1.0], [1.0, 3.0])


def test_hazard_and_penalty_rates_use_absolute_intensity():
    regime = _make_regime(kappa=2.0, eta=2.0, b=0.5, alpha=3.0)
    assert hazard_rate(0.0, -1.5, regime) == pytest.approx(4.5)
    assert penalty_rate(-2.0, regime) == pytest.approx(4.0)


@pytest.mark.parametrize(
    "kind,expected",
    [(Aggregation.SUM, 5.0), (Aggregation.PRODUCT, 6.0), (Aggregation.MAX, 3.0), ("sum", 5.0)],
)
def test_aggregate(kind, expected):
    assert aggregate(kind, 2.0, 3.0) == pytest.approx(expected)


def test_aggregate_ignores_negative_civil_profit():
    assert aggregate(Aggregation.SUM, 2.0, -3.0) == pytest.approx(2.0)
    assert aggregate(Aggregation.MAX, 2.0, -3.0) == pytest.approx(2.0)


def test_additional_penalty_scales_by_c1():
    assert additional_penalty(1.0, 2.0, _make_regime(c1=2.5)) == pytest.approx(7.5)


def test_cumulative_intensity_constant_strategy():
    regime = _make_regime(eta=2.0)
    strategy = constant_strategy(2.0, 1.0)
    assert cumulative_intensity(strategy, 0.5, 1.0, regime) == pytest.approx(2.0, rel=1e-10)
    assert cumulative_intensity(strategy, 0.5, 0.5, regime) == pytest.approx(0.5, rel=1e-10)
    assert cumulative_intensity(strategy, 0.0, 1.0, regime) == 0.0


def test_cumulative_intensity_outside_horizon():
    with pytest.raises(DomainError):
        cumulative_intensity(constant_strategy(1.0, 1.0), 1.5, 1.0, _make_regime())


def test_criminal_penalty_lp_constant():
    # (∫ (θ²)² dt)^{1/2} with θ = 1
    assert criminal_penalty_lp(constant_strategy(1.0, 1.0), 0.25, _make_regime()) == pytest.approx(0.5)


def test_criminal_penalty_lp_rejects_sup_regime():
    with pytest.raises(DomainError):
        criminal_penalty_lp(constant_strategy(1.0, 1.0), 0.5, _make_regime(p=math.inf))


def test_criminal_penalty_sup_tracks_running_max():
    regime = _make_regime(p=math.inf)
    assert criminal_penalty_sup(_make_step(), 0.4, regime) == pytest.approx(1.0)
    assert criminal_penalty_sup(_make_step(), 0.75, regime) == pytest.approx(9.0)
    assert criminal_penalty(_make_step(), 0.75, regime) == pytest.approx(9.0)


def test_criminal_penalty_sup_refines_interior_peak():
    strategy = ClosedFormStrategy(lambda t: 1.0 - (t - 0.3333333) ** 2, 1.0)
    value = criminal_penalty_sup(strategy, 1.0, _make_regime(p=math.inf, alpha=1.0))
    assert value == pytest.approx(1.0, abs=1e-12)


def test_total_penalty_constant_price():
    regime = _make_regime(c=0.5, b=0.0)
    breakdown = total_penalty(constant_strategy(1.0, 1.0), lambda s: 1.0, 3.0, 0.5, regime)
    assert breakdown.disgorgement == pytest.approx(1.0)
    assert breakdown.civil == pytest.approx(0.5)
    assert breakdown.criminal == 0.0
    assert breakdown.total == pytest.approx(1.5)


def test_total_penalty_reports_losing_trades_without_clawback():
    breakdown = total_penalty(constant_strategy(1.0, 1.0), lambda s: 3.0, 1.0, 0.5, _make_regime())
    assert breakdown.disgorgement == 0.0
    assert breakdown.criminal == pytest.approx(math.sqrt(0.5))
    assert breakdown.total == pytest.approx(-1.0 + math.sqrt(0.5))


def test_total_penalty_after_horizon_is_zero():
    breakdown = total_penalty(constant_strategy(1.0, 1.0), lambda s: 0.0, 1.0, math.inf, _make_regime())
    assert breakdown.total == 0.0


def test_running_sup_profile():
    profile = running_sup_profile(_make_step(), _make_regime())
    assert profile(0.25) == pytest.approx(1.0)
    assert profile(0.75) == pytest.approx(9.0)


def test_sup_penalty_convergence_constant_gap():
    table = sup_penalty_convergence(constant_strategy(1.0, 1.0), _make_regime(), ps=(1, 2, 4, 8))
    lp = np.array(table["lp_integral"])
    expected = np.array([p / (p + 1.0) for p in table["p"]])
    np.testing.assert_allclose(lp, expected, atol=1e-4)
    assert np.all(np.diff(lp) > 0)
    assert table["sup_integral"][0] == pytest.approx(1.0)


def test_objective_unit_benchmark():
    regime = _make_regime(b=0.0)
    value = survival_weighted_objective(constant_strategy(1.0, 1.0), regime, 1.0)
    assert value == pytest.approx(1.0 - math.exp(-1.0), rel=1e-9)


def test_objective_hazard_scale():
    regime = _make_regime(b=0.0)
    value = survival_weighted_objective(constant_strategy(1.0, 1.0), regime, 1.0, hazard_scale=0.5)
    assert value == pytest.approx(2.0 * (1.0 - math.exp(-0.5)), rel=1e-9)


def test_objective_with_disgorgement():
    regime = _make_regime(b=0.0)
    value = survival_weighted_objective(constant_strategy(1.0, 1.0), regime, 1.0, disgorgement=True)
    assert value == pytest.approx(math.exp(-1.0), rel=1e-9)


def test_objective_penalties_lower_value():
    strategy = constant_strategy(1.0, 1.0)
    free = survival_weighted_objective(strategy, _make_regime(b=0.0), 1.0)
    charged = survival_weighted_objective(strategy, _make_regime(b=1.0, c=0.5), 1.0)
    capped = survival_weighted_objective(strategy, _make_regime(b=1.0, p=math.inf), 1.0)
    assert charged < free
    assert capped < free


def test_integrate_state_piecewise():
    state = integrate_state(_make_step(), lambda t, theta, y: np.array([theta]), n_states=1)
    assert state[0] == pytest.approx(2.0, rel=1e-10)


def test_singular_strategy_must_stop_before_end():
    strategy = ClosedFormStrategy(lambda t: 1.0 / np.sqrt(1.0 - t), 1.0, singular_at_end=True)
    with pytest.raises(QuadratureError):
        criminal_penalty_lp(strategy, 1.0, _make_regime())


def test_running_state_tracks_intensity_penalty_and_inventory():
    state = running_state(_make_step(), _make_regime())
    assert state == pytest.approx([2.0, 41.0, 2.0], rel=1e-9)
    halfway = running_state(_make_step(), _make_regime(), t_end=0.5)
    assert halfway == pytest.approx([0.5, 0.5, 0.5], rel=1e-9)


def test_running_state_hazard_scale_and_sup_penalty():
    state = running_state(_make_step(), _make_regime(p=math.inf), hazard_scale=0.5)
    assert state[0] == pytest.approx(1.0, rel=1e-9)
    assert state[1] == 0.0


def test_running_state_integrates_through_blowup_at_horizon():
    strategy = ClosedFormStrategy(lambda t: 1.0 / np.sqrt(1.0 - t), 1.0, singular_at_end=True)
    state = running_state(strategy, _make_regime(alpha=1.0, p=1.0))
    np.testing.assert_allclose(state, [2.0, 2.0, 2.0], rtol=1e-6)


def test_objective_finite_for_strategy_blowing_up_at_horizon():
    strategy = ClosedFormStrategy(lambda t: (1.0 - t) ** -0.2, 1.0, singular_at_end=True)
    value = survival_weighted_objective(strategy, _make_regime(), 1.0)
    assert math.isfinite(value)
