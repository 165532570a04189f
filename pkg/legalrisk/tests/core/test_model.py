import math

import pytest

from legalrisk.app.core.errors import ValidityError
from legalrisk.app.core.model import (
    MarketConfig,
    RegulatoryRegime,
    ScenarioTag,
    classify_scenario,
    epsilon_rate_exponent,
    penalty_gap_exponent,
    stealth_index,
    validate_regime,
    value_variance,
)

SQRT_E = math.sqrt(math.e)


def _make_regime(**changes) -> RegulatoryRegime:
    base = RegulatoryRegime(beta=0.3, eta=1.0, alpha=2.0, kappa=1.0, b=1.0, c=0.0, c1=1.0, p=2.0)
    return base.with_(**changes)


def _make_market(**changes) -> MarketConfig:
    return MarketConfig(horizon_t=1.0, mean_value=SQRT_E, v=3.0).with_(**changes)


def test_stealth_index_superlinear():
    assert stealth_index(_make_regime()) == pytest.approx(0.15)


def test_stealth_index_linear_penalty_equals_beta():
    assert stealth_index(_make_regime(alpha=1.0, beta=0.4)) == pytest.approx(0.4)


def test_stealth_index_zero_without_obscuring():
    assert stealth_index(_make_regime(beta=0.0)) == 0.0


def test_stealth_index_rejects_regime_without_limit():
    with pytest.raises(ValidityError):
        stealth_index(_make_regime(beta=1.0))


@pytest.mark.parametrize(
    "changes,expected",
    [
        ({"beta": 0.0}, ScenarioTag.NO_OBSCURING),
        ({"alpha": 1.0}, ScenarioTag.LINEAR_PENALTY),
        ({}, ScenarioTag.SUPERLINEAR_PENALTY),
    ],
)
def test_classify_scenario(changes, expected):
    assert classify_scenario(_make_regime(**changes)) is expected


def test_figure_parameters_validate_cleanly():
    assert validate_regime(_make_regime(), _make_market()) == []


def test_validate_regime_reports_every_violation():
    report = validate_regime(_make_regime(eta=0.5, kappa=0.0, p=0.5), _make_market(v=SQRT_E))
    assert "eta < 1" in report
    assert "kappa <= 0" in report
    assert "p < 1" in report
    assert "degenerate value: v == mean_value" in report


def test_validate_regime_checks_support_mean():
    market = _make_market(value_support=((1.0, 0.5), (2.0, 0.5)))
    assert "support mean != mean_value" in validate_regime(_make_regime(), market)


def test_sup_penalty_accepted():
    regime = _make_regime(p=math.inf)
    assert regime.sup_penalty
    assert validate_regime(regime, _make_market()) == []


def test_c2_is_kappa_b_c1():
    assert _make_regime(kappa=0.5, b=4.0, c1=1.5).c2 == pytest.approx(3.0)


def test_epsilon_rate_exponents():
    assert epsilon_rate_exponent(_make_regime(beta=0.0)) == pytest.approx(-0.5)
    # gamma = 0.15: max(-0.35, -0.15)
    assert epsilon_rate_exponent(_make_regime()) == pytest.approx(-0.15)
    assert epsilon_rate_exponent(_make_regime(alpha=1.0, beta=0.2)) == pytest.approx(-0.2)


def test_penalty_gap_exponent():
    assert penalty_gap_exponent(_make_regime(beta=0.0)) == 0.0
    assert penalty_gap_exponent(_make_regime(beta=0.5)) == pytest.approx(-0.25)


def test_value_variance_two_point():
    market = _make_market(value_support=((SQRT_E - 1.0, 0.5), (SQRT_E + 1.0, 0.5)))
    assert value_variance(market) == pytest.approx(1.0)
    assert value_variance(_make_market()) == 0.0


def test_market_delta_and_sign():
    market = _make_market(v=1.0)
    assert market.delta == pytest.approx(1.0 - SQRT_E)
    assert market.sign == -1.0
