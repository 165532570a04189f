import math
from pathlib import Path

import pytest

from legalrisk.app.core.config_file import build_models, config_items, load_config, parse_config_text
from legalrisk.app.core.errors import ConfigError
from legalrisk.app.core.model import Aggregation

ROOT = Path(__file__).resolve().parents[3]
CONFIGS = ROOT / "data" / "configs"


def test_parse_config_text_strips_comments():
    entries = parse_config_text("# header\nbeta=0.3  # obscuring\n\np = inf\n")
    assert entries == {"beta": "0.3", "p": "inf"}


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("gamma=0.1\n")


def test_line_without_equals_is_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("beta 0.3\n")


def test_defaults_fill_missing_keys():
    regime, market = build_models({})
    assert (regime.beta, regime.eta, regime.alpha, regime.kappa, regime.p) == (0.0, 1.0, 1.0, 1.0, 1.0)
    assert regime.aggregation is Aggregation.SUM
    assert (market.horizon_t, market.mean_value, market.v, market.population_n) == (1.0, 0.0, 1.0, 1)
    assert market.sigma(0.7) == 1.0


def test_sigma_schedule_and_support():
    regime, market = build_models(
        {"sigma": "0:1.0,0.5:1.2", "support": "1:0.25,3:0.75", "p": "inf", "aggregation": "MAX"}
    )
    assert math.isinf(regime.p)
    assert regime.aggregation is Aggregation.MAX
    assert market.sigma(0.25) == 1.0
    assert market.sigma(0.75) == 1.2
    assert market.value_support == ((1.0, 0.25), (3.0, 0.75))


def test_bad_value_raises_config_error():
    with pytest.raises(ConfigError):
        build_models({"beta": "abc"})


def test_sigma_must_start_at_zero():
    with pytest.raises(ConfigError):
        build_models({"sigma": "0.1:1.0"})


def test_missing_file_raises_config_error(tmp_path: Path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_figure1_config_loads():
    regime, market = load_config(CONFIGS / "figure1.cfg")
    assert regime.c2 == pytest.approx(1.0)
    assert market.mean_value == pytest.approx(math.sqrt(math.e))
    assert market.v == 3.0


def test_config_items_reparse_to_same_models(tmp_path: Path):
    regime, market = load_config(CONFIGS / "pricing_two_point.cfg")
    text = "".join(f"{key}={value}\n" for key, value in config_items(regime, market).items())
    path = tmp_path / "resolved.cfg"
    path.write_text(text, encoding="utf-8")
    assert load_config(path) == (regime, market)
