"""Flat ``key=value`` run configs.

Example::

    # Figure-1 base point
    beta=0.3
    eta=1
    alpha=2
    p=2
    b=1
    T=1
    v=3
    mean_value=1.6487212707001282
    sigma=0:1.0,0.5:1.2
    support=1:0.5,2.2974425414002564:0.5
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Iterable, Tuple

from legalrisk.app.core.errors import ConfigError
from legalrisk.app.core.model import Aggregation, MarketConfig, RegulatoryRegime, SigmaSchedule

REGIME_KEYS = {"beta", "eta", "alpha", "kappa", "b", "c", "c1", "p", "aggregation"}
MARKET_KEYS = {"T", "mean_value", "v", "sigma", "N", "support"}


def parse_config_text(text: str) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in REGIME_KEYS | MARKET_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        entries[key] = value
    return entries


def build_models(entries: Dict[str, str]) -> Tuple[RegulatoryRegime, MarketConfig]:
    try:
        regime = RegulatoryRegime(
            beta=_float(entries.get("beta", "0")),
            eta=_float(entries.get("eta", "1")),
            alpha=_float(entries.get("alpha", "1")),
            kappa=_float(entries.get("kappa", "1")),
            b=_float(entries.get("b", "0")),
            c=_float(entries.get("c", "0")),
            c1=_float(entries.get("c1", "1")),
            p=_float(entries.get("p", "1")),
            aggregation=Aggregation(entries.get("aggregation", "sum").lower()),
        )
        market = MarketConfig(
            horizon_t=_float(entries.get("T", "1")),
            mean_value=_float(entries.get("mean_value", "0")),
            v=_float(entries.get("v", "1")),
            sigma=_parse_sigma(entries.get("sigma", "1")),
            population_n=int(entries.get("N", "1")),
            value_support=tuple(_parse_pairs(entries.get("support", ""))),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return regime, market


def load_config(path: str | Path) -> Tuple[RegulatoryRegime, MarketConfig]:
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"unable to read config {config_path}: {exc}") from exc
    return build_models(parse_config_text(text))


def config_items(regime: RegulatoryRegime, market: MarketConfig) -> Dict[str, str]:
    """Resolved config as flat strings, in the same schema ``parse_config_text`` reads."""
    sigma = market.sigma
    if len(sigma.values) == 1:
        sigma_text = repr(sigma.values[0])
    else:
        sigma_text = ",".join(f"{k!r}:{v!r}" for k, v in zip(sigma.knots, sigma.values))
    return {
        "beta": repr(regime.beta),
        "eta": repr(regime.eta),
        "alpha": repr(regime.alpha),
        "kappa": repr(regime.kappa),
        "b": repr(regime.b),
        "c": repr(regime.c),
        "c1": repr(regime.c1),
        "p": "inf" if math.isinf(regime.p) else repr(regime.p),
        "aggregation": regime.aggregation.value,
        "T": repr(market.horizon_t),
        "mean_value": repr(market.mean_value),
        "v": repr(market.v),
        "sigma": sigma_text,
        "N": str(market.population_n),
        "support": ",".join(f"{v!r}:{p!r}" for v, p in market.value_support),
    }


def _float(value: str) -> float:
    text = value.strip().lower()
    if text in {"inf", "+inf", "infinity"}:
        return math.inf
    if text in {"sqrt(e)", "sqrte"}:
        return math.sqrt(math.e)
    return float(text)


def _parse_pairs(value: str) -> Iterable[Tuple[float, float]]:
    for chunk in filter(None, (part.strip() for part in value.split(","))):
        left, _, right = chunk.partition(":")
        if not right:
            raise ValueError(f"expected a:b pair, got {chunk!r}")
        yield _float(left), _float(right)


def _parse_sigma(value: str) -> SigmaSchedule:
    if ":" not in value:
        return SigmaSchedule.constant(_float(value))
    pairs = sorted(_parse_pairs(value))
    knots = tuple(t for t, _ in pairs)
    if knots[0] != 0.0:
        raise ValueError("sigma schedule must start at t=0")
    return SigmaSchedule(knots, tuple(v for _, v in pairs))
