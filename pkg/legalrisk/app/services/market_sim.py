"""Monte Carlo market: noise order flow, the insider's cumulative order, Cox-process prosecution
and realised payoffs, with either the limiting constant price or the finite-N pricing rule.

Paths are simulated in blocks of ``settings.path_block_size``; block ``k`` draws from
``default_rng(SeedSequence([seed, k]))`` so results do not depend on the worker count.
Prosecution time is the crossing of a unit exponential by the cumulative intensity, linearly
interpolated inside the crossing step.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, special

from legalrisk.app.core.errors import ConfigError
from legalrisk.app.core.model import MarketConfig, RegulatoryRegime, stealth_index, value_variance
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import StrategyPath
from legalrisk.app.services.penalty import additional_penalty, hazard_rate, penalty_rate, survival_weighted_objective
from legalrisk.app.services.records import SimulationRecord

logger = logging.getLogger(__name__)

LIMITING = "limiting"
FINITE_N = "finite_n"
GRID_TOL = 1e-12


@dataclass
class PathRecord:
    times: np.ndarray
    increments: np.ndarray
    noise_flow: np.ndarray
    theta: np.ndarray
    insider_order: np.ndarray
    aggregate: np.ndarray
    intensity: np.ndarray
    tau: Optional[float]
    price: np.ndarray
    value: float


@dataclass
class SimulationOutcome:
    tau: np.ndarray
    gross_profit: np.ndarray
    disgorgement: np.ndarray
    additional_penalty: np.ndarray
    net_payoff: np.ndarray
    survival: np.ndarray
    values: np.ndarray
    noise_terminal: Optional[np.ndarray]
    steps: int
    seed: int
    pricing: str
    truncated_at: Optional[float] = None
    paths: List[PathRecord] = field(default_factory=list)

    @property
    def num_paths(self) -> int:
        return int(self.net_payoff.size)

    @property
    def prosecuted(self) -> np.ndarray:
        return np.isfinite(self.tau)

    @property
    def mean_net_payoff(self) -> float:
        return float(self.net_payoff.mean())

    @property
    def stderr(self) -> float:
        if self.num_paths < 2:
            return 0.0
        return float(self.net_payoff.std(ddof=1) / math.sqrt(self.num_paths))

    @property
    def prosecution_frequency(self) -> float:
        return float(self.prosecuted.mean())

    @property
    def mean_survival(self) -> float:
        return float(self.survival.mean())


@dataclass(frozen=True)
class _Plan:
    """Per-value deterministic quantities on the time grid."""

    theta: np.ndarray
    order: np.ndarray
    intensity: np.ndarray
    criminal: np.ndarray


def _grid(market: MarketConfig, dt: Optional[float]) -> Tuple[np.ndarray, float]:
    horizon = market.horizon_t
    if dt is None:
        dt = horizon / settings.default_steps
    if not dt > 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > GRID_TOL * max(1.0, horizon):
        raise ConfigError(f"dt={dt} does not divide T={horizon}")
    return np.linspace(0.0, horizon, steps + 1), horizon / steps


def _sample_points(strategy: StrategyPath, times: np.ndarray, dt: float) -> np.ndarray:
    if strategy.singular_at_end:
        return np.minimum(times, strategy.horizon - dt)
    return times


def _plan(strategy: StrategyPath, times: np.ndarray, dt: float, regime: RegulatoryRegime, hazard_scale: float) -> _Plan:
    theta = np.asarray(strategy(_sample_points(strategy, times, dt)), dtype=float) * np.ones_like(times)
    order = integrate.cumulative_trapezoid(theta, times, initial=0.0)
    intensity = integrate.cumulative_trapezoid(hazard_rate(times, hazard_scale * theta, regime), times, initial=0.0)
    rate = penalty_rate(theta, regime)
    if regime.sup_penalty:
        criminal = np.maximum.accumulate(rate)
    else:
        criminal = integrate.cumulative_trapezoid(rate**regime.p, times, initial=0.0) ** (1.0 / regime.p)
    return _Plan(theta=theta, order=order, intensity=intensity, criminal=criminal)


def _crossing(intensity: np.ndarray, draws: np.ndarray, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``τ`` per path for a path-wise (rows) or shared (1-D) intensity; also the step index and fraction."""
    rows = np.broadcast_to(np.atleast_2d(intensity), (draws.size, times.size))
    if intensity.ndim == 1:
        index = np.searchsorted(intensity, draws, side="left")
    else:
        index = np.array([np.searchsorted(row, e, side="left") for row, e in zip(rows, draws)], dtype=int)
    hit = index < times.size
    k = np.clip(index, 1, times.size - 1)
    lo = rows[np.arange(draws.size), k - 1]
    hi = rows[np.arange(draws.size), k]
    frac = np.where(hit, (draws - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    dt = times[1] - times[0]
    tau = np.where(hit, times[k - 1] + frac * dt, np.inf)
    return tau, k, np.clip(frac, 0.0, 1.0)


def _at(values: np.ndarray, k: np.ndarray, frac: np.ndarray) -> np.ndarray:
    rows = np.broadcast_to(np.atleast_2d(values), (k.size, values.shape[-1]))
    idx = np.arange(k.size)
    return rows[idx, k - 1] + frac * (rows[idx, k] - rows[idx, k - 1])


def finite_N_pricing_path(
    market: MarketConfig,
    strategies: Mapping[float, StrategyPath],
    flow_increments: np.ndarray,
    times: np.ndarray,
    population_n: Optional[int] = None,
) -> np.ndarray:
    """Market maker's price ``Σ v·X^v·prob(v) / Σ X^v·prob(v)`` on the grid.

    ``strategies`` maps each support value to the insider's trading rate under that value;
    ``flow_increments`` are aggregate order increments ``dQ`` (one row per path). ``X^v`` is the
    exact discrete likelihood of the standardised flow under the drift implied by ``v``.
    """
    if not market.value_support:
        raise ConfigError("finite-N pricing needs a discrete value support")
    n = float(market.population_n if population_n is None else population_n)
    dt = times[1] - times[0]
    flow = np.atleast_2d(flow_increments)
    scale = math.sqrt(n) * np.asarray(market.sigma(times[:-1]), dtype=float)
    observed = flow / scale
    log_weights = []
    for value, prob in market.value_support:
        strategy = strategies[value]
        theta = np.asarray(strategy(_sample_points(strategy, times, dt)), dtype=float) * np.ones_like(times)
        drift = 0.5 * (theta[:-1] + theta[1:]) * dt / scale
        steps = (drift * observed - 0.5 * drift**2) / dt
        log_x = np.concatenate([np.zeros((flow.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)
        log_weights.append(log_x + (math.log(prob) if prob > 0 else -np.inf))
    stacked = np.stack(log_weights)
    weights = special.softmax(stacked, axis=0)
    values = np.array([value for value, _ in market.value_support])
    price = np.tensordot(values, weights, axes=(0, 0))
    return price[0] if np.ndim(flow_increments) == 1 else price


def _per_path(plans: Dict[float, _Plan], support: List[float], chosen: np.ndarray, name: str) -> np.ndarray:
    if len(support) == 1:
        return getattr(plans[support[0]], name)
    return np.stack([getattr(plans[v], name) for v in support])[chosen]


def _row(values: np.ndarray, index: int) -> np.ndarray:
    return values[index] if values.ndim == 2 else values


def _simulate_block(
    block: int,
    count: int,
    first_path: int,
    seed: int,
    market: MarketConfig,
    regime: RegulatoryRegime,
    plans: Dict[float, _Plan],
    strategies: Mapping[float, StrategyPath],
    times: np.ndarray,
    dt: float,
    pricing: str,
    need_noise: bool,
    keep_paths: int,
    disgorgement: bool,
) -> Dict[str, object]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
    draws = rng.exponential(size=count)
    support = list(plans)
    if pricing == FINITE_N:
        probs = np.array([prob for _, prob in market.value_support])
        chosen = rng.choice(len(support), size=count, p=probs / probs.sum())
    else:
        chosen = np.zeros(count, dtype=int)
    values = np.array(support)[chosen]
    noise_inc = None
    if need_noise:
        sigma = np.asarray(market.sigma(times[:-1]), dtype=float)
        noise_inc = math.sqrt(market.population_n) * sigma * rng.standard_normal((count, times.size - 1)) * math.sqrt(dt)

    theta, order, intensity, criminal = (_per_path(plans, support, chosen, name) for name in _Plan.__dataclass_fields__)
    tau, k, frac = _crossing(intensity, draws, times)
    prosecuted = np.isfinite(tau)

    # the insider stops trading at τ; the noise flow runs to T
    halted = np.where(times[None, :] < tau[:, None], order, _at(order, k, frac)[:, None])
    if pricing == FINITE_N:
        flow = noise_inc + np.diff(halted, axis=1)
        price = finite_N_pricing_path(market, strategies, flow, times)
    else:
        price = np.full((1, times.size), market.mean_value)
    edge = (values[:, None] - price) * theta
    profit = integrate.cumulative_trapezoid(edge, times, initial=0.0, axis=1)
    profit = np.broadcast_to(profit, (count, times.size))
    gross = np.where(prosecuted, _at(profit, k, frac), profit[:, -1])
    crim = np.where(prosecuted, _at(criminal, k, frac), 0.0)
    charge = np.where(prosecuted, additional_penalty(crim, regime.c * gross, regime), 0.0)
    clawback = np.where(prosecuted & disgorgement, gross, 0.0)
    net = gross - charge - clawback

    records: List[PathRecord] = []
    for local in range(max(0, min(count, keep_paths - first_path))):
        noise = np.zeros(times.size) if noise_inc is None else np.concatenate([[0.0], np.cumsum(noise_inc[local])])
        records.append(
            PathRecord(
                times=times,
                increments=np.zeros(times.size - 1) if noise_inc is None else noise_inc[local],
                noise_flow=noise,
                theta=_row(theta, local),
                insider_order=halted[local],
                aggregate=noise + halted[local],
                intensity=_row(intensity, local),
                tau=float(tau[local]) if prosecuted[local] else None,
                price=price[local] if price.shape[0] == count else price[0],
                value=float(values[local]),
            )
        )
    return {
        "tau": tau,
        "gross": gross,
        "clawback": clawback,
        "charge": charge,
        "net": net,
        "survival": np.broadcast_to(np.exp(-np.atleast_2d(intensity)[:, -1]), (count,)).copy(),
        "values": values,
        "noise_terminal": None if noise_inc is None else noise_inc.sum(axis=1),
        "records": records,
    }


def simulate_paths(
    market: MarketConfig,
    strategy: Optional[StrategyPath],
    regime: RegulatoryRegime,
    num_paths: int,
    dt: Optional[float] = None,
    seed: int = 0,
    pricing: str = LIMITING,
    strategies: Optional[Mapping[float, StrategyPath]] = None,
    keep_paths: int = 0,
    disgorgement: bool = False,
    record_noise: bool = False,
) -> SimulationOutcome:
    """Simulate the market with the insider trading ``strategy`` (limiting mode) or the
    per-value ``strategies`` (finite-N pricing mode)."""
    if num_paths < 1:
        raise ConfigError("num_paths must be >= 1")
    if pricing not in (LIMITING, FINITE_N):
        raise ConfigError(f"unknown pricing mode {pricing!r}")
    times, dt = _grid(market, dt)
    hazard_scale = float(market.population_n) ** (-regime.beta)
    if pricing == FINITE_N:
        if not market.value_support or strategies is None:
            raise ConfigError("finite-N pricing needs value_support and per-value strategies")
        missing = [v for v, _ in market.value_support if v not in strategies]
        if missing:
            raise ConfigError(f"no strategy for support values {missing}")
        active = dict(strategies)
    else:
        if strategy is None:
            raise ConfigError("limiting mode needs a strategy")
        active = {market.v: strategy}
    plans = {value: _plan(s, times, dt, regime, hazard_scale) for value, s in active.items()}
    if pricing == FINITE_N:
        plans = {value: plans[value] for value, _ in market.value_support}
    truncated_at = None
    if any(s.singular_at_end for s in active.values()):
        truncated_at = market.horizon_t - dt
        logger.info("strategy blows up at T; sampled at min(t, %.12g)", truncated_at)

    need_noise = pricing == FINITE_N or record_noise or keep_paths > 0
    block_size = max(1, settings.path_block_size)
    blocks = [(b, min(block_size, num_paths - b * block_size)) for b in range(math.ceil(num_paths / block_size))]

    def run(item: Tuple[int, int]) -> Dict[str, object]:
        block, count = item
        return _simulate_block(
            block, count, block * block_size, seed, market, regime, plans, active, times, dt,
            pricing, need_noise, keep_paths, disgorgement,
        )

    if settings.max_workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(item) for item in blocks]

    gather = lambda key: np.concatenate([r[key] for r in results])
    outcome = SimulationOutcome(
        tau=gather("tau"),
        gross_profit=gather("gross"),
        disgorgement=gather("clawback"),
        additional_penalty=gather("charge"),
        net_payoff=gather("net"),
        survival=gather("survival"),
        values=gather("values"),
        noise_terminal=gather("noise_terminal") if need_noise else None,
        steps=times.size - 1,
        seed=seed,
        pricing=pricing,
        truncated_at=truncated_at,
        paths=[record for r in results for record in r["records"]],
    )
    logger.info(
        "simulated paths=%d steps=%d pricing=%s mean=%.8g stderr=%.3g prosecuted=%.5f",
        outcome.num_paths, outcome.steps, pricing, outcome.mean_net_payoff, outcome.stderr,
        outcome.prosecution_frequency,
    )
    return outcome


def mc_objective_estimate(
    market: MarketConfig,
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    num_paths: int,
    seed: int = 0,
    dt: Optional[float] = None,
    disgorgement: bool = False,
) -> Tuple[float, float]:
    outcome = simulate_paths(market, strategy, regime, num_paths, dt=dt, seed=seed, disgorgement=disgorgement)
    return outcome.mean_net_payoff, outcome.stderr


def deterministic_objective(
    market: MarketConfig,
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    disgorgement: bool = False,
) -> float:
    """``∫e^{-Λ}θΔ dt - ∫λe^{-Λ}Π_a dt`` at the constant price, hazard argument ``N^{-β}θ``."""
    return survival_weighted_objective(
        strategy,
        regime,
        market.delta,
        hazard_scale=float(market.population_n) ** (-regime.beta),
        disgorgement=disgorgement,
    )


def nt_wealth_estimate(
    market: MarketConfig,
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    num_paths: int,
    seed: int = 0,
    population_n: Optional[int] = None,
    dt: Optional[float] = None,
) -> Dict[str, float]:
    """``N^{-1/2}`` times the noise traders' terminal wealth ``(E[V] - V)·Z_T`` at the constant price."""
    n = market.population_n if population_n is None else int(population_n)
    scaled_market = market.with_(population_n=n)
    scale = float(n) ** stealth_index(regime)
    outcome = simulate_paths(
        scaled_market, strategy.scaled(scale), regime, num_paths, dt=dt, seed=seed, record_noise=True
    )
    values = outcome.values
    if market.value_support:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2**31]))
        support = np.array([v for v, _ in market.value_support])
        probs = np.array([p for _, p in market.value_support])
        values = support[rng.choice(support.size, size=outcome.num_paths, p=probs / probs.sum())]
    wealth = (market.mean_value - values) * outcome.noise_terminal / math.sqrt(n)
    stderr = float(wealth.std(ddof=1) / math.sqrt(wealth.size)) if wealth.size > 1 else 0.0
    return {"mean": float(wealth.mean()), "stderr": stderr, "value_variance": value_variance(market)}


def simulation_record(
    outcome: SimulationOutcome,
    deterministic: Optional[float] = None,
    meta: Optional[Dict[str, str]] = None,
) -> SimulationRecord:
    return SimulationRecord(
        num_paths=outcome.num_paths,
        steps=outcome.steps,
        seed=outcome.seed,
        pricing=outcome.pricing,
        mean_net_payoff=outcome.mean_net_payoff,
        stderr=outcome.stderr,
        prosecution_frequency=outcome.prosecution_frequency,
        mean_survival=outcome.mean_survival,
        truncated_at=outcome.truncated_at,
        deterministic_objective=deterministic,
        meta=dict(meta or {}),
    )


def path_frame(record: PathRecord) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "t": record.times,
            "noise_flow": record.noise_flow,
            "theta": record.theta,
            "Q": record.aggregate,
            "Lambda": record.intensity,
            "price": record.price,
        }
    )
