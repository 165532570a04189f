"""Hazard, criminal/civil penalties and the survival-weighted objective shared by the solvers
and the simulator."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from legalrisk.app.core.errors import DomainError, QuadratureError
from legalrisk.app.core.model import Aggregation, ArrayLike, RegulatoryRegime
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import StrategyPath
from legalrisk.app.numerics.special_fn import integrate_segments

logger = logging.getLogger(__name__)

SUP_SCAN_POINTS = 4097
PROFILE_POINTS = 20001
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
TAIL_RTOL = 1e-8


@dataclass(frozen=True)
class PenaltyBreakdown:
    disgorgement: float = 0.0
    criminal: float = 0.0
    civil: float = 0.0
    total: float = 0.0


def hazard_rate(t: ArrayLike, iota: ArrayLike, regime: RegulatoryRegime) -> ArrayLike:
    return regime.kappa * np.abs(iota) ** regime.eta


def penalty_rate(iota: ArrayLike, regime: RegulatoryRegime) -> ArrayLike:
    return regime.b * np.abs(iota) ** regime.alpha


def aggregate(kind: Aggregation | str, crim: ArrayLike, civil: ArrayLike) -> ArrayLike:
    kind = Aggregation(kind)
    civil_part = np.maximum(civil, 0.0)
    if kind is Aggregation.SUM:
        return crim + civil_part
    if kind is Aggregation.PRODUCT:
        return crim * civil_part
    return np.maximum(np.maximum(crim, civil), 0.0)


def additional_penalty(crim: ArrayLike, civil: ArrayLike, regime: RegulatoryRegime) -> ArrayLike:
    """Π_a = C₁·W(Π₀, c·profit)."""
    return regime.c1 * aggregate(regime.aggregation, crim, civil)


def _check_horizon(strategy: StrategyPath, t: float) -> None:
    if t < 0 or t > strategy.horizon * (1.0 + 1e-12):
        raise DomainError(f"time {t} outside [0, {strategy.horizon}]")


def _finite_segments(strategy: StrategyPath, t: float):
    segments = [(a, b) for a, b in strategy.segments(t) if b > a]
    if strategy.singular_at_end and t >= strategy.horizon:
        raise QuadratureError("strategy blows up at T; exclude the endpoint")
    return segments


def cumulative_intensity(
    strategy: StrategyPath, t: float, n_scale: float, regime: RegulatoryRegime
) -> float:
    _check_horizon(strategy, t)
    if t == 0.0:
        return 0.0
    integrand = lambda s: float(hazard_rate(s, n_scale * strategy(s), regime))
    return integrate_segments(integrand, _finite_segments(strategy, t))


def criminal_penalty_lp(strategy: StrategyPath, tau: float, regime: RegulatoryRegime) -> float:
    if regime.sup_penalty:
        raise DomainError("p = inf: use criminal_penalty_sup")
    _check_horizon(strategy, tau)
    if tau == 0.0 or regime.b == 0.0:
        return 0.0
    integrand = lambda s: float(penalty_rate(strategy(s), regime)) ** regime.p
    total = integrate_segments(integrand, _finite_segments(strategy, tau))
    return max(total, 0.0) ** (1.0 / regime.p)


def criminal_penalty_sup(strategy: StrategyPath, tau: float, regime: RegulatoryRegime) -> float:
    _check_horizon(strategy, tau)
    grid = np.union1d(np.linspace(0.0, tau, SUP_SCAN_POINTS), [b for b in strategy.breakpoints if b <= tau])
    values = np.abs(strategy(grid))
    if not np.all(np.isfinite(values)):
        raise DomainError("criminal_penalty_sup needs a bounded strategy on [0, tau]")
    k = int(np.argmax(values))
    best = float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        refined = optimize.minimize_scalar(
            lambda s: -abs(float(strategy(s))), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
        )
        best = max(best, -float(refined.fun))
    return regime.b * best**regime.alpha


def criminal_penalty(strategy: StrategyPath, tau: float, regime: RegulatoryRegime) -> float:
    if regime.sup_penalty:
        return criminal_penalty_sup(strategy, tau, regime)
    return criminal_penalty_lp(strategy, tau, regime)


def total_penalty(
    strategy: StrategyPath,
    price_path: Callable[[float], float],
    v: float,
    tau: float,
    regime: RegulatoryRegime,
) -> PenaltyBreakdown:
    if tau > strategy.horizon:
        return PenaltyBreakdown()
    profit = 0.0
    if tau > 0.0:
        integrand = lambda s: float(strategy(s)) * (v - float(price_path(s)))
        profit = integrate_segments(integrand, _finite_segments(strategy, tau))
    crim = criminal_penalty(strategy, tau, regime)
    civil = regime.c * profit
    total = profit + float(additional_penalty(crim, civil, regime))
    return PenaltyBreakdown(disgorgement=max(profit, 0.0), criminal=crim, civil=civil, total=total)


def running_sup_profile(
    strategy: StrategyPath, regime: RegulatoryRegime, t_end: Optional[float] = None
) -> Callable[[float], float]:
    """``t ↦ sup_{s≤t} b|θ(s)|^α`` tabulated on a fine grid."""
    end = strategy.horizon if t_end is None else t_end
    if strategy.singular_at_end and end >= strategy.horizon:
        end = strategy.segments()[-1][1]
    grid = np.union1d(np.linspace(0.0, end, PROFILE_POINTS), [b for b in strategy.breakpoints if b <= end])
    running = np.maximum.accumulate(penalty_rate(strategy(grid), regime))
    return lambda t: float(np.interp(t, grid, running))


def sup_penalty_convergence(
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    ps: Sequence[float] = (1, 2, 4, 8, 16, 32, 64),
) -> Dict[str, List[float]]:
    """``∫₀ᵀ Π₀^{(p)}(θ_{[0,t]}) dt`` for each ``p`` next to the sup-form value."""
    horizon = strategy.horizon
    grid = np.union1d(np.linspace(0.0, horizon, PROFILE_POINTS), list(strategy.breakpoints))
    rate = penalty_rate(strategy(grid), regime)
    integrals = []
    for p in ps:
        scale = float(rate.max()) or 1.0
        running = integrate.cumulative_trapezoid((rate / scale) ** p, grid, initial=0.0)
        integrals.append(float(integrate.trapezoid(scale * running ** (1.0 / p), grid)))
    sup_value = float(integrate.trapezoid(np.maximum.accumulate(rate), grid))
    return {"p": [float(p) for p in ps], "lp_integral": integrals, "sup_integral": [sup_value]}


def running_state(
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    hazard_scale: float = 1.0,
    t_end: Optional[float] = None,
) -> np.ndarray:
    """``(Λ_t, ∫ϖ₀^p, ∫θ)`` at ``t_end``; the middle entry is 0 under the sup penalty."""
    p = regime.p

    def rates(t: float, theta: float, state: np.ndarray) -> np.ndarray:
        lam = float(hazard_rate(t, hazard_scale * theta, regime))
        crim_rate = 0.0 if regime.sup_penalty else float(penalty_rate(theta, regime)) ** p
        return np.array([lam, crim_rate, theta])

    return integrate_state(strategy, rates, n_states=3, t_end=t_end)


def survival_weighted_objective(
    strategy: StrategyPath,
    regime: RegulatoryRegime,
    delta: float,
    *,
    hazard_scale: float = 1.0,
    disgorgement: bool = False,
) -> float:
    """``∫e^{-Λ}θΔ dt - ∫λe^{-Λ}(Π_a [+ G]) dt`` along a deterministic strategy.

    State ``(Λ, ∫ϖ₀^p, ∫θ, J)`` is integrated jointly; ``G = Δ∫θ`` is the running profit at
    the constant price and ``Π_a = C₁W(Π₀, cG)``.
    """
    sup_profile = running_sup_profile(strategy, regime) if regime.sup_penalty else None
    p = regime.p

    def rates(t: float, theta: float, state: np.ndarray) -> np.ndarray:
        lam = float(hazard_rate(t, hazard_scale * theta, regime))
        crim_rate = 0.0 if sup_profile is not None else float(penalty_rate(theta, regime)) ** p
        survival = math.exp(-state[0])
        profit = delta * state[2]
        crim = sup_profile(t) if sup_profile is not None else max(state[1], 0.0) ** (1.0 / p)
        charge = float(additional_penalty(crim, regime.c * profit, regime))
        if disgorgement:
            charge += profit
        return np.array([lam, crim_rate, theta, survival * (theta * delta - lam * charge)])

    return integrate_state(strategy, rates, n_states=4)[-1]


def integrate_state(
    strategy: StrategyPath,
    rates: Callable[[float, float, np.ndarray], np.ndarray],
    n_states: int,
    t_end: Optional[float] = None,
) -> np.ndarray:
    """Integrate ``d(state)/dt = rates(t, θ(t), state)`` from zero over the strategy's segments."""
    state = np.zeros(n_states)
    for a, b in strategy.segments(t_end):
        # stay inside the open segment so a jump at b is not sampled
        inner = b - 1e-13 * (b - a)

        def fn(t: float, y: np.ndarray, a: float = a, inner: float = inner) -> np.ndarray:
            return rates(t, float(strategy(min(max(t, a), inner))), y)

        sol = integrate.solve_ivp(fn, (a, b), state, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
        if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
            raise QuadratureError(f"state integration failed on [{a}, {b}]: {sol.message}")
        state = sol.y[:, -1]
    tail = strategy.tail(t_end)
    if tail is not None:
        state = state + _tail_increment(strategy, rates, state, *tail)
    return state


def _tail_increment(
    strategy: StrategyPath,
    rates: Callable[[float, float, np.ndarray], np.ndarray],
    state: np.ndarray,
    a: float,
    b: float,
) -> np.ndarray:
    """``∫_a^b rates dt`` with the state frozen at ``a``; the rates may blow up integrably at ``b``."""
    last = np.nextafter(b, a)
    frozen = state.copy()
    increment, _ = integrate.quad_vec(
        lambda t: np.asarray(rates(t, float(strategy(min(t, last))), frozen), dtype=float),
        a,
        b,
        epsabs=ODE_ATOL,
        epsrel=TAIL_RTOL,
    )
    increment = np.asarray(increment, dtype=float)
    if not np.all(np.isfinite(increment)):
        raise QuadratureError(f"tail integration failed on [{a}, {b}]")
    return increment
