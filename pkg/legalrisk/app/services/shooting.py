"""Two-parameter shooting for the linear-penalty control problem with ``p > 1, b > 0``.

With ``h(x) = ∫₀ˣ ϑ^{p-1}`` the first-order condition reads
``(h')^{p/(p-1)} ∫ₓ^{x̄} e^{-κy} h^{1/p-1} dy = ς`` and differentiates to

    h'' = (p-1)/(pς) · e^{-κx} · h^{1/p-1} · (h')^{(2p-1)/(p-1)},   h(0) = 0, h'(0) = χ.

``h'`` explodes at the terminal state ``x̄``. Writing ``s = 1/ϑ = (h')^{-1/(p-1)}`` turns the
system into a regular one in ``s``, integrated from ``s(0)`` down to ``s = 0``:

    dx/ds = -pς s^{p-1} e^{κx} h^{1-1/p},   dh/ds = -pς e^{κx} h^{1-1/p},   dH/ds = s·dx/ds

so ``x̄``, ``h(x̄)`` and the elapsed time ``H(x̄)`` come out of the integration itself.
The unknowns ``(ϑ(0), ς)`` are pinned by

    r₁ = Δ - κC₁(b·h(x̄)^{1/p} + cΔx̄) = 0      (transversality as h'(x̄) → ∞)
    r₂ = H(x̄) - T = 0                         (time budget)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import integrate, interpolate, optimize

from legalrisk.app.core.errors import BracketError, ShootingDivergence
from legalrisk.app.core.model import MarketConfig, RegulatoryRegime
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import ClosedFormStrategy
from legalrisk.app.numerics.special_fn import expand_bracket

logger = logging.getLogger(__name__)

START_FRACTION = 1e-8
OVERSHOOT_FACTOR = 10.0
ODE_RTOL = 1e-11
ODE_ATOL = 1e-15
TABLE_POINTS = 3000
MIN_TIME_TO_GO = 1e-13


@dataclass(frozen=True)
class ShootingProblem:
    delta: float
    kappa: float
    c1: float
    b: float
    c: float
    p: float
    horizon: float

    @classmethod
    def from_model(cls, regime: RegulatoryRegime, market: MarketConfig) -> "ShootingProblem":
        return cls(abs(market.delta), regime.kappa, regime.c1, regime.b, regime.c, regime.p, market.horizon_t)

    @property
    def x_scale(self) -> float:
        return self.delta / (self.kappa * self.c1 * (self.b + self.c * self.delta))

    def pressure(self, x: float, h: float) -> float:
        return self.kappa * self.c1 * (self.b * max(h, 0.0) ** (1.0 / self.p) + self.c * self.delta * x)


@dataclass
class Shot:
    theta0: float
    varsigma: float
    x_bar: float
    h_bar: float
    elapsed: float
    objective: float
    r_transversality: float
    r_time: float
    s_start: float
    overshoot: bool
    solution: Optional[object] = field(default=None, repr=False)


@dataclass
class ShootingState:
    chi: float
    varsigma: float
    mu: float
    theta0: float
    x_bar: float
    h_bar: float
    objective: float
    residuals: Tuple[float, float]
    trace: Dict[str, np.ndarray]
    iterations: int


def shoot(problem: ShootingProblem, theta0: float, varsigma: float, dense: bool = False) -> Shot:
    p, kappa = problem.p, problem.kappa
    chi = theta0 ** (p - 1.0)
    x0 = START_FRACTION * problem.x_scale
    h0 = chi * x0
    w0 = theta0 ** (-p) - (p / varsigma) * chi ** (1.0 / p - 1.0) * x0 ** (1.0 / p)
    if w0 <= 0.0:
        return Shot(theta0, varsigma, x0, h0, x0 / theta0, problem.delta * x0,
                    problem.delta - problem.pressure(x0, h0), x0 / theta0 - problem.horizon, 0.0, False)
    s_start = w0 ** (1.0 / p)
    y0 = np.array([x0, h0, x0 / theta0, problem.delta * x0])

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        x, h = y[0], max(y[1], 0.0)
        hp = h ** (1.0 - 1.0 / p)
        common = p * varsigma * math.exp(kappa * x) * hp
        dx = -common * s ** (p - 1.0)
        gain = p * varsigma * hp * s ** (p - 1.0) * (problem.delta - problem.pressure(x, h))
        return np.array([dx, -common, s * dx, -gain])

    def runaway(s: float, y: np.ndarray) -> float:
        return problem.pressure(y[0], y[1]) - OVERSHOOT_FACTOR * problem.delta

    runaway.terminal = True
    sol = integrate.solve_ivp(
        rhs, (s_start, 0.0), y0, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL,
        events=runaway, dense_output=dense,
    )
    x_bar, h_bar, elapsed, objective = sol.y[:, -1]
    overshoot = sol.status == 1
    return Shot(
        theta0=theta0,
        varsigma=varsigma,
        x_bar=float(x_bar),
        h_bar=float(h_bar),
        elapsed=float(elapsed),
        objective=float(objective),
        r_transversality=float(problem.delta - problem.pressure(x_bar, h_bar)),
        r_time=float(elapsed - problem.horizon),
        s_start=s_start,
        overshoot=overshoot,
        solution=sol if dense else None,
    )


def _varsigma_guess(problem: ShootingProblem, theta0: float) -> float:
    p = problem.p
    return theta0**p * theta0 ** ((p - 1.0) * (1.0 / p - 1.0)) * p * problem.x_scale ** (1.0 / p)


def _match_transversality(problem: ShootingProblem, theta0: float) -> float:
    """ς that zeroes r₁ for a given initial intensity; r₁ decreases in ς."""
    f = lambda sv: shoot(problem, theta0, sv).r_transversality
    lo, hi = expand_bracket(f, _varsigma_guess(problem, theta0))
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=200)


def _bracketed_solve(problem: ShootingProblem) -> Tuple[float, float]:
    def time_gap(theta0: float) -> float:
        return shoot(problem, theta0, _match_transversality(problem, theta0)).r_time

    lo, hi = expand_bracket(time_gap, problem.x_scale / problem.horizon)
    theta0 = optimize.brentq(time_gap, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=200)
    return theta0, _match_transversality(problem, theta0)


def _scaled_residual(problem: ShootingProblem, u: np.ndarray) -> np.ndarray:
    shot = shoot(problem, math.exp(u[0]), math.exp(u[1]))
    return np.array([shot.r_transversality / problem.delta, shot.r_time / problem.horizon])


def _newton_polish(problem: ShootingProblem, theta0: float, varsigma: float) -> Tuple[float, float, int]:
    """Damped Newton on ``(log ϑ₀, log ς)`` with a forward-difference Jacobian."""
    u = np.log([theta0, varsigma])
    residual = _scaled_residual(problem, u)
    target = 0.1 * settings.shooting_tol
    for iteration in range(settings.shooting_max_iter):
        if np.max(np.abs(residual)) <= target:
            return math.exp(u[0]), math.exp(u[1]), iteration
        step = 1e-7
        jac = np.empty((2, 2))
        for k in range(2):
            bumped = u.copy()
            bumped[k] += step
            jac[:, k] = (_scaled_residual(problem, bumped) - residual) / step
        try:
            direction = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            break
        damping = 1.0
        for _ in range(30):
            trial = u + damping * direction
            trial_residual = _scaled_residual(problem, trial)
            if np.linalg.norm(trial_residual) < np.linalg.norm(residual):
                u, residual = trial, trial_residual
                break
            damping *= 0.5
        else:
            break
        logger.debug("newton iter=%d residual=%s", iteration, residual)
    return math.exp(u[0]), math.exp(u[1]), settings.shooting_max_iter


def solve_shooting(regime: RegulatoryRegime, market: MarketConfig) -> Tuple[ShootingState, ClosedFormStrategy]:
    problem = ShootingProblem.from_model(regime, market)
    try:
        theta0, varsigma = _bracketed_solve(problem)
    except (BracketError, ValueError) as exc:
        raise ShootingDivergence(f"no bracket for the shooting parameters: {exc}") from exc
    theta0, varsigma, iterations = _newton_polish(problem, theta0, varsigma)

    shot = shoot(problem, theta0, varsigma, dense=True)
    residuals = (shot.r_transversality, shot.r_time)
    if shot.overshoot or max(abs(r) for r in residuals) > settings.shooting_tol:
        raise ShootingDivergence(
            f"shooting residuals {residuals} above {settings.shooting_tol}",
            residuals=residuals,
            iterate=(theta0, varsigma),
        )

    trace = _trace(problem, shot)
    strategy = _strategy_from_trace(problem, shot, trace, sign=float(np.sign(market.delta)))
    p = problem.p
    state = ShootingState(
        chi=theta0 ** (p - 1.0),
        varsigma=varsigma,
        mu=varsigma * problem.kappa * problem.b * problem.c1 * (p - 1.0) / p,
        theta0=theta0,
        x_bar=shot.x_bar,
        h_bar=shot.h_bar,
        objective=shot.objective,
        residuals=residuals,
        trace=trace,
        iterations=iterations,
    )
    logger.info(
        "shooting p=%s theta0=%.10g varsigma=%.10g x_bar=%.10g residuals=%s",
        p, theta0, varsigma, shot.x_bar, residuals,
    )
    return state, strategy


def _trace(problem: ShootingProblem, shot: Shot) -> Dict[str, np.ndarray]:
    s_start = shot.s_start
    s_grid = np.unique(
        np.concatenate([
            np.linspace(0.0, s_start, TABLE_POINTS),
            s_start * np.geomspace(1e-12, 1e-2, TABLE_POINTS // 2),
        ])
    )[::-1]
    x, h, elapsed, _ = shot.solution.sol(s_grid)
    with np.errstate(divide="ignore"):
        h_prime = s_grid ** (1.0 - problem.p)
        theta = 1.0 / s_grid
    return {"s": s_grid, "x": x, "h": h, "h_prime": h_prime, "H": elapsed, "theta": theta}


def _strategy_from_trace(
    problem: ShootingProblem, shot: Shot, trace: Dict[str, np.ndarray], sign: float
) -> ClosedFormStrategy:
    """``θ(t) = (h'(H^{-1}(t)))^{1/(p-1)}``, tabulated as log θ against log(time to go)."""
    end = shot.elapsed
    time_to_go = np.concatenate([[end], end - trace["H"]])
    theta = np.concatenate([[shot.theta0], trace["theta"]])
    keep = np.isfinite(theta) & (time_to_go > MIN_TIME_TO_GO * problem.horizon)
    log_ttg, log_theta = np.log(time_to_go[keep]), np.log(theta[keep])
    order = np.argsort(log_ttg)
    log_ttg, log_theta = log_ttg[order], log_theta[order]
    unique = np.concatenate([[True], np.diff(log_ttg) > 0])
    log_ttg, log_theta = log_ttg[unique], log_theta[unique]
    table = interpolate.PchipInterpolator(log_ttg, log_theta, extrapolate=False)
    tail_exponent = -1.0 / (problem.p + 1.0)

    def evaluate(t: np.ndarray) -> np.ndarray:
        ttg = problem.horizon - np.clip(t, 0.0, None)
        out = np.full(np.shape(ttg), np.inf, dtype=float)
        inside = (ttg >= math.exp(log_ttg[0])) & (ttg <= math.exp(log_ttg[-1]))
        out[inside] = np.exp(table(np.log(ttg[inside])))
        before = ttg > math.exp(log_ttg[-1])
        out[before] = shot.theta0
        tail = (ttg > 0.0) & (ttg < math.exp(log_ttg[0]))
        out[tail] = math.exp(log_theta[0]) * (ttg[tail] / math.exp(log_ttg[0])) ** tail_exponent
        return sign * out

    return ClosedFormStrategy(evaluate, problem.horizon, singular_at_end=True)
