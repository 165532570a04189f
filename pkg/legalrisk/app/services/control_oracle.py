"""Brute-force check of the closed forms: maximise the limiting objective over piecewise-constant
strategies and compare with the solvers.

Cells carry magnitudes ``|θ_k|``; the sign ``sgn(v - E[V])`` is applied when a strategy is built.
Running integrals are exact inside a cell (the rates are constant there) and the time integral
uses 8-point Gauss-Legendre per cell.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from scipy import optimize

from legalrisk.app.core.errors import LegalRiskError
from legalrisk.app.core.model import MarketConfig, RegulatoryRegime, ScenarioTag
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import PiecewiseConstantStrategy, StrategyPath
from legalrisk.app.numerics.special_fn import integrate_segments
from legalrisk.app.services.equilibrium import EquilibriumSolution, solve
from legalrisk.app.services.export import OutputStore
from legalrisk.app.services.penalty import additional_penalty
from legalrisk.app.services.records import OracleRecord

logger = logging.getLogger(__name__)

GAUSS_POINTS = 8
GRADED_SHARE = 0.2
GRADED_WIDTH = 0.1
DEFAULT_THETA_MAX = 1e3
THETA_MAX_FACTOR = 50.0
START_EPSILON = 1e-3
FD_STEP = 1e-6
WRONG_FORM_GAP = 0.05

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_POINTS)
_UNIT_NODES = 0.5 * (_NODES + 1.0)
_UNIT_WEIGHTS = 0.5 * _WEIGHTS


@dataclass(frozen=True)
class DiscretizedProblem:
    scenario: ScenarioTag
    regime: RegulatoryRegime
    market: MarketConfig
    edges: np.ndarray
    theta_max: float
    reference: Optional[EquilibriumSolution] = field(default=None, compare=False, repr=False)

    @property
    def cells(self) -> int:
        return int(self.edges.size - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def bounds(self) -> List[tuple]:
        return [(0.0, self.theta_max)] * self.cells

    def strategy(self, theta: np.ndarray) -> PiecewiseConstantStrategy:
        return PiecewiseConstantStrategy(self.edges, self.market.sign * np.abs(theta))


@dataclass
class OracleResult:
    problem: DiscretizedProblem
    theta: np.ndarray
    objective: float
    best_restart: int
    converged: bool
    restart_values: List[float]
    traces: List[pd.DataFrame]

    @property
    def strategy(self) -> PiecewiseConstantStrategy:
        return self.problem.strategy(self.theta)


def cell_edges(horizon: float, cells: int, graded: bool = False) -> np.ndarray:
    """Uniform edges, or uniform on ``[0, 0.9T]`` followed by halving cells toward ``T``."""
    if not graded:
        return np.linspace(0.0, horizon, cells + 1)
    fine = max(1, int(round(GRADED_SHARE * cells)))
    width = GRADED_WIDTH * horizon
    coarse = np.linspace(0.0, horizon - width, cells - fine + 1)
    tail = horizon - width * 0.5 ** np.arange(1, fine)
    return np.concatenate([coarse, tail, [horizon]])


def build_problem(
    scenario: Union[ScenarioTag, str],
    regime: RegulatoryRegime,
    market: MarketConfig,
    cells: int,
    graded: bool = False,
    theta_max: Optional[float] = None,
    reference: Optional[EquilibriumSolution] = None,
) -> DiscretizedProblem:
    if cells < 1:
        raise ValueError("cells must be positive")
    if reference is None:
        try:
            reference = solve(regime, market)
        except LegalRiskError as exc:
            logger.info("no closed form for the oracle bounds: %s", exc)
    if theta_max is None:
        theta_max = DEFAULT_THETA_MAX
        if reference is not None:
            mid = abs(float(reference.strategy(0.5 * market.horizon_t)))
            if math.isfinite(mid) and mid > 0.0:
                theta_max = THETA_MAX_FACTOR * mid
    return DiscretizedProblem(
        scenario=ScenarioTag(scenario),
        regime=regime,
        market=market,
        edges=cell_edges(market.horizon_t, cells, graded),
        theta_max=float(theta_max),
        reference=reference,
    )


def _running(rate: np.ndarray, widths: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    start = np.concatenate([[0.0], np.cumsum(rate * widths)[:-1]])
    return start[:, None] + rate[:, None] * offsets


def discretized_objective(problem: DiscretizedProblem, theta: np.ndarray) -> float:
    theta = np.abs(np.asarray(theta, dtype=float))
    if theta.shape != (problem.cells,):
        raise ValueError(f"expected {problem.cells} cell values, got shape {theta.shape}")
    regime = problem.regime
    delta = abs(problem.market.delta)
    widths = problem.widths
    offsets = widths[:, None] * _UNIT_NODES[None, :]
    size = theta[:, None]
    if regime.sup_penalty:
        crim_core = np.maximum.accumulate(theta**regime.alpha)[:, None] * np.ones_like(offsets)
    else:
        crim_core = _running(theta ** (regime.p * regime.alpha), widths, offsets) ** (1.0 / regime.p)

    if problem.scenario is ScenarioTag.SUPERLINEAR_PENALTY:
        integrand = size * delta - regime.c2 * size**regime.eta * crim_core
    else:
        hazard = regime.kappa * theta**regime.eta
        intensity = _running(hazard, widths, offsets)
        profit = delta * _running(theta, widths, offsets)
        charge = additional_penalty(regime.b * crim_core, regime.c * profit, regime)
        integrand = np.exp(-intensity) * (size * delta - hazard[:, None] * charge)
    return float(np.sum(integrand * _UNIT_WEIGHTS[None, :] * widths[:, None]))


def _forward_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray, upper: float) -> np.ndarray:
    base = fn(theta)
    grad = np.empty_like(theta)
    for k in range(theta.size):
        step = FD_STEP * (1.0 + abs(theta[k]))
        if theta[k] + step > upper:
            step = -step
        bumped = theta.copy()
        bumped[k] += step
        grad[k] = (fn(bumped) - base) / step
    return grad


def cell_averages(strategy: StrategyPath, edges: np.ndarray) -> np.ndarray:
    return np.array(
        [
            integrate_segments(lambda s: abs(float(strategy(s))), [(a, b)]) / (b - a)
            for a, b in zip(edges[:-1], edges[1:])
        ]
    )


def _starts(problem: DiscretizedProblem, restarts: int, seed: int) -> List[np.ndarray]:
    cells, upper = problem.cells, problem.theta_max
    if problem.reference is not None:
        level = abs(float(problem.reference.strategy(0.5 * problem.market.horizon_t)))
    else:
        level = upper / THETA_MAX_FACTOR
    level = min(max(level, START_EPSILON), upper)
    starts = [np.full(cells, START_EPSILON * min(1.0, upper)), np.full(cells, level)]
    for restart in range(2, restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, restart]))
        draw = np.exp(rng.uniform(math.log(0.01 * level), math.log(10.0 * level), size=cells))
        starts.append(np.clip(draw, 0.0, upper))
    return starts[:restarts]


def _run_restart(problem: DiscretizedProblem, start: np.ndarray, max_iter: int):
    fn = lambda theta: -discretized_objective(problem, theta)
    rows: List[Dict[str, float]] = [{"iter": 0, "objective": -fn(start), "step_norm": 0.0}]
    last = {"x": start.copy()}

    def record(xk: np.ndarray) -> None:
        rows.append(
            {
                "iter": len(rows),
                "objective": -fn(xk),
                "step_norm": float(np.linalg.norm(xk - last["x"])),
            }
        )
        last["x"] = xk.copy()

    result = optimize.minimize(
        fn,
        start,
        jac=lambda theta: _forward_gradient(fn, theta, problem.theta_max),
        method="L-BFGS-B",
        bounds=problem.bounds,
        callback=record,
        options={"maxiter": max_iter, "ftol": 1e-13, "gtol": 1e-10},
    )
    return np.asarray(result.x), -float(result.fun), bool(result.success), pd.DataFrame(rows), str(result.message)


def optimize_piecewise(
    problem: DiscretizedProblem,
    restarts: Optional[int] = None,
    seed: int = 0,
    max_iter: Optional[int] = None,
    trace_dir: Optional[Union[str, Path]] = None,
) -> OracleResult:
    if problem.cells < 10:
        raise ValueError("the oracle needs at least 10 cells")
    restarts = settings.oracle_restarts if restarts is None else restarts
    max_iter = settings.oracle_max_iter if max_iter is None else max_iter
    starts = _starts(problem, restarts, seed)
    if settings.max_workers > 1:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            outcomes = list(pool.map(lambda start: _run_restart(problem, start, max_iter), starts))
    else:
        outcomes = [_run_restart(problem, start, max_iter) for start in starts]

    values = [value for _, value, _, _, _ in outcomes]
    best = int(np.argmax(values))  # first maximum wins ties
    theta, value, converged, _, message = outcomes[best]
    if not converged:
        logger.warning("oracle restart %d stopped without convergence: %s", best, message)
    for index, (_, restart_value, ok, trace, _) in enumerate(outcomes):
        logger.debug("oracle restart=%d value=%.12g converged=%s iterations=%d", index, restart_value, ok, len(trace))
    logger.info(
        "oracle scenario=%s cells=%d restarts=%d best=%d objective=%.10g",
        problem.scenario.value, problem.cells, len(starts), best, value,
    )
    result = OracleResult(
        problem=problem,
        theta=theta,
        objective=value,
        best_restart=best,
        converged=converged,
        restart_values=values,
        traces=[trace for _, _, _, trace, _ in outcomes],
    )
    if trace_dir is not None:
        write_traces(result, OutputStore(trace_dir))
    return result


def write_traces(result: OracleResult, store: OutputStore) -> None:
    for index, trace in enumerate(result.traces):
        store.write_csv(f"oracle_trace_{index}.csv", trace, {"restart": index})


def compare_to_closed_form(
    result: OracleResult,
    solution: EquilibriumSolution,
    exclusion: Optional[float] = None,
) -> Dict[str, float]:
    """Cellwise and objective gaps between an oracle optimum and a closed-form strategy.

    Pointwise gaps use cell averages of the closed form on cells ending before
    ``(1 - exclusion)T``.
    """
    problem = result.problem
    exclusion = settings.oracle_exclusion if exclusion is None else exclusion
    edges = problem.edges
    interior = edges[1:] <= (1.0 - exclusion) * problem.market.horizon_t * (1.0 + 1e-12)
    reference = cell_averages(solution.strategy, edges)
    oracle = np.abs(result.theta)
    gaps = np.abs(oracle[interior] - reference[interior]) / np.maximum(reference[interior], 1e-300)
    widths = problem.widths[interior]
    reference_order = float(np.sum(reference[interior] * widths))
    total_reference = float(np.sum(reference * problem.widths))
    total_oracle = float(np.sum(oracle * problem.widths))
    objective_gap = abs(result.objective - solution.objective) / max(abs(solution.objective), 1e-300)
    sampled = discretized_objective(problem, np.clip(reference, 0.0, problem.theta_max))
    return {
        "max_rel_gap": float(gaps.max()) if gaps.size else 0.0,
        "mean_rel_gap": float(gaps.mean()) if gaps.size else 0.0,
        "objective_gap": objective_gap,
        "cumulative_gap": abs(float(np.sum(oracle[interior] * widths)) - reference_order) / max(reference_order, 1e-300),
        "total_order": total_oracle,
        "total_order_gap": abs(total_oracle - total_reference) / max(total_reference, 1e-300),
        "sampled_closed_form_objective": sampled,
        "flagged": float(objective_gap > WRONG_FORM_GAP),
    }


def oracle_record(
    result: OracleResult,
    restarts: int,
    seed: int,
    comparison: Optional[Dict[str, float]] = None,
    meta: Optional[Dict[str, str]] = None,
) -> OracleRecord:
    return OracleRecord(
        scenario=result.problem.scenario.value,
        cells=result.problem.cells,
        restarts=restarts,
        seed=seed,
        best_restart=result.best_restart,
        objective=result.objective,
        converged=result.converged,
        theta_max=result.problem.theta_max,
        comparison=comparison,
        meta=dict(meta or {}),
    )
