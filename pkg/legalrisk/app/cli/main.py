"""``legalrisk`` command line: solve | sweep | simulate | oracle | verify.

Exit codes: 0 success, 1 verification failure, 2 invalid regime/config, 3 shooting divergence,
4 simulation config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from legalrisk.app.core.config_file import config_items, load_config
from legalrisk.app.core.errors import (
    ConfigError,
    DivisionError,
    LegalRiskError,
    ShootingDivergence,
    ValidityError,
)
from legalrisk.app.core.model import MarketConfig, RegulatoryRegime, stealth_index
from legalrisk.app.core.settings import settings
from legalrisk.app.core.strategy import PiecewiseConstantStrategy, StrategyPath
from legalrisk.app.services import control_oracle, market_sim, verification
from legalrisk.app.services.equilibrium import closed_form_kind, sample_strategy, solution_record, solve
from legalrisk.app.services.export import OutputStore, read_csv
from legalrisk.app.services.sweeps import resolve_grids, run_sweep

logger = logging.getLogger("legalrisk")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_SIMULATION_CONFIG = 4

SCENARIO_FORMS = {"I": "SuperlinearPenalty", "II": "SuperlinearPenalty", "III": "LinearPenalty"}


def _meta(args: argparse.Namespace, regime: Optional[RegulatoryRegime] = None, market: Optional[MarketConfig] = None) -> Dict[str, str]:
    meta: Dict[str, str] = {"command": " ".join(["legalrisk", *args.argv]), "seed": str(args.seed)}
    if args.config:
        meta["config"] = str(args.config)
    if regime is not None and market is not None:
        meta.update(config_items(regime, market))
    return meta


def _report_invalid(exc: ValidityError) -> int:
    logger.error("%s", exc)
    for line in exc.report:
        print(f"invalid: {line}", file=sys.stderr)
    return EXIT_INVALID


def _load(args: argparse.Namespace) -> Tuple[RegulatoryRegime, MarketConfig]:
    if not args.config:
        raise ConfigError("--config is required")
    return load_config(args.config)


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        regime, market = _load(args)
        solution = solve(regime, market, args.scenario)
    except ValidityError as exc:
        return _report_invalid(exc)
    except (ConfigError, DivisionError) as exc:
        logger.error("%s", exc)
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ShootingDivergence as exc:
        logger.error("%s; last residuals=%s iterate=%s", exc, exc.residuals, exc.iterate)
        return EXIT_DIVERGED
    store = OutputStore(args.out, _meta(args, regime, market))
    store.write_json("solution.json", solution_record(solution))
    store.write_csv("strategy.csv", sample_strategy(solution, args.samples))
    logger.info("wrote %s and %s", store.path("solution.json"), store.path("strategy.csv"))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        grids = resolve_grids(args.grid)
        base = _load(args) if args.config else (None, None)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    store = OutputStore(args.out, _meta(args, *base) if base[0] is not None else _meta(args))
    errors = store.path("errors.csv")
    if errors.exists():
        errors.unlink()
    for grid in grids:
        try:
            run_sweep(grid, store, *base)
        except ConfigError as exc:
            logger.error("sweep %s: %s", grid.name, exc)
            return EXIT_INVALID
    return EXIT_OK


def strategy_from_csv(path: Path, horizon: float) -> PiecewiseConstantStrategy:
    """Piecewise-constant strategy from a ``t, theta`` table; each value holds until the next ``t``."""
    frame = read_csv(path)
    if list(frame.columns[:2]) != ["t", "theta"]:
        raise ConfigError(f"{path}: expected columns t, theta")
    times = frame["t"].to_numpy(dtype=float)
    if times.size == 0 or times[0] != 0.0 or times[-1] >= horizon:
        raise ConfigError(f"{path}: times must start at 0 and stay below T={horizon}")
    return PiecewiseConstantStrategy(np.append(times, horizon), frame["theta"].to_numpy(dtype=float))


def _per_value_strategies(regime: RegulatoryRegime, market: MarketConfig, scenario: str) -> Dict[float, StrategyPath]:
    scale = float(market.population_n) ** stealth_index(regime)
    strategies: Dict[float, StrategyPath] = {}
    for value, _ in market.value_support:
        if value == market.mean_value:
            strategies[value] = PiecewiseConstantStrategy([0.0, market.horizon_t], [0.0])
            continue
        solution = solve(regime, market.with_(v=value), scenario)
        strategies[value] = solution.strategy.scaled(scale)
    return strategies


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        regime, market = _load(args)
        dt = market.horizon_t / args.steps if args.steps else None
        strategies = None
        strategy: Optional[StrategyPath] = None
        if args.pricing == market_sim.FINITE_N:
            strategies = _per_value_strategies(regime, market, args.scenario)
        elif args.strategy == "solved":
            solution = solve(regime, market, args.scenario)
            strategy = solution.strategy.scaled(float(market.population_n) ** solution.gamma)
        else:
            strategy = strategy_from_csv(Path(args.strategy), market.horizon_t)
        outcome = market_sim.simulate_paths(
            market, strategy, regime, args.paths, dt=dt, seed=args.seed, pricing=args.pricing,
            strategies=strategies, keep_paths=args.keep_paths, disgorgement=args.disgorgement,
        )
        deterministic = None
        if strategy is not None:
            deterministic = market_sim.deterministic_objective(market, strategy, regime, args.disgorgement)
    except (ConfigError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_SIMULATION_CONFIG
    except ValidityError as exc:
        return _report_invalid(exc)
    except ShootingDivergence as exc:
        logger.error("%s", exc)
        return EXIT_DIVERGED
    except LegalRiskError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    store = OutputStore(args.out, _meta(args, regime, market))
    store.write_json("simulation.json", market_sim.simulation_record(outcome, deterministic))
    for index, record in enumerate(outcome.paths):
        store.write_csv(f"path_{index}.csv", market_sim.path_frame(record), {"path": index})
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    try:
        regime, market = _load(args)
        kind = closed_form_kind(regime) if args.scenario == "auto" else args.scenario.upper()
        reference = None
        try:
            reference = solve(regime, market, kind)
        except LegalRiskError as exc:
            logger.warning("no closed form to compare against: %s", exc)
        problem = control_oracle.build_problem(
            SCENARIO_FORMS.get(kind, "SuperlinearPenalty"), regime, market, args.cells,
            graded=args.graded, reference=reference,
        )
        store = OutputStore(args.out, _meta(args, regime, market))
        result = control_oracle.optimize_piecewise(problem, restarts=args.restarts, seed=args.seed)
    except ValidityError as exc:
        return _report_invalid(exc)
    except (ConfigError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    comparison = control_oracle.compare_to_closed_form(result, reference) if reference is not None else None
    restarts = args.restarts or settings.oracle_restarts
    store.write_json("oracle.json", control_oracle.oracle_record(result, restarts, args.seed, comparison))
    control_oracle.write_traces(result, store)
    cells = pd.DataFrame({"t_start": problem.edges[:-1], "t_end": problem.edges[1:], "theta": result.strategy.values})
    store.write_csv("oracle_theta.csv", cells)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        report = verification.run_suites(args.suite, seed=args.seed, meta=_meta(args))
    except KeyError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    store = OutputStore(args.out)
    store.write_json("verification.json", report)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.suite}.{check.name} observed={check.observed} expected={check.expected} {check.detail}")
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="key=value run config")
    common.add_argument("--out", type=str, default=settings.output_dir, help="Output directory")
    common.add_argument("--seed", type=int, default=0, help="Base RNG seed")
    common.add_argument("--log-level", type=str, default=settings.log_level, help="Logging level")
    common.add_argument("--scenario", choices=["auto", "I", "II", "III"], default="auto")

    ap = argparse.ArgumentParser(prog="legalrisk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    solve_p = sub.add_parser("solve", parents=[common], help="Solve the limiting equilibrium")
    solve_p.add_argument("--samples", type=int, default=settings.default_steps, help="strategy.csv rows")
    solve_p.set_defaults(func=cmd_solve)

    sweep_p = sub.add_parser("sweep", parents=[common], help="Parameter sweeps / figure datasets")
    sweep_p.add_argument("--grid", type=str, required=True, help="Preset (fig1, fig2, fig3, figures) or name=min:max:count;...")
    sweep_p.set_defaults(func=cmd_sweep)

    sim_p = sub.add_parser("simulate", parents=[common], help="Monte Carlo market simulation")
    sim_p.add_argument("--paths", type=int, default=10_000)
    sim_p.add_argument("--steps", type=int, default=None, help="Time steps (default LEGALRISK_DEFAULT_STEPS)")
    sim_p.add_argument("--strategy", type=str, default="solved", help="'solved' or a t,theta CSV")
    sim_p.add_argument("--pricing", choices=[market_sim.LIMITING, market_sim.FINITE_N], default=market_sim.LIMITING)
    sim_p.add_argument("--keep-paths", type=int, default=0, help="Per-path CSVs to write")
    sim_p.add_argument("--disgorgement", action="store_true", help="Claw back realised profit on prosecution")
    sim_p.set_defaults(func=cmd_simulate)

    oracle_p = sub.add_parser("oracle", parents=[common], help="Piecewise-constant control oracle")
    oracle_p.add_argument("--cells", type=int, default=50)
    oracle_p.add_argument("--graded", action="store_true", help="Refine cells toward T")
    oracle_p.add_argument("--restarts", type=int, default=None)
    oracle_p.set_defaults(func=cmd_oracle)

    verify_p = sub.add_parser("verify", parents=[common], help="Acceptance suites")
    verify_p.add_argument("--suite", type=str, default="all", help=f"all or comma list of {', '.join([*verification.SUITES, *verification.SUITE_ALIASES])}")
    verify_p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv_list: List[str] = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv_list)
    args.argv = argv_list
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
