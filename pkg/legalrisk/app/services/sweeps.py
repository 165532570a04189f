from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, field_validator

from legalrisk.app.core.config_file import load_config
from legalrisk.app.core.errors import ConfigError, LegalRiskError
from legalrisk.app.core.model import MarketConfig, RegulatoryRegime, validate_regime
from legalrisk.app.core.settings import settings
from legalrisk.app.services.equilibrium import EquilibriumSolution, solve
from legalrisk.app.services.export import OutputStore

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parents[3]
FIGURE_GRIDS_PATH = ROOT / "data" / "figure_grids.yaml"
AXIS_NAMES = ("p", "c2", "b", "c", "T", "beta", "eta", "alpha")
DATASETS = ("fig1", "fig2", "fig3_paths", "fig3_surface", "generic")
NEAR_END_OFFSETS = (1e-3, 1e-4, 1e-5)


class SweepGrid(BaseModel):
    name: str = "custom"
    dataset: str = "generic"
    config: Optional[str] = None
    axes: Dict[str, List[float]]
    tie_eta: bool = False
    path_samples: int = 41
    scenario: str = "auto"

    @field_validator("axes", mode="before")
    @classmethod
    def _expand_axes(cls, value: Any) -> Dict[str, List[float]]:
        if not isinstance(value, dict) or not value:
            raise ValueError("a sweep grid needs at least one axis")
        axes: Dict[str, List[float]] = {}
        for name, spec in value.items():
            if name not in AXIS_NAMES:
                raise ValueError(f"unknown sweep axis {name!r}; expected one of {AXIS_NAMES}")
            if isinstance(spec, dict):
                count = int(spec["count"])
                axes[name] = [float(x) for x in np.linspace(float(spec["min"]), float(spec["max"]), count)]
            else:
                axes[name] = [float(x) for x in (spec if isinstance(spec, (list, tuple)) else [spec])]
            if not axes[name]:
                raise ValueError(f"axis {name!r} is empty")
        return axes

    @field_validator("dataset")
    @classmethod
    def _known_dataset(cls, value: str) -> str:
        if value not in DATASETS:
            raise ValueError(f"unknown dataset {value!r}")
        return value

    def points(self) -> List[Dict[str, float]]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in product(*(self.axes[n] for n in names))]


def load_presets(path: Path = FIGURE_GRIDS_PATH) -> Dict[str, List[SweepGrid]]:
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    presets: Dict[str, List[SweepGrid]] = {}
    for name, entries in (data.get("presets") or {}).items():
        presets[name] = [SweepGrid.model_validate(entry) for entry in entries]
    return presets


def parse_grid_spec(spec: str) -> SweepGrid:
    """``name=min:max:count`` or ``name=v1,v2,...`` joined by ``;``."""
    axes: Dict[str, Any] = {}
    for chunk in filter(None, (part.strip() for part in spec.split(";"))):
        name, sep, body = chunk.partition("=")
        if not sep:
            raise ConfigError(f"grid entry {chunk!r} is not name=values")
        body = body.strip()
        try:
            if ":" in body:
                lo, hi, count = body.split(":")
                axes[name.strip()] = {"min": float(lo), "max": float(hi), "count": int(count)}
            else:
                axes[name.strip()] = [float(x) for x in body.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad grid entry {chunk!r}: {exc}") from exc
    try:
        return SweepGrid(axes=axes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_grids(spec: str) -> List[SweepGrid]:
    presets = load_presets()
    if spec in presets:
        return presets[spec]
    return [parse_grid_spec(spec)]


def apply_point(
    regime: RegulatoryRegime, market: MarketConfig, point: Dict[str, float], tie_eta: bool = False
) -> Tuple[RegulatoryRegime, MarketConfig]:
    """Set sweep coordinates; ``c2`` is reached through ``b = c2/(κC₁)``."""
    regime_changes = {k: v for k, v in point.items() if k in ("p", "b", "c", "beta", "eta", "alpha")}
    regime = regime.with_(**regime_changes)
    if "c2" in point:
        regime = regime.with_(b=point["c2"] / (regime.kappa * regime.c1))
    if tie_eta:
        regime = regime.with_(eta=regime.p * regime.alpha)
    if "T" in point:
        market = market.with_(horizon_t=point["T"])
    return regime, market


@dataclass
class PointResult:
    index: int
    point: Dict[str, float]
    rows: List[Dict[str, float]]
    surface: Optional[Dict[str, float]]
    error: Optional[Dict[str, str]]


def _path_times(horizon: float, samples: int, near_end: bool) -> np.ndarray:
    times = np.linspace(0.0, horizon, samples, endpoint=False)
    if near_end:
        times = np.concatenate([times, horizon * (1.0 - np.asarray(NEAR_END_OFFSETS))])
    return times


def _surface_row(grid: SweepGrid, point: Dict[str, float], solution: EquilibriumSolution) -> Dict[str, float]:
    horizon = solution.market.horizon_t
    if grid.dataset == "fig2":
        return {**point, "theta_const": solution.diagnostics["theta_const"]}
    if grid.dataset == "fig3_surface":
        return {**point, "x_bar": solution.diagnostics["x_bar"]}
    row = {**point, "theta_at_half_T": float(solution.strategy(0.5 * horizon))}
    if grid.dataset == "generic":
        row.update(
            {
                "scenario": solution.scenario.value,
                "solver": solution.solver,
                "objective": solution.objective,
                "x_bar": solution.diagnostics.get("x_bar", float("nan")),
            }
        )
    return row


def _run_point(
    grid: SweepGrid, index: int, point: Dict[str, float], regime: RegulatoryRegime, market: MarketConfig
) -> PointResult:
    regime, market = apply_point(regime, market, point, grid.tie_eta)
    report = validate_regime(regime, market)
    if report:
        logger.warning("sweep %s point %s skipped: %s", grid.name, point, "; ".join(report))
        return PointResult(index, point, [], None, {"error": "ValidityError", "message": "; ".join(report)})
    try:
        solution = solve(regime, market, grid.scenario)
    except LegalRiskError as exc:
        logger.warning("sweep %s point %s failed: %s", grid.name, point, exc)
        return PointResult(index, point, [], None, {"error": type(exc).__name__, "message": str(exc)})
    rows: List[Dict[str, float]] = []
    if grid.dataset in ("fig1", "fig3_paths"):
        times = _path_times(market.horizon_t, grid.path_samples, grid.dataset == "fig3_paths")
        theta = np.asarray(solution.strategy(times), dtype=float)
        rows = [{**point, "t": float(t), "theta": float(v)} for t, v in zip(times, theta)]
    surface = None if grid.dataset == "fig3_paths" else _surface_row(grid, point, solution)
    return PointResult(index, point, rows, surface, None)


def run_sweep(
    grid: SweepGrid,
    store: OutputStore,
    regime: Optional[RegulatoryRegime] = None,
    market: Optional[MarketConfig] = None,
) -> Dict[str, pd.DataFrame]:
    """Solve every grid point and write the dataset CSVs; failures go to ``errors.csv``."""
    if regime is None or market is None:
        if grid.config is None:
            raise ConfigError(f"sweep {grid.name!r} has no base config")
        regime, market = load_config(ROOT / grid.config)
    points = grid.points()
    work = lambda item: _run_point(grid, item[0], item[1], regime, market)
    if settings.max_workers > 1:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            results = list(pool.map(work, enumerate(points)))
    else:
        results = [work(item) for item in enumerate(points)]
    results.sort(key=lambda r: r.index)

    axes = list(grid.axes)
    frames: Dict[str, pd.DataFrame] = {}
    meta = {"grid": grid.name, "dataset": grid.dataset, "axes": ",".join(axes)}
    path_rows = [row for r in results for row in r.rows]
    if grid.dataset in ("fig1", "fig3_paths"):
        frames[f"{grid.dataset.split('_')[0]}_paths.csv"] = pd.DataFrame(path_rows, columns=axes + ["t", "theta"])
    surface_rows = [r.surface for r in results if r.surface is not None]
    if grid.dataset != "fig3_paths":
        name = "sweep.csv" if grid.dataset == "generic" else f"{grid.dataset.split('_')[0]}_surface.csv"
        frames[name] = pd.DataFrame(surface_rows) if surface_rows else pd.DataFrame(columns=axes)
    errors = [{**r.point, **r.error} for r in results if r.error is not None]
    for name, frame in frames.items():
        store.write_csv(name, frame, meta)
    if errors:
        error_frame = pd.DataFrame(errors, columns=axes + ["error", "message"])
        error_path = store.path("errors.csv")
        if error_path.exists():
            previous = pd.read_csv(error_path, comment="#")
            error_frame = pd.concat([previous, error_frame], ignore_index=True)
        store.write_csv("errors.csv", error_frame, meta)
        frames["errors.csv"] = error_frame
    logger.info("sweep %s: %d points, %d failed", grid.name, len(points), len(errors))
    return frames
