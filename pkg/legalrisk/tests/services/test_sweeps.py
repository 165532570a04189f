from pathlib import Path

import pytest

from legalrisk.app.core.config_file import load_config
from legalrisk.app.core.errors import ConfigError
from legalrisk.app.services.export import OutputStore, read_csv
from legalrisk.app.services.sweeps import (
    ROOT,
    SweepGrid,
    apply_point,
    load_presets,
    parse_grid_spec,
    resolve_grids,
    run_sweep,
)


def _make_store(tmp_path: Path) -> OutputStore:
    return OutputStore(tmp_path, {"seed": "0"})


def test_parse_grid_spec_ranges_and_lists():
    grid = parse_grid_spec("p=1:2:3; c2=1,2")
    assert grid.axes == {"p": [1.0, 1.5, 2.0], "c2": [1.0, 2.0]}
    assert len(grid.points()) == 6
    assert grid.points()[0] == {"p": 1.0, "c2": 1.0}


@pytest.mark.parametrize("spec", ["p", "p=a:b:c", "gamma=1,2", ""])
def test_parse_grid_spec_rejects_bad_input(spec):
    with pytest.raises(ConfigError):
        parse_grid_spec(spec)


def test_presets_cover_every_figure():
    presets = load_presets()
    assert {"fig1", "fig2", "fig3", "figures"} <= set(presets)
    assert [g.dataset for g in presets["fig3"]] == ["fig3_paths", "fig3_surface"]
    assert presets["fig1"][0].axes["p"][0] == 1.0 and presets["fig1"][0].axes["p"][-1] == 6.0
    assert presets["fig3"][0].axes["p"] == [1.5, 1.75, 2.0]
    for grids in presets.values():
        for grid in grids:
            assert (ROOT / grid.config).exists()


def test_resolve_grids_falls_back_to_spec():
    assert resolve_grids("fig2")[0].tie_eta
    assert resolve_grids("b=1,2")[0].name == "custom"


def test_apply_point_maps_c2_and_ties_eta():
    regime, market = load_config(ROOT / "data" / "configs" / "figure1.cfg")
    moved, moved_market = apply_point(regime.with_(kappa=0.5), market, {"c2": 2.0, "p": 3.0, "T": 2.0}, tie_eta=True)
    assert moved.b == pytest.approx(4.0)
    assert moved.c2 == pytest.approx(2.0)
    assert moved.eta == pytest.approx(6.0)
    assert moved_market.horizon_t == 2.0


def test_fig2_surface_value(tmp_path: Path):
    grid = SweepGrid(name="fig2", dataset="fig2", config="data/configs/figure2.cfg", tie_eta=True, axes={"p": [2.0], "c2": [1.0]})
    frames = run_sweep(grid, _make_store(tmp_path))
    surface = read_csv(tmp_path / "fig2_surface.csv")
    assert list(surface.columns) == ["p", "c2", "theta_const"]
    assert surface["theta_const"].iloc[0] == pytest.approx(0.805, abs=1e-3)
    assert set(frames) == {"fig2_surface.csv"}


def test_fig3_surface_value(tmp_path: Path):
    grid = SweepGrid(name="fig3_surface", dataset="fig3_surface", config="data/configs/figure3_degenerate.cfg", axes={"b": [2.0], "c": [1.0]})
    run_sweep(grid, _make_store(tmp_path))
    surface = read_csv(tmp_path / "fig3_surface.csv")
    assert surface["x_bar"].iloc[0] == pytest.approx(0.40321, abs=1e-5)


def test_fig1_paths_and_monotone_surface(tmp_path: Path):
    grid = SweepGrid(
        name="fig1", dataset="fig1", config="data/configs/figure1.cfg",
        axes={"p": [2.0], "c2": [1.0, 2.0, 3.0]}, path_samples=5,
    )
    run_sweep(grid, _make_store(tmp_path))
    paths = read_csv(tmp_path / "fig1_paths.csv")
    surface = read_csv(tmp_path / "fig1_surface.csv")
    assert list(paths.columns) == ["p", "c2", "t", "theta"]
    assert len(paths) == 15
    first = paths[(paths["c2"] == 1.0) & (paths["t"] == 0.0)]["theta"].iloc[0]
    assert first == pytest.approx(0.5907, abs=1e-4)
    assert surface["theta_at_half_T"].is_monotonic_decreasing
    assert "# seed=0" in (tmp_path / "fig1_surface.csv").read_text(encoding="utf-8")


def test_invalid_points_go_to_errors_file(tmp_path: Path):
    store = _make_store(tmp_path)
    regime, market = load_config(ROOT / "data" / "configs" / "figure1.cfg")
    run_sweep(parse_grid_spec("p=0.5,2"), store, regime, market)
    run_sweep(parse_grid_spec("beta=1.0"), store, regime, market)
    errors = read_csv(tmp_path / "errors.csv")
    assert len(errors) == 2
    assert set(errors["error"]) == {"ValidityError"}
    sweep = read_csv(tmp_path / "sweep.csv")
    assert list(sweep.columns) == ["beta"]
    assert len(sweep) == 0


def test_generic_sweep_reports_solver(tmp_path: Path):
    regime, market = load_config(ROOT / "data" / "configs" / "figure1.cfg")
    frames = run_sweep(parse_grid_spec("p=1,2"), _make_store(tmp_path), regime, market)
    sweep = frames["sweep.csv"]
    assert list(sweep["solver"]) == ["scenario_I", "scenario_I"]
    assert sweep["objective"].iloc[0] > sweep["objective"].iloc[1]


def test_sweep_without_config_is_rejected(tmp_path: Path):
    with pytest.raises(ConfigError):
        run_sweep(parse_grid_spec("p=1"), _make_store(tmp_path))
