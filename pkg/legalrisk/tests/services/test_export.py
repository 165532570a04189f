import json
from pathlib import Path

import pandas as pd

from legalrisk.app.services.export import OutputStore, header_block, read_csv, render_csv
from legalrisk.app.services.records import SolutionRecord


def _make_record(**changes) -> SolutionRecord:
    values = {"scenario": "LinearPenalty", "solver": "scenario_III_degenerate", "gamma": 0.3, "limiting_price": 1.0, "objective": 0.25}
    values.update(changes)
    return SolutionRecord(**values)


def test_header_block():
    assert header_block({"seed": 7, "p": "2.0"}) == "# seed=7\n# p=2.0\n"
    assert header_block({}) == ""


def test_render_csv_uses_twelve_significant_digits():
    text = render_csv(pd.DataFrame({"t": [0.0], "theta": [1.0 / 3.0]}), {"seed": 1})
    assert text.splitlines() == ["# seed=1", "t,theta", "0,0.333333333333"]


def test_csv_round_trip_skips_header(tmp_path: Path):
    store = OutputStore(tmp_path / "nested", {"seed": "3"})
    path = store.write_csv("strategy.csv", pd.DataFrame({"t": [0.0, 0.5], "theta": [1.0, 2.0]}), {"rows": 2})
    assert path.read_text(encoding="utf-8").startswith("# seed=3\n# rows=2\n")
    frame = read_csv(path)
    assert frame["theta"].tolist() == [1.0, 2.0]


def test_write_json_fills_empty_meta(tmp_path: Path):
    store = OutputStore(tmp_path, {"seed": "3"})
    data = json.loads(store.write_json("solution.json", _make_record()).read_text(encoding="utf-8"))
    assert data["meta"] == {"seed": "3"}
    assert data["solver"] == "scenario_III_degenerate"


def test_write_json_keeps_own_meta(tmp_path: Path):
    store = OutputStore(tmp_path, {"seed": "3"})
    path = store.write_json("solution.json", _make_record(meta={"seed": "9"}))
    assert json.loads(path.read_text(encoding="utf-8"))["meta"] == {"seed": "9"}
