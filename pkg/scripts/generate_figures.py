#!/usr/bin/env python3
"""Regenerate every figure dataset from the presets in data/figure_grids.yaml."""
import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

ROOT = Path(__file__).resolve().parents[1]

if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

load_dotenv(ROOT / ".env", override=False)

from legalrisk.app.services.export import OutputStore  # noqa: E402
from legalrisk.app.services.sweeps import load_presets, run_sweep  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=str, help="Output dir for figure CSVs", default=str(ROOT / "out" / "figures"))
    ap.add_argument("--preset", type=str, default="figures", help="Preset name in data/figure_grids.yaml")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    presets = load_presets()
    if args.preset not in presets:
        print(f"Unknown preset {args.preset!r}; choose from {sorted(presets)}", file=sys.stderr)
        sys.exit(2)
    store = OutputStore(args.out, {"preset": args.preset})
    errors = store.path("errors.csv")
    if errors.exists():
        errors.unlink()
    for grid in presets[args.preset]:
        frames = run_sweep(grid, store)
        for name, frame in frames.items():
            print(f"Wrote {len(frame)} rows to {store.path(name)}")


if __name__ == "__main__":
    main()
