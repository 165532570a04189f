#!/usr/bin/env python3
"""Launcher for the ``legalrisk`` CLI.

Usage:
  python scripts/run_legalrisk.py solve --config data/configs/figure1.cfg --out out/fig1
  python scripts/run_legalrisk.py sweep --grid figures --out out/figures
  python scripts/run_legalrisk.py simulate --config data/configs/benchmark_unit.cfg --paths 100000 --seed 7
  python scripts/run_legalrisk.py oracle --config data/configs/figure1.cfg --cells 50 --graded
  python scripts/run_legalrisk.py verify --suite all
"""
import sys
from pathlib import Path

from dotenv import load_dotenv

ROOT = Path(__file__).resolve().parents[1]

if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

load_dotenv(ROOT / ".env", override=False)

from legalrisk.app.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
