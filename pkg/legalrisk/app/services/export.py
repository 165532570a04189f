from __future__ import annotations

import io
from pathlib import Path
from typing import Dict, Mapping, Optional

import pandas as pd
from pydantic import BaseModel

from legalrisk.app.core.settings import settings


def header_block(meta: Mapping[str, object]) -> str:
    return "".join(f"# {key}={value}\n" for key, value in meta.items())


def render_csv(frame: pd.DataFrame, meta: Optional[Mapping[str, object]] = None) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=settings.csv_float_format, lineterminator="\n")
    return header_block(meta or {}) + buffer.getvalue()


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


class OutputStore:
    """Directory of run outputs; CSVs carry a ``# key=value`` header, JSON a ``meta`` field."""

    def __init__(self, root: Optional[str | Path] = None, meta: Optional[Dict[str, str]] = None):
        self.root = Path(root or settings.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.meta: Dict[str, str] = dict(meta or {})

    def path(self, name: str) -> Path:
        return self.root / name

    def write_csv(self, name: str, frame: pd.DataFrame, extra: Optional[Mapping[str, object]] = None) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {**self.meta, **dict(extra or {})}
        path.write_text(render_csv(frame, meta), encoding="utf-8")
        return path

    def write_json(self, name: str, record: BaseModel) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        if hasattr(record, "meta") and not record.meta:
            record = record.model_copy(update={"meta": dict(self.meta)})
        path.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path
