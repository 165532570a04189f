"""JSON output records. ``meta`` carries the resolved config, seed and command that produced
the record."""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class SolutionRecord(BaseModel):
    scenario: str
    solver: str
    gamma: float
    limiting_price: float
    objective: float
    diagnostics: Dict[str, float] = Field(default_factory=dict)
    meta: Dict[str, str] = Field(default_factory=dict)


class SimulationRecord(BaseModel):
    num_paths: int
    steps: int
    seed: int
    pricing: str
    mean_net_payoff: float
    stderr: float
    prosecution_frequency: float
    mean_survival: float
    truncated_at: Optional[float] = None
    deterministic_objective: Optional[float] = None
    meta: Dict[str, str] = Field(default_factory=dict)


class OracleRecord(BaseModel):
    scenario: str
    cells: int
    restarts: int
    seed: int
    best_restart: int
    objective: float
    converged: bool
    theta_max: float
    comparison: Optional[Dict[str, float]] = None
    meta: Dict[str, str] = Field(default_factory=dict)


class CheckResult(BaseModel):
    suite: str
    name: str
    passed: bool
    observed: Optional[float] = None
    expected: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""


class VerificationReport(BaseModel):
    suites: List[str]
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)
    meta: Dict[str, str] = Field(default_factory=dict)
