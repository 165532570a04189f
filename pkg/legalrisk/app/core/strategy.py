"""Trading-intensity trajectories ``θ(t)`` on ``[0, T)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from legalrisk.app.core.model import ArrayLike

GRADED_FRACTION = 0.01
# narrowest graded segment, relative to T
GRADED_MIN_WIDTH = 1e-9
GRADED_LEVELS = int(math.floor(math.log2(GRADED_FRACTION / GRADED_MIN_WIDTH)))

Segment = Tuple[float, float]


class StrategyPath:
    horizon: float
    breakpoints: Tuple[float, ...] = ()
    singular_at_end: bool = False

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: ArrayLike) -> ArrayLike:
        values = self.evaluate(np.asarray(t, dtype=float))
        return float(values) if np.ndim(values) == 0 else values

    def scaled(self, factor: float) -> "ClosedFormStrategy":
        return ClosedFormStrategy(
            lambda t: factor * self.evaluate(t),
            self.horizon,
            breakpoints=self.breakpoints,
            singular_at_end=self.singular_at_end,
        )

    def segments(self, t_end: float | None = None) -> List[Segment]:
        """Integration segments on ``[0, t_end]``.

        Breakpoints split the interval. A strategy that blows up at ``T`` gets a geometric
        mesh over the last ``GRADED_FRACTION`` of the horizon, ratio 1/2, ``GRADED_LEVELS``
        levels; the remaining sliver next to ``T`` is left to ``tail``.
        """
        horizon = self.horizon
        end = horizon if t_end is None else min(float(t_end), horizon)
        cuts = {0.0, end}
        cuts.update(bp for bp in self.breakpoints if 0.0 < bp < end)
        if self.singular_at_end and end >= horizon:
            width = GRADED_FRACTION * horizon
            graded = [horizon - width * 0.5**k for k in range(GRADED_LEVELS + 1)]
            cuts.discard(end)
            cuts.update(g for g in graded if g > 0.0)
        ordered = sorted(cuts)
        return [(a, b) for a, b in zip(ordered[:-1], ordered[1:]) if b > a]

    def tail(self, t_end: float | None = None) -> Optional[Segment]:
        """The sliver next to a singular ``T`` that ``segments`` leaves out, else None."""
        end = self.horizon if t_end is None else min(float(t_end), self.horizon)
        if not self.singular_at_end or end < self.horizon:
            return None
        return self.horizon - GRADED_FRACTION * self.horizon * 0.5**GRADED_LEVELS, self.horizon


class ClosedFormStrategy(StrategyPath):
    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        horizon: float,
        *,
        breakpoints: Sequence[float] = (),
        singular_at_end: bool = False,
    ):
        self._fn = fn
        self.horizon = float(horizon)
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.singular_at_end = singular_at_end

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(t), dtype=float) * np.ones_like(t)


class PiecewiseConstantStrategy(StrategyPath):
    def __init__(self, edges: Sequence[float], values: Sequence[float]):
        self.edges = np.asarray(edges, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.edges.size != self.values.size + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if self.edges[0] != 0.0:
            raise ValueError("edges must start at t=0")
        self.horizon = float(self.edges[-1])
        self.breakpoints = tuple(float(e) for e in self.edges[1:-1])

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, t, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def constant_strategy(value: float, horizon: float) -> ClosedFormStrategy:
    return ClosedFormStrategy(lambda t: np.full_like(t, value, dtype=float), horizon)
