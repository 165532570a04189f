"""Incomplete Beta, the ``g_v`` transform behind the superlinear closed form, and shared
root-finding / quadrature helpers."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special

from legalrisk.app.core.errors import BracketError, DomainError, QuadratureError
from legalrisk.app.core.model import ArrayLike, MarketConfig, RegulatoryRegime
from legalrisk.app.core.settings import settings

logger = logging.getLogger(__name__)

BISECTION_MAX_ITER = 200
QUAD_LIMIT = 500
QUAD_RETRY_LIMIT = 5000
_DOMAIN_SLACK = 1e-12


def incomplete_beta(x: ArrayLike, a: float, b: float) -> ArrayLike:
    """Unregularised ``B_x(a, b) = ∫₀ˣ u^{a-1}(1-u)^{b-1} du``.

    ``scipy.special.betainc`` evaluates the regularised ratio by continued fraction with the
    usual ``x > (a+1)/(a+b+2)`` symmetry switch; multiplying by ``B(a, b)`` undoes the
    normalisation.
    """
    arr = np.asarray(x, dtype=float)
    if a <= 0 or b <= 0:
        raise DomainError(f"incomplete_beta needs a, b > 0 (got a={a}, b={b})")
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise DomainError("incomplete_beta argument outside [0, 1]")
    value = special.betainc(a, b, arr) * special.beta(a, b)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class GvParams:
    delta: float
    c2: float
    p: float
    alpha: float

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.c2 <= 0 or self.p < 1 or self.alpha <= 1:
            raise DomainError(
                f"GvParams needs delta>0, c2>0, p>=1, alpha>1 (got {self.delta}, {self.c2}, {self.p}, {self.alpha})"
            )

    @classmethod
    def from_model(cls, regime: RegulatoryRegime, market: MarketConfig) -> "GvParams":
        return cls(abs(market.delta), regime.c2, regime.p, regime.alpha)

    @property
    def q(self) -> float:
        return self.p * self.alpha

    @property
    def x_bar(self) -> float:
        return (self.delta / self.c2) ** self.p

    @property
    def scale(self) -> float:
        return self.p * self.delta ** (self.p * (self.alpha + 1.0)) / self.c2**self.p


def _check_state(x: np.ndarray, params: GvParams) -> np.ndarray:
    x_bar = params.x_bar
    if np.any(x < -_DOMAIN_SLACK * x_bar) or np.any(x > x_bar * (1.0 + _DOMAIN_SLACK)):
        raise DomainError("g_v argument outside [0, x_bar]")
    return np.clip(x, 0.0, x_bar)


def _relative_position(x: np.ndarray, params: GvParams) -> np.ndarray:
    return np.clip(params.c2 * x ** (1.0 / params.p) / params.delta, 0.0, 1.0)


def g_v(x: ArrayLike, params: GvParams) -> ArrayLike:
    """``∫_x^{x̄} (Δ - C₂ y^{1/p})^{pα} dy`` in Beta form.

    The Beta difference ``B_1(p, q+1) - B_z(p, q+1)`` equals ``B_{1-z}(q+1, p)`` by reflection;
    the reflected form keeps full relative accuracy near ``x̄``.
    """
    arr = _check_state(np.asarray(x, dtype=float), params)
    gap = 1.0 - _relative_position(arr, params)
    value = params.scale * incomplete_beta(np.clip(gap, 0.0, 1.0), params.q + 1.0, params.p)
    return float(value) if np.ndim(value) == 0 else value


def g_v_beta_difference(x: ArrayLike, params: GvParams) -> ArrayLike:
    arr = _check_state(np.asarray(x, dtype=float), params)
    z = _relative_position(arr, params)
    a, b = params.p, params.q + 1.0
    value = params.scale * (special.beta(a, b) - incomplete_beta(z, a, b))
    return float(value) if np.ndim(value) == 0 else value


def g_v_quadrature(x: float, params: GvParams) -> float:
    x = float(_check_state(np.asarray(x, dtype=float), params))
    integrand = lambda y: max(params.delta - params.c2 * y ** (1.0 / params.p), 0.0) ** params.q
    value, _ = integrate.quad(integrand, x, params.x_bar, epsabs=0.0, epsrel=1e-13, limit=400)
    return value


def g_v_of_gap(gap: ArrayLike, params: GvParams) -> ArrayLike:
    """``g_v`` as a function of the price gap ``r = Δ - C₂x^{1/p}`` in ``[0, Δ]``."""
    u = np.clip(np.asarray(gap, dtype=float) / params.delta, 0.0, 1.0)
    value = params.scale * incomplete_beta(u, params.q + 1.0, params.p)
    return float(value) if np.ndim(value) == 0 else value


def gap_inverse(y: ArrayLike, params: GvParams) -> ArrayLike:
    """``r`` with ``g_v_of_gap(r) = y``, through the inverse regularised incomplete Beta."""
    a, b = params.q + 1.0, params.p
    full = params.scale * special.beta(a, b)
    ratio = np.clip(np.asarray(y, dtype=float) / full, 0.0, 1.0)
    root = params.delta * special.betaincinv(a, b, ratio)
    return float(root) if np.ndim(root) == 0 else root


def g_v_inverse(y: ArrayLike, params: GvParams) -> ArrayLike:
    arr = np.asarray(y, dtype=float)
    g0 = g_v(0.0, params)
    slack = _DOMAIN_SLACK * max(1.0, g0)
    if np.any(arr < -slack) or np.any(arr > g0 + slack):
        raise DomainError("g_v_inverse argument outside [0, g_v(0)]")
    gap = gap_inverse(np.clip(arr, 0.0, g0), params)
    x = ((params.delta - np.asarray(gap)) / params.c2) ** params.p
    x = np.clip(x, 0.0, params.x_bar)
    return float(x) if np.ndim(y) == 0 else x


def find_root_monotone(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = BISECTION_MAX_ITER,
) -> float:
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={f_lo:.3g}, {f_hi:.3g}")
    root = optimize.bisect(f, lo, hi, xtol=tol, maxiter=max_iter, disp=False)
    return float(root)


def expand_bracket(
    f: Callable[[float], float],
    start: float,
    factor: float = 4.0,
    max_steps: int = 60,
) -> Tuple[float, float]:
    """Geometric search for a sign change of ``f`` around a positive ``start``."""
    lo, hi = start / factor, start * factor
    f_lo, f_hi = f(lo), f(hi)
    for _ in range(max_steps):
        if np.sign(f_lo) != np.sign(f_hi):
            return lo, hi
        if abs(f_lo) < abs(f_hi):
            lo, f_lo = lo / factor, f(lo / factor)
        else:
            hi, f_hi = hi * factor, f(hi * factor)
    raise BracketError(f"no sign change found around {start}")


def integrate_segments(
    fn: Callable[[float], float],
    segments: Iterable[Tuple[float, float]],
    tol: Optional[float] = None,
) -> float:
    """Adaptive Gauss–Kronrod on each segment; integrands must be finite on every segment."""
    tol = settings.quad_tol if tol is None else tol
    total = 0.0
    for a, b in segments:
        samples = np.array([fn(a), fn(0.5 * (a + b)), fn(b - 1e-12 * (b - a))])
        if not np.all(np.isfinite(samples)):
            raise QuadratureError(f"integrand not finite on [{a}, {b}]")
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=QUAD_LIMIT)
            except integrate.IntegrationWarning as exc:
                logger.warning("quad tolerance not met on [%s, %s], retrying with limit=%d: %s", a, b, QUAD_RETRY_LIMIT, exc)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    value, _ = integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=QUAD_RETRY_LIMIT)
        if not np.isfinite(value):
            raise QuadratureError(f"quadrature returned {value} on [{a}, {b}]")
        total += value
    return total
