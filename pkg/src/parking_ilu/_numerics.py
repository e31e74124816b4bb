"""Quadrature, truncated tail integrals and bisection shared by the oracle and bounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

from scipy import integrate


class NumericalError(RuntimeError):
    """A numerical routine could not meet its tolerance."""


@dataclass(frozen=True)
class Tolerances:
    quad_tol: float = 1e-10
    root_tol: float = 1e-10
    tail_tol: float = 1e-12
    indifference_tol: float = 1e-6
    root_width: float = 1e-12

    def __post_init__(self):
        for name in ("quad_tol", "root_tol", "tail_tol", "indifference_tol", "root_width"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"tolerance {name} must be positive and finite, got {value!r}")

    @property
    def gap_clamp(self) -> float:
        return 2.0 * (self.root_tol + self.quad_tol)


DEFAULT_TOLERANCES = Tolerances()


def integrate_interval(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Long intervals are cut into unit pieces so the adaptive rule never has to
    resolve an exponential decay across dozens of length scales at once.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if a > b:
        a, b = b, a
        sign = -1.0
    n_pieces = max(1, int(math.ceil(b - a)))
    edges = [a + (b - a) * k / n_pieces for k in range(n_pieces + 1)]
    edges[-1] = b
    total = 0.0
    piece_tol = tol / n_pieces
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, err = integrate.quad(f, lo, hi, epsabs=piece_tol, epsrel=0.0, limit=200)
            except integrate.IntegrationWarning:
                # roundoff floor reached; accept only if the error estimate still fits
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    value, err = integrate.quad(f, lo, hi, epsabs=piece_tol, epsrel=0.0, limit=200)
                if err > 10 * piece_tol + 1e-14 * abs(value):
                    raise NumericalError(f"quadrature on [{lo}, {hi}] stalled at error {err:.3g}")
        total += value
    return sign * total


def integrate_to_infinity(
    f: Callable[[float], float],
    start: float,
    tail_bound: Callable[[float], float],
    horizon: float,
    quad_tol: float,
    tail_tol: float,
) -> float:
    """Integrate ``f`` over ``[start, inf)``.

    ``tail_bound(Y)`` must bound ``|int_Y^inf f|``; the horizon is doubled until
    that bound drops below ``tail_tol``.
    """
    upper = start + horizon
    while tail_bound(upper) >= tail_tol:
        horizon *= 2.0
        upper = start + horizon
        if horizon > 1e8:
            raise NumericalError("tail bound never dropped below tail_tol")
    return integrate_interval(f, start, upper, quad_tol)


def bisect_decreasing(
    F: Callable[[float], float],
    lo: float,
    hi: float,
    ftol: float,
    xtol: float,
    max_iter: int = 400,
) -> tuple[float, float]:
    """Root of a strictly decreasing ``F`` with ``F(lo) >= 0 >= F(hi)``.

    Stops once ``|F| <= ftol`` or the bracket is narrower than ``xtol``.
    Returns ``(root, |F(root)|)``.
    """
    f_lo = F(lo)
    f_hi = F(hi)
    if f_lo < 0 or f_hi > 0:
        raise NumericalError(f"root not bracketed: F({lo})={f_lo}, F({hi})={f_hi}")
    best, best_val = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    for _ in range(max_iter):
        if abs(best_val) <= ftol or hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = F(mid)
        if abs(f_mid) < abs(best_val):
            best, best_val = mid, f_mid
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return best, abs(best_val)
