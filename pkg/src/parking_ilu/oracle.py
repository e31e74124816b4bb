"""Known-intensity solution of the parking problem.

The threshold rule ``tau_b`` takes the first free lot strictly after ``b``.
Everything here is a deterministic function of an ``IntensityModel``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import (
    DEFAULT_TOLERANCES,
    NumericalError,
    Tolerances,
    bisect_decreasing,
    integrate_interval,
    integrate_to_infinity,
)
from .intensity import ConstantIntensity, EnvironmentParams, IntensityModel

__all__ = [
    "ClassConsistencyError",
    "OracleResult",
    "tail_mean",
    "optimal_threshold",
    "expected_cost",
    "optimality_gap",
    "gap_second_derivative",
    "sup_gap_second_derivative",
    "class_sup",
    "gap_function",
    "constant_gap",
]

LN2 = math.log(2.0)


class ClassConsistencyError(NumericalError):
    """The threshold equation has no root in ``[S, 0]``; impossible inside M(L)."""


@dataclass(frozen=True)
class OracleResult:
    b_star: float
    expected_cost_at_star: float
    tail_mean: float
    residual: float


def _initial_horizon(model: IntensityModel) -> float:
    return 8.0 / model.env.L_low


def _check_threshold(model: IntensityModel, b: float) -> float:
    b = float(b)
    if not (model.env.S <= b <= 0.0):
        raise ValueError(f"threshold {b} outside [S, 0] = [{model.env.S}, 0]")
    return b


def tail_mean(model: IntensityModel, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Expected position of the first free lot after the target, ``E(tau_0)``."""
    L_low = model.env.L_low
    return integrate_to_infinity(
        lambda y: math.exp(-float(model._cumulative(y))),
        0.0,
        lambda Y: math.exp(-L_low * Y) / L_low,
        _initial_horizon(model),
        tol.quad_tol,
        tol.tail_tol,
    )


def _approach_mass(model: IntensityModel, b: float, quad_tol: float) -> float:
    """``int_b^0 exp(Lambda(y)) dy``."""
    return integrate_interval(lambda y: math.exp(-float(model._cumulative(y))), b, 0.0, quad_tol)


def optimal_threshold(model: IntensityModel, tol: Tolerances = DEFAULT_TOLERANCES) -> OracleResult:
    """Solve the balance equation for the optimal threshold by bisection on ``[S, 0]``."""
    S = model.env.S
    mean0 = tail_mean(model, tol)

    def F(b):
        return _approach_mass(model, b, tol.quad_tol) - mean0

    f_S = F(S)
    if f_S < 0:
        raise ClassConsistencyError(
            f"E(tau_0) = {mean0:.6g} exceeds the approach mass {f_S + mean0:.6g} at S; "
            f"{model!r} is not a member of M(L)"
        )
    b_star, residual = bisect_decreasing(F, S, 0.0, tol.root_tol, tol.root_width)
    cost = expected_cost(model, b_star, tol)
    return OracleResult(b_star=b_star, expected_cost_at_star=cost, tail_mean=mean0, residual=residual)


def expected_cost(model: IntensityModel, b: float, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """``E|tau_b|`` from the density of the first jump after ``b``.

    Integrates ``-y lambda(y) exp(-int_b^y lambda)`` over ``[b, 0]`` and
    ``y lambda(y) exp(-int_b^y lambda)`` over ``[0, inf)``.
    """
    b = _check_threshold(model, b)
    A_b = float(model._cumulative(b))
    L, L_low = model.env.L, model.env.L_low

    def density_moment(y):
        return y * float(model._rate(y)) * math.exp(A_b - float(model._cumulative(y)))

    before = -integrate_interval(density_moment, b, 0.0, tol.quad_tol)

    def tail(Y):
        # int_Y^inf y L exp(-L_low (y - b)) dy
        return L * math.exp(L_low * b - L_low * Y) * (Y / L_low + 1.0 / L_low**2)

    after = integrate_to_infinity(density_moment, 0.0, tail, _initial_horizon(model), tol.quad_tol, tol.tail_tol)
    return before + after


def constant_gap(rate: float, b):
    """Closed-form optimality gap for a constant intensity."""
    b = np.asarray(b, dtype=float)
    out = (2.0 * np.exp(rate * b) - 1.0) / rate - b - LN2 / rate
    return float(out) if out.ndim == 0 else out


def optimality_gap(
    model: IntensityModel,
    b: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
    oracle: Optional[OracleResult] = None,
) -> float:
    """``Delta(b) = E|tau_b| - E|tau_{b*}|``, clamped to 0 inside the numerical noise floor."""
    b = _check_threshold(model, b)
    if isinstance(model, ConstantIntensity):
        gap = constant_gap(model.rate, b)
    else:
        if oracle is None:
            oracle = optimal_threshold(model, tol)
        gap = expected_cost(model, b, tol) - oracle.expected_cost_at_star
    if abs(gap) <= tol.gap_clamp:
        return 0.0
    if gap < 0:
        raise NumericalError(f"negative optimality gap {gap:.3g} at b={b}")
    return gap


def gap_second_derivative(model: IntensityModel, b: float, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Second derivative of the optimality gap.

    With ``g(b) = b + E|tau_b|`` (the bracket that vanishes at the optimum)
    this is ``lambda'(b) g(b) + lambda(b) (1 + lambda(b) g(b))``.
    """
    b = _check_threshold(model, b)
    g = b + expected_cost(model, b, tol)
    lam = float(model._rate(b))
    return float(model._slope(b)) * g + lam * (1.0 + lam * g)


def sup_gap_second_derivative(model: IntensityModel, tol: Tolerances = DEFAULT_TOLERANCES,
                              grid_step: Optional[float] = None) -> tuple[float, float]:
    """Largest second derivative of the gap on a grid over ``[S, 0]``; returns ``(value, argmax)``."""
    S = model.env.S
    step = grid_step if grid_step is not None else 1e-3 * abs(S)
    n = int(round(abs(S) / step))
    grid = np.linspace(S, 0.0, n + 1)
    if isinstance(model, ConstantIntensity):
        values = 2.0 * model.rate * np.exp(model.rate * grid)
    else:
        values = _second_derivative_on_grid(model, grid, tol)
    i = int(np.argmax(values))
    return float(values[i]), float(grid[i])


def _second_derivative_on_grid(model, grid, tol):
    # E|tau_b| = -b + exp(-Lambda(b)) (E tau_0 - int_b^0 exp(Lambda)) lets one
    # cumulative pass replace a quadrature per grid point
    mean0 = tail_mean(model, tol)
    mass = _cumulative_mass(model, grid, tol.quad_tol)
    Lam = -model._cumulative(grid)
    g = np.exp(-Lam) * (mean0 - mass)
    lam = model._rate(grid)
    return model._slope(grid) * g + lam * (1.0 + lam * g)


def _cumulative_mass(model, grid, quad_tol):
    """``int_b^0 exp(Lambda)`` at every point of an increasing grid ending at 0."""
    f = lambda y: math.exp(-float(model._cumulative(y)))
    pieces = np.array([integrate_interval(f, lo, hi, quad_tol / len(grid))
                       for lo, hi in zip(grid[:-1], grid[1:])])
    mass = np.zeros_like(grid)
    mass[:-1] = np.cumsum(pieces[::-1])[::-1]
    return mass


def class_sup(env: EnvironmentParams) -> float:
    """Certified upper bound on the gap's second derivative over all of M(L) and ``[S, 0]``.

    The bracket ``g(b) = exp(-Lambda(b)) E(tau_0) - int_b^0 exp(Lambda(y) - Lambda(b)) dy``
    lies in ``[-|S|, 1/L_low]``; with ``lambda, |lambda'| <= L`` each term is
    maximised separately.
    """
    S_abs, L, L_low = abs(env.S), env.L, env.L_low
    g_abs = max(S_abs, 1.0 / L_low)
    return L * g_abs + L + L**2 / L_low


def gap_function(model: IntensityModel, tol: Tolerances = DEFAULT_TOLERANCES,
                 oracle: Optional[OracleResult] = None, n_grid: int = 4001) -> Callable:
    """Vectorised ``Delta`` on ``[S, 0]`` for scoring many thresholds.

    Constant intensities use the closed form; other families interpolate a
    cubic spline through exact values on an ``n_grid`` point grid.
    """
    if isinstance(model, ConstantIntensity):
        rate = model.rate

        def gap(b):
            return np.maximum(constant_gap(rate, b), 0.0)

        return gap
    if oracle is None:
        oracle = optimal_threshold(model, tol)
    grid = np.linspace(model.env.S, 0.0, n_grid)
    mass = _cumulative_mass(model, grid, tol.quad_tol)
    Lam = -model._cumulative(grid)
    cost = -grid + np.exp(-Lam) * (oracle.tail_mean - mass)
    spline = CubicSpline(grid, cost - oracle.expected_cost_at_star)

    def gap(b):
        out = np.maximum(spline(np.asarray(b, dtype=float)), 0.0)
        return float(out) if out.ndim == 0 else out

    return gap
