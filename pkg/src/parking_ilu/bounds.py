"""Explicit constants of the regret analysis.

Upper side: the mean-square-error coefficient of the full-information
threshold estimate and the class-wide logarithmic regret constant.
Lower side: the Bayesian Cramer-Rao (van Trees) constant for estimating a
constant intensity under a scaled Beta(3, 3) prior.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ._numerics import DEFAULT_TOLERANCES, Tolerances, integrate_interval, integrate_to_infinity
from .intensity import ClassEmptyError, EnvironmentParams, IntensityModel
from .oracle import class_sup, optimal_threshold, tail_mean

__all__ = [
    "BoundReport",
    "MseBound",
    "UpperBound",
    "LowerBound",
    "var_tau0",
    "grid_count",
    "mse_bound_bhat",
    "upper_bound_constant",
    "lower_bound_constant",
    "beta_prior_density",
    "prior_information",
    "van_trees_sum",
    "bound_report",
]

LN2 = math.log(2.0)
BETA33_INFORMATION = 40.0


def var_tau0(model: IntensityModel, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Variance of the first lot after the target, via ``E(tau_0^2) = 2 int_0^inf u P(tau_0 > u) du``."""
    L_low = model.env.L_low
    second = 2.0 * integrate_to_infinity(
        lambda u: u * math.exp(-float(model._cumulative(u))),
        0.0,
        lambda Y: math.exp(-L_low * Y) * (Y / L_low + 1.0 / L_low**2),
        8.0 / L_low,
        tol.quad_tol,
        tol.tail_tol,
    )
    return second - tail_mean(model, tol) ** 2


def grid_count(env: EnvironmentParams) -> int:
    """Smallest ``m >= 0`` with ``S + m / (2L) >= 0``."""
    step = 1.0 / (2.0 * env.L)
    m = max(0, math.ceil(abs(env.S) / step))
    while m > 0 and env.S + (m - 1) * step >= 0:
        m -= 1
    while env.S + m * step < 0:
        m += 1
    return m


@dataclass(frozen=True)
class MseBound:
    """``E(b_hat_n - b*)^2 <= coefficient / n`` and its parts."""

    coefficient: float
    epsilon: float
    M_grid: int
    var_tau0: float
    tail_mean: float
    b_star: float
    Lambda_S: float
    ball_term: float
    grid_term: float
    variance_term: float
    window_term: float

    def bound(self, n):
        return self.coefficient / np.asarray(n, dtype=float)


def mse_bound_bhat(env: EnvironmentParams, model: IntensityModel,
                   tol: Tolerances = DEFAULT_TOLERANCES) -> MseBound:
    """Assemble the ``1/n`` coefficient bounding the threshold estimate's MSE.

    The ball radius is fixed at half of its admissible supremum
    ``min{E(tau_0), 1, (b* - S) / (3 + 2 E(tau_0))}``.
    """
    if model.env != env:
        raise ValueError("model was built for a different environment")
    S = env.S
    oracle = optimal_threshold(model, tol)
    mean0 = oracle.tail_mean
    var0 = var_tau0(model, tol)
    Lambda_S = float(model.integrated(S))
    eps = 0.5 * min(mean0, 1.0, (oracle.b_star - S) / (3.0 + 2.0 * mean0))
    M = grid_count(env)
    window_integral = integrate_interval(
        lambda y: math.exp(-2.0 * float(model._cumulative(y))) * -float(model._cumulative(y)),
        S, 0.0, tol.quad_tol,
    )
    ball = S**2 * (4.0 * Lambda_S + var0) / eps**2
    grid = S**2 * 4.0 * Lambda_S * (M + 1)
    variance = 2.0 * var0
    window = 8.0 * abs(S) * window_integral
    return MseBound(
        coefficient=ball + grid + variance + window,
        epsilon=eps, M_grid=M, var_tau0=var0, tail_mean=mean0, b_star=oracle.b_star,
        Lambda_S=Lambda_S, ball_term=ball, grid_term=grid, variance_term=variance, window_term=window,
    )


@dataclass(frozen=True)
class UpperBound:
    L_low: float
    b_star_min: float
    c_upper: float
    var_tau0_bound: float
    radius: float
    D: float
    waiting_bound: float
    C_upper: float

    def regret_bound(self, T):
        return self.C_upper * np.log(np.asarray(T, dtype=float) + 1.0)

    def regret_bound_harmonic(self, T):
        """Same bound with the record-sum kept as ``H_T <= 1 + ln T`` instead of ``ln(T + 1)``."""
        T = np.asarray(T, dtype=float)
        lead = (1.0 / self.L_low) / LN2
        per_record = self.waiting_bound * 0.5 * self.c_upper * self.D
        return lead * np.log(T + 1.0) + per_record * (1.0 + np.log(T))


def upper_bound_constant(env: EnvironmentParams) -> UpperBound:
    """Constant ``C`` with ``sup_lambda regret(T) <= C ln(T + 1)`` over M(L).

    The class-wide variance bound of ``tau_0`` is taken as ``2 / L_low^2``
    (second moment of an exponential with the smallest admissible rate), and
    the curvature constant is the certified bound from :func:`class_sup`.
    """
    env.require_nonempty()
    S_abs, L, L_low = abs(env.S), env.L, env.L_low
    c_up = class_sup(env)
    var_bound = 2.0 / L_low**2
    radius = min(1.0 / L, (S_abs - LN2 / L_low) / (3.0 + 2.0 / L_low))
    D = (
        env.S**2 * (4.0 * L * S_abs + var_bound) / radius**2
        + 2.0 * var_bound
        + 8.0 * S_abs**3 * L * math.exp(2.0 * S_abs * L)
        + S_abs**3 * 4.0 * L * (2.0 * S_abs * L + 2.0)
    )
    waiting = math.exp(L * S_abs)
    C = (1.0 / L_low) / LN2 + waiting * 0.5 * c_up * D
    return UpperBound(
        L_low=L_low, b_star_min=env.b_star_min, c_upper=c_up, var_tau0_bound=var_bound,
        radius=radius, D=D, waiting_bound=waiting, C_upper=C,
    )


def beta_prior_density(x, a: float, b: float):
    """Beta(3, 3) density rescaled to ``[a, b]``; zero outside."""
    x = np.asarray(x, dtype=float)
    inside = (x >= a) & (x <= b)
    out = np.where(inside, 30.0 * (x - a) ** 2 * (b - x) ** 2 / (b - a) ** 5, 0.0)
    return float(out) if out.ndim == 0 else out


def prior_information(a: float, b: float, tol: float = 1e-12) -> float:
    """Fisher information ``int q'^2 / q`` of the rescaled Beta(3, 3) prior, by quadrature."""
    w = b - a

    def slope(x):
        return 60.0 * (x - a) * (b - x) * ((b - x) - (x - a)) / w**5

    def integrand(x):
        # Gauss-Kronrod nodes are interior, so q > 0 wherever this is evaluated
        return slope(x) ** 2 / beta_prior_density(x, a, b)

    return integrate_interval(integrand, a, b, tol)


def van_trees_sum(T: int, prior_info: float, a: float) -> float:
    """``sum_{n=1}^T 1 / (I_q + n / a)``."""
    n = np.arange(1, int(T) + 1, dtype=float)
    return float(np.sum(1.0 / (prior_info + n / a)))


@dataclass(frozen=True)
class LowerBound:
    a: float
    b: float
    a_scaled: float
    b_scaled: float
    curvature_min: float
    c_tilde: float
    I_q: float
    fisher_unit: float
    C_prime: float
    C_lower: float

    def minimax_bound(self, T):
        return self.C_lower * np.log(np.asarray(T, dtype=float))


def lower_bound_constant(env: EnvironmentParams) -> LowerBound:
    """Constant ``C_lower`` with minimax regret ``>= C_lower ln(T)``.

    Constant intensities ``lambda in [a, b] = [ln(2)/|S| + 1/L, L]`` are
    estimated from window counts ``Poisson(|S| lambda)``.  The information
    calculation runs on the rescaled parameter ``|S| lambda``; ``C_prime`` is
    reported on that scale and converted back by the factor ``1 / S^2``.
    """
    a, b = env.L_low, env.L
    if a >= b:
        raise ClassEmptyError(f"constant sub-class is empty: a = {a:.6g} >= b = {b:.6g}")
    S = env.S
    S_abs = abs(S)
    # 2 lam exp(lam S) is unimodal in lam with its peak at 1/|S|, so the min sits at an end
    candidates = [a, b]
    if a < 1.0 / S_abs < b:
        candidates.append(1.0 / S_abs)
    curvature = min(2.0 * lam * math.exp(lam * S) for lam in candidates)
    c_tilde = curvature * LN2 / b**2
    a_s, b_s = S_abs * a, S_abs * b
    I_q = BETA33_INFORMATION / (b_s - a_s) ** 2
    fisher_unit = 1.0 / a_s
    C_prime = 1.0 / (I_q + fisher_unit)
    C_lower = c_tilde * C_prime / S**2
    return LowerBound(
        a=a, b=b, a_scaled=a_s, b_scaled=b_s, curvature_min=curvature, c_tilde=c_tilde,
        I_q=I_q, fisher_unit=fisher_unit, C_prime=C_prime, C_lower=C_lower,
    )


@dataclass(frozen=True)
class BoundReport:
    L_low: float
    c_upper: float
    D: float
    C_upper: float
    epsilon: Optional[float]
    M_grid: int
    var_tau0: Optional[float]
    mse_coefficient: Optional[float]
    a: float
    b: float
    fisher_unit: float
    I_q: float
    C_prime: float
    c_tilde: float
    C_lower: float

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(env: EnvironmentParams, model: Optional[IntensityModel] = None,
                 tol: Tolerances = DEFAULT_TOLERANCES) -> BoundReport:
    up = upper_bound_constant(env)
    low = lower_bound_constant(env)
    mse = mse_bound_bhat(env, model, tol) if model is not None else None
    return BoundReport(
        L_low=up.L_low, c_upper=up.c_upper, D=up.D, C_upper=up.C_upper,
        epsilon=mse.epsilon if mse else None, M_grid=grid_count(env),
        var_tau0=mse.var_tau0 if mse else None,
        mse_coefficient=mse.coefficient if mse else None,
        a=low.a, b=low.b, fisher_unit=low.fisher_unit, I_q=low.I_q,
        C_prime=low.C_prime, c_tilde=low.c_tilde, C_lower=low.C_lower,
    )
