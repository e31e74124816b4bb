"""Intensity functions of the free-lot arrival process and the environment class.

Positions live on ``[S, inf)`` with the target at 0.  ``cumulative(y)`` is the
signed integral ``int_0^y lambda(u) du``; the integrated intensity seen by the
learner on the approach window is ``integrated(y) = -cumulative(y)`` for
``y <= 0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import DEFAULT_TOLERANCES, integrate_interval

__all__ = [
    "ClassEmptyError",
    "DomainError",
    "EnvironmentParams",
    "IntensityModel",
    "ConstantIntensity",
    "SinusoidalIntensity",
    "TanhRampIntensity",
    "CustomIntensity",
    "ValidationReport",
    "validate_class",
    "parse_intensity",
]


class DomainError(ValueError):
    """A position left of the street start ``S`` was requested."""


class ClassEmptyError(ValueError):
    """The environment class M(L) contains no intensity."""


@dataclass(frozen=True)
class EnvironmentParams:
    """Street start ``S < 0`` and class bound ``L > 1``."""

    S: float
    L: float

    def __post_init__(self):
        S, L = float(self.S), float(self.L)
        if not (math.isfinite(S) and math.isfinite(L)):
            raise ValueError(f"S and L must be finite, got S={self.S!r}, L={self.L!r}")
        if S >= 0:
            raise ValueError(f"street start S must be negative, got {S}")
        if L <= 1:
            raise ValueError(f"class bound L must exceed 1, got {L}")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)

    @property
    def L_low(self) -> float:
        """Lower intensity bound ``ln(2)/|S| + 1/L`` of the class."""
        return math.log(2.0) / abs(self.S) + 1.0 / self.L

    @property
    def is_nonempty(self) -> bool:
        return self.L_low < self.L

    @property
    def b_star_min(self) -> float:
        """Leftmost optimal threshold attainable in the class."""
        return -math.log(2.0) / self.L_low

    def require_nonempty(self) -> None:
        if not self.is_nonempty:
            raise ClassEmptyError(
                f"M(L) is empty for S={self.S}, L={self.L}: lower bound {self.L_low:.6g} >= L"
            )


def _as_float_or_array(x):
    if np.ndim(x) == 0:
        return float(x)
    return np.asarray(x, dtype=float)


class IntensityModel:
    """Base class for intensity functions on ``[S, inf)``.

    Subclasses implement the unchecked vectorised kernels ``_rate``,
    ``_slope`` and optionally ``_cumulative``; the public methods add the
    domain check.  Instances are immutable.
    """

    family = "abstract"
    env: EnvironmentParams

    def _rate(self, u):
        raise NotImplementedError

    def _slope(self, u):
        raise NotImplementedError

    def _cumulative(self, y):
        # generic fallback: quadrature from 0
        f = lambda t: float(self._rate(t))
        if np.ndim(y) == 0:
            return integrate_interval(f, 0.0, float(y), self.quad_tol)
        return np.array([integrate_interval(f, 0.0, float(v), self.quad_tol) for v in np.ravel(y)]).reshape(
            np.shape(y)
        )

    quad_tol = DEFAULT_TOLERANCES.quad_tol
    has_closed_form_cumulative = False

    def _check_domain(self, u):
        if np.any(np.asarray(u) < self.env.S):
            raise DomainError(f"position below street start S={self.env.S}")
        if not np.all(np.isfinite(u)):
            raise DomainError("position must be finite")

    def evaluate(self, u):
        """Intensity ``lambda(u)``."""
        self._check_domain(u)
        return _as_float_or_array(self._rate(u))

    def derivative(self, u):
        """Slope ``lambda'(u)``."""
        self._check_domain(u)
        return _as_float_or_array(self._slope(u))

    def cumulative(self, y):
        """Signed integral ``int_0^y lambda``; negative for ``y < 0``."""
        self._check_domain(y)
        return _as_float_or_array(self._cumulative(y))

    def integrated(self, y):
        """Expected number of free lots in ``[y, 0]`` for ``y <= 0``."""
        return -self.cumulative(y)

    def analytic_bounds(self) -> Optional[tuple[float, float, float]]:
        """``(inf lambda, sup lambda, sup |lambda'|)`` over ``[S, inf)`` if known in closed form."""
        return None

    def params(self) -> dict:
        raise NotImplementedError

    def spec(self) -> str:
        args = ", ".join(repr(v) for v in self.params().values())
        return f"{self.family}({args})"

    def __repr__(self):
        return f"{type(self).__name__}({self.spec()}, S={self.env.S}, L={self.env.L})"


@dataclass(frozen=True, repr=False)
class ConstantIntensity(IntensityModel):
    rate: float
    env: EnvironmentParams
    family = "constant"
    has_closed_form_cumulative = True

    def __post_init__(self):
        _require_finite(rate=self.rate)
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def _rate(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.rate)

    def _slope(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def _cumulative(self, y):
        return self.rate * np.asarray(y, dtype=float)

    def analytic_bounds(self):
        return (self.rate, self.rate, 0.0)

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True, repr=False)
class SinusoidalIntensity(IntensityModel):
    """``lambda(u) = level + amplitude * sin(frequency * u)``."""

    level: float
    amplitude: float
    frequency: float
    env: EnvironmentParams
    family = "sinusoidal"
    has_closed_form_cumulative = True

    def __post_init__(self):
        _require_finite(level=self.level, amplitude=self.amplitude, frequency=self.frequency)
        if self.frequency <= 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.level - abs(self.amplitude) <= 0:
            raise ValueError("intensity must stay positive: need level > |amplitude|")

    def _rate(self, u):
        return self.level + self.amplitude * np.sin(self.frequency * np.asarray(u, dtype=float))

    def _slope(self, u):
        return self.amplitude * self.frequency * np.cos(self.frequency * np.asarray(u, dtype=float))

    def _cumulative(self, y):
        y = np.asarray(y, dtype=float)
        return self.level * y + (self.amplitude / self.frequency) * (1.0 - np.cos(self.frequency * y))

    def analytic_bounds(self):
        # sin sweeps [-1, 1] on every half-line, so these are attained
        b = abs(self.amplitude)
        return (self.level - b, self.level + b, b * self.frequency)

    def params(self):
        return {"level": self.level, "amplitude": self.amplitude, "frequency": self.frequency}


def _log_cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


@dataclass(frozen=True, repr=False)
class TanhRampIntensity(IntensityModel):
    """Smooth ramp from ``start`` (far left) to ``end`` (far right) around ``center``."""

    start: float
    end: float
    center: float
    width: float
    env: EnvironmentParams
    family = "tanh_ramp"
    has_closed_form_cumulative = True

    def __post_init__(self):
        _require_finite(start=self.start, end=self.end, center=self.center, width=self.width)
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if min(self.start, self.end) <= 0:
            raise ValueError("ramp levels must be positive")

    def _rate(self, u):
        z = (np.asarray(u, dtype=float) - self.center) / self.width
        return self.start + 0.5 * (self.end - self.start) * (1.0 + np.tanh(z))

    def _slope(self, u):
        z = (np.asarray(u, dtype=float) - self.center) / self.width
        return 0.5 * (self.end - self.start) / self.width / np.cosh(z) ** 2

    def _cumulative(self, y):
        y = np.asarray(y, dtype=float)
        w, c = self.width, self.center
        ramp = y + w * (_log_cosh((y - c) / w) - _log_cosh(-c / w))
        return self.start * y + 0.5 * (self.end - self.start) * ramp

    def analytic_bounds(self):
        # monotone ramp: extremes are the limits, slope peaks at the center
        lo_pos = self.env.S
        at_start = float(self._rate(lo_pos))
        lo = min(at_start, self.end)
        hi = max(at_start, self.end)
        if self.center >= lo_pos:
            slope = abs(self.end - self.start) / (2.0 * self.width)
        else:
            slope = abs(float(self._slope(lo_pos)))
        return (lo, hi, slope)

    def params(self):
        return {"start": self.start, "end": self.end, "center": self.center, "width": self.width}


@dataclass(frozen=True, repr=False)
class CustomIntensity(IntensityModel):
    """User-supplied rate and slope callables; checked on a grid, integrated by quadrature."""

    rate_fn: Callable
    slope_fn: Callable
    env: EnvironmentParams
    name: str = "custom"
    quad_tol: float = DEFAULT_TOLERANCES.quad_tol
    family = "custom"

    def _rate(self, u):
        return np.asarray(self.rate_fn(np.asarray(u, dtype=float)), dtype=float)

    def _slope(self, u):
        return np.asarray(self.slope_fn(np.asarray(u, dtype=float)), dtype=float)

    def params(self):
        return {"name": self.name}


def _require_finite(**values):
    for name, v in values.items():
        if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)):
            raise ValueError(f"parameter {name} must be a finite real, got {v!r}")


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    method: str  # "analytic" or "grid-verified"
    violated_property: Optional[int] = None
    witness: Optional[float] = None
    message: str = ""
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


_PROPERTY_TEXT = {
    1: "property 1 (continuous differentiability)",
    2: "property 2 (lower bound ln(2)/|S| + 1/L)",
    3: "property 3 (lambda <= L and |lambda'| <= L)",
}


def validate_class(model: IntensityModel, grid_step: Optional[float] = None) -> ValidationReport:
    """Check membership of ``model`` in the environment class M(L).

    Closed-form families are decided from their parameters; anything else is
    checked on the grid ``S, S + h, ..., S + 50|S|`` with ``h = 1e-3 |S|``
    unless ``grid_step`` is given.
    """
    env = model.env
    L_low, L = env.L_low, env.L
    bounds = model.analytic_bounds()
    if bounds is not None:
        lo, hi, slope = bounds
        details = {"inf_rate": lo, "sup_rate": hi, "sup_abs_slope": slope, "L_low": L_low, "L": L}
        if lo < L_low:
            return _fail(2, _analytic_witness(model, "min"), "analytic", details,
                         f"inf lambda = {lo:.6g} < {L_low:.6g}")
        if hi > L:
            return _fail(3, _analytic_witness(model, "max"), "analytic", details,
                         f"sup lambda = {hi:.6g} > L = {L:.6g}")
        if slope > L:
            return _fail(3, None, "analytic", details, f"sup |lambda'| = {slope:.6g} > L = {L:.6g}")
        return ValidationReport(True, "analytic", details=details, message="in M(L)")

    step = grid_step if grid_step is not None else 1e-3 * abs(env.S)
    grid = np.arange(env.S, env.S + 50.0 * abs(env.S) + 0.5 * step, step)
    rate = model._rate(grid)
    slope = model._slope(grid)
    details = {"grid_step": step, "grid_points": grid.size, "L_low": L_low, "L": L}
    if not (np.all(np.isfinite(rate)) and np.all(np.isfinite(slope))):
        bad = int(np.argmax(~(np.isfinite(rate) & np.isfinite(slope))))
        return _fail(1, float(grid[bad]), "grid-verified", details, "non-finite value or slope")
    i = int(np.argmin(rate))
    if rate[i] < L_low:
        return _fail(2, float(grid[i]), "grid-verified", details, f"lambda = {rate[i]:.6g} < {L_low:.6g}")
    i = int(np.argmax(rate))
    if rate[i] > L:
        return _fail(3, float(grid[i]), "grid-verified", details, f"lambda = {rate[i]:.6g} > L")
    i = int(np.argmax(np.abs(slope)))
    if abs(slope[i]) > L:
        return _fail(3, float(grid[i]), "grid-verified", details, f"|lambda'| = {abs(slope[i]):.6g} > L")
    return ValidationReport(True, "grid-verified", details=details, message="in M(L) on the checked grid")


def _analytic_witness(model, which):
    if isinstance(model, ConstantIntensity):
        return model.env.S
    if isinstance(model, SinusoidalIntensity):
        # first point >= S where sin hits -1 (min) or +1 (max) for amplitude >= 0
        target = -math.pi / 2 if (which == "min") == (model.amplitude >= 0) else math.pi / 2
        k = math.ceil((model.frequency * model.env.S - target) / (2 * math.pi))
        return (target + 2 * math.pi * k) / model.frequency
    return None


def _fail(prop, witness, method, details, detail):
    return ValidationReport(
        False, method, violated_property=prop, witness=witness,
        message=f"violates {_PROPERTY_TEXT[prop]}: {detail}", details=details,
    )


_SPEC_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$")
_FAMILIES = {
    "constant": (ConstantIntensity, 1),
    "sinusoidal": (SinusoidalIntensity, 3),
    "tanh_ramp": (TanhRampIntensity, 4),
}


class SpecSyntaxError(ValueError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


def parse_intensity(text: str, env: EnvironmentParams) -> IntensityModel:
    """Build a model from ``"constant(1.0)"``, ``"sinusoidal(1.5, 0.3, 1.0)"`` or
    ``"tanh_ramp(start, end, center, width)"``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise SpecSyntaxError(f"cannot parse intensity {text!r}; expected family(arg, ...)", column=1)
    name = m.group(1).lower()
    if name not in _FAMILIES:
        raise SpecSyntaxError(f"unknown intensity family {m.group(1)!r}; known: {', '.join(_FAMILIES)}",
                              column=m.start(1) + 1)
    cls, arity = _FAMILIES[name]
    raw = [a.strip() for a in m.group(2).split(",")] if m.group(2).strip() else []
    if len(raw) != arity:
        raise SpecSyntaxError(f"{name} takes {arity} argument(s), got {len(raw)}", column=m.start(2) + 1)
    args = []
    offset = m.start(2)
    for piece in m.group(2).split(","):
        token = piece.strip()
        try:
            value = float(token)
        except ValueError:
            col = offset + (len(piece) - len(piece.lstrip())) + 1
            raise SpecSyntaxError(f"not a number: {token!r}", column=col) from None
        if not math.isfinite(value):
            raise SpecSyntaxError(f"non-finite parameter {token!r}", column=offset + 1)
        args.append(value)
        offset += len(piece) + 1
    return cls(*args, env=env)
