"""Input checks for record-based estimators."""

from __future__ import annotations

import math
from numbers import Real

import numpy as np


def check_position(value, name="position") -> float:
    if not isinstance(value, (Real, np.floating, np.integer)) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite real, got {value!r}")
    return float(value)


def check_street_start(S) -> float:
    S = check_position(S, "S")
    if S >= 0:
        raise ValueError(f"S must be negative, got {S}")
    return S


def check_window(jumps, S: float) -> np.ndarray:
    """Sorted copy of one round's jumps, all required to lie in ``(S, 0]``."""
    arr = np.asarray(jumps, dtype=float).ravel()
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("jump positions must be finite")
    if arr.size and (arr.min() <= S or arr.max() > 0.0):
        raise ValueError(f"window jumps must lie in (S, 0] = ({S}, 0]")
    return np.sort(arr)


def check_records(windows, tau0, S: float) -> tuple[list, np.ndarray]:
    """Validate parallel sequences of window jumps and first-lot-after-target positions."""
    if isinstance(windows, np.ndarray) and windows.ndim == 1 and windows.dtype != object:
        raise ValueError("windows must be a sequence of per-round jump arrays")
    windows = [check_window(w, S) for w in windows]
    tau0 = np.asarray(tau0, dtype=float).ravel()
    if len(windows) != tau0.size:
        raise ValueError(f"got {len(windows)} windows but {tau0.size} tau0 values")
    if tau0.size and (not np.all(np.isfinite(tau0)) or tau0.min() <= 0.0):
        raise ValueError("tau0 values must be finite and strictly positive")
    return windows, tau0
