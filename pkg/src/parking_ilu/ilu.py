"""Indifference level updating: learn the parking threshold from observed rounds.

Only rounds that stopped after the target reveal the whole approach window
and the first lot after the target; those full-information records feed

* the integrated-intensity estimate ``gamma_hat(y)``: average count of lots in ``(y, 0]``,
* the tail-mean estimate ``phi_hat``: average first lot after the target,

and the next threshold solves ``int_b^0 exp(gamma_hat(y)) dy = phi_hat``.
Because ``gamma_hat`` is a step function the solve is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import check_records, check_street_start, check_window
from .intensity import IntensityModel
from .simulate import PathObservation, RngStream, sample_path

__all__ = [
    "FullInfoRecord",
    "IndifferenceLevelEstimator",
    "IluState",
    "gamma_hat",
    "phi_hat",
    "solve_threshold",
    "ilu_step",
    "full_info_threshold",
    "cutoff_clamp",
    "empirical_mass",
]


@dataclass(frozen=True)
class FullInfoRecord:
    """Jumps in ``(S, 0]`` and the first lot after 0 from one full-information round."""

    jumps_in_window: np.ndarray
    tau0: float

    def __post_init__(self):
        if not (math.isfinite(self.tau0) and self.tau0 > 0):
            raise ValueError(f"tau0 must be positive, got {self.tau0}")
        jumps = np.asarray(self.jumps_in_window, dtype=float)
        if jumps.size and (np.any(np.diff(jumps) <= 0) or jumps[-1] > 0):
            raise ValueError("window jumps must be strictly increasing and <= 0")
        object.__setattr__(self, "jumps_in_window", jumps)

    @classmethod
    def from_path(cls, path: PathObservation) -> "FullInfoRecord":
        if not path.full_information:
            raise ValueError("path stopped at or before the target; window incomplete")
        return cls(path.window_jumps(), path.stop_position)


def _solve_steps(breaks_desc: np.ndarray, exponents: np.ndarray, target: float, S: float) -> float:
    """Solve ``int_b^0 exp(G(y)) dy = target`` for a step function ``G`` on ``[S, 0]``.

    ``breaks_desc`` are the jump positions of ``G`` sorted descending and
    ``exponents[j]`` is its value between breakpoints ``j`` and ``j + 1``
    (breakpoint 0 is the target, the last one is ``S``).  The integral is
    piecewise linear in ``b``, so the root is found segment by segment.
    Returns ``S`` when the mass over all of ``[S, 0]`` falls short.
    """
    edges = np.empty(breaks_desc.size + 2)
    edges[0] = 0.0
    edges[1:-1] = breaks_desc
    edges[-1] = S
    widths = edges[:-1] - edges[1:]
    levels = np.exp(exponents)
    mass = np.cumsum(widths * levels)
    j = int(np.searchsorted(mass, target, side="left"))
    if j >= mass.size:
        return S
    before = mass[j - 1] if j > 0 else 0.0
    return max(S, float(edges[j] - (target - before) / levels[j]))


def _solve_step_equation(pooled_desc: np.ndarray, m: int, target: float, S: float) -> float:
    """Solve with ``G(y) = (number of pooled jumps in (y, 0]) / m``."""
    return _solve_steps(pooled_desc, np.arange(pooled_desc.size + 1) / m, target, S)


def _step_mass(pooled_desc: np.ndarray, m: int, b: float) -> float:
    """``int_b^0 exp(gamma_hat)`` for the same step function."""
    inside = pooled_desc[pooled_desc > b]
    edges = np.concatenate(([0.0], inside, [b]))
    widths = edges[:-1] - edges[1:]
    return float(np.sum(widths * np.exp(np.arange(widths.size) / m)))


class IndifferenceLevelEstimator(BaseEstimator):
    """Estimate the optimal parking threshold from full-information rounds.

    Parameters
    ----------
    S : float
        Street start; thresholds are confined to ``[S, 0]``.

    Attributes
    ----------
    n_records_ : int
        Number of full-information rounds seen.
    pooled_jumps_ : ndarray
        All recorded window jumps, sorted ascending.
    tail_mean_ : float
        Mean first lot after the target over the records.
    threshold_ : float
        Solution of the empirical balance equation, or ``S`` when the
        empirical approach mass never reaches ``tail_mean_``.

    Examples
    --------
    >>> est = IndifferenceLevelEstimator(S=-2.0).fit([[-1.0]], [0.5])
    >>> est.threshold_
    -0.5
    """

    def __init__(self, S=-1.0):
        self.S = S

    def fit(self, X, y):
        """Fit on windows ``X`` (one jump array per round) and ``y`` (tau0 per round)."""
        S = check_street_start(self.S)
        windows, tau0 = check_records(X, y, S)
        if not windows:
            raise ValueError("at least one full-information record is required")
        self.pooled_jumps_ = np.sort(np.concatenate(windows)) if windows else np.empty(0)
        self.n_records_ = len(windows)
        self._tau0_sum = float(np.sum(tau0))
        self._update()
        return self

    def partial_fit(self, X, y):
        """Add more records; equivalent to refitting on all records seen so far."""
        if not hasattr(self, "n_records_"):
            return self.fit(X, y)
        S = check_street_start(self.S)
        windows, tau0 = check_records(X, y, S)
        if windows:
            new = np.concatenate(windows)
            if new.size:
                merged = np.concatenate((self.pooled_jumps_, new))
                merged.sort(kind="mergesort")
                self.pooled_jumps_ = merged
            self.n_records_ += len(windows)
            self._tau0_sum += float(np.sum(tau0))
            self._update()
        return self

    def _add_one(self, window: np.ndarray, tau0: float) -> None:
        # trusted fast path for the learning loop; window already sorted and in range
        if window.size:
            pos = np.searchsorted(self.pooled_jumps_, window)
            self.pooled_jumps_ = np.insert(self.pooled_jumps_, pos, window)
        self.n_records_ += 1
        self._tau0_sum += tau0
        self._update()

    def _update(self):
        self.tail_mean_ = self._tau0_sum / self.n_records_
        self.threshold_ = _solve_step_equation(
            self.pooled_jumps_[::-1], self.n_records_, self.tail_mean_, float(self.S)
        )

    def integrated_intensity(self, y):
        """``gamma_hat(y)``: mean number of recorded lots in ``(y, 0]``."""
        check_is_fitted(self, "n_records_")
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < self.S) or np.any(y_arr > 0):
            raise ValueError(f"y must lie in [S, 0] = [{self.S}, 0]")
        above = self.pooled_jumps_.size - np.searchsorted(self.pooled_jumps_, y_arr, side="right")
        out = above / self.n_records_
        return float(out) if out.ndim == 0 else out

    def approach_mass(self, b: float) -> float:
        """``int_b^0 exp(gamma_hat(y)) dy``."""
        check_is_fitted(self, "n_records_")
        return _step_mass(self.pooled_jumps_[::-1], self.n_records_, float(b))

    def predict(self, X=None):
        """Threshold to play next (the fitted ``threshold_``), repeated per row of ``X`` if given."""
        check_is_fitted(self, "threshold_")
        if X is None:
            return self.threshold_
        return np.full(len(X), self.threshold_)


@dataclass
class IluState:
    """Learner state for one replication: full-information records and round counter."""

    S: float
    records: list = field(default_factory=list)
    round: int = 0
    last_threshold: float = 0.0
    estimator: IndifferenceLevelEstimator = None

    def __post_init__(self):
        self.S = check_street_start(self.S)
        if self.estimator is None:
            self.estimator = IndifferenceLevelEstimator(S=self.S)
        if self.records and not hasattr(self.estimator, "n_records_"):
            self.estimator.fit([r.jumps_in_window for r in self.records], [r.tau0 for r in self.records])

    def add_record(self, record: FullInfoRecord) -> None:
        self.records.append(record)
        if hasattr(self.estimator, "n_records_"):
            self.estimator._add_one(record.jumps_in_window, record.tau0)
        else:
            self.estimator.fit([record.jumps_in_window], [record.tau0])

    def next_threshold(self) -> float:
        """Threshold for the current round: 0 before any record, else the empirical solve."""
        if self.round == 0 or not self.records:
            return 0.0
        return self.estimator.threshold_


def _require_records(state: IluState):
    if not state.records:
        raise NotFittedError("no full-information records yet")


def gamma_hat(state: IluState, y):
    _require_records(state)
    return state.estimator.integrated_intensity(y)


def phi_hat(state: IluState) -> float:
    _require_records(state)
    return state.estimator.tail_mean_


def solve_threshold(state: IluState, S: float = None) -> float:
    _require_records(state)
    if S is not None and S != state.S:
        raise ValueError(f"state was built for S={state.S}, got S={S}")
    return state.estimator.threshold_


def empirical_mass(state: IluState, b: float) -> float:
    _require_records(state)
    return state.estimator.approach_mass(b)


def ilu_step(state: IluState, model: IntensityModel,
             rng: Union[RngStream, np.random.Generator]) -> tuple[float, PathObservation, IluState]:
    """Play one round: pick the threshold from past records, sample, learn if the stop passed 0."""
    threshold = state.next_threshold()
    path = sample_path(model, threshold, rng)
    if path.full_information:
        state.add_record(FullInfoRecord(path.window_jumps(), path.stop_position))
    state.last_threshold = threshold
    state.round += 1
    return threshold, path, state


def full_info_threshold(records: Sequence[FullInfoRecord], S: float) -> float:
    """Threshold from ``n`` full-information records; 0 when ``n = 0``."""
    S = check_street_start(S)
    if len(records) == 0:
        return 0.0
    pooled = np.sort(np.concatenate([check_window(r.jumps_in_window, S) for r in records]))
    tau0_mean = float(np.mean([r.tau0 for r in records]))
    return _solve_step_equation(pooled[::-1], len(records), tau0_mean, S)


def cutoff_clamp(threshold, L: float):
    """Clamp thresholds at ``-ln(2)/L``, the rightmost optimum among constant intensities."""
    return np.minimum(threshold, -math.log(2.0) / L)


class RiskSetState:
    """Variant learner that keeps the partial window of every round.

    Each round reveals ``[S, stop]``.  The integrated intensity is estimated by
    the Nelson-Aalen sum of ``1 / Y(p)`` over recorded lots ``p`` in ``(y, 0]``,
    where ``Y(p)`` counts the rounds whose observation reached ``p``.  This
    avoids conditioning the window counts on the played threshold having
    been passed without a free lot, which the full-information average does.
    The tail mean still uses full-information rounds only.  Not the algorithm
    under study; kept to quantify that selection effect.
    """

    def __init__(self, S: float):
        self.S = check_street_start(S)
        self.jumps = np.empty(0)
        self.stops = np.empty(0)
        self.n_full = 0
        self.tau0_sum = 0.0
        self.round = 0
        self.threshold_ = 0.0

    @property
    def n_records(self) -> int:
        return self.n_full

    def next_threshold(self) -> float:
        return 0.0 if self.n_full == 0 else self.threshold_

    def observe(self, path: PathObservation) -> None:
        seen = path.jump_positions[path.jump_positions <= 0.0]
        if seen.size:
            self.jumps = np.insert(self.jumps, np.searchsorted(self.jumps, seen), seen)
        self.stops = np.insert(self.stops, np.searchsorted(self.stops, path.stop_position), path.stop_position)
        if path.full_information:
            self.n_full += 1
            self.tau0_sum += path.stop_position
        self.round += 1
        if self.n_full:
            self.threshold_ = _solve_steps(*self._steps(), self.tau0_sum / self.n_full, self.S)

    def _steps(self):
        desc = self.jumps[::-1]
        at_risk = self.stops.size - np.searchsorted(self.stops, desc, side="left")
        exponents = np.concatenate(([0.0], np.cumsum(1.0 / at_risk)))
        return desc, exponents

    def integrated_intensity(self, y):
        desc, exponents = self._steps()
        above = np.searchsorted(-desc, -np.asarray(y, dtype=float), side="left")
        return exponents[above]
