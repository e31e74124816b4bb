"""Exact simulation of free-lot arrivals by thinning a rate-``L`` Poisson process."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .intensity import IntensityModel

__all__ = [
    "SimulationError",
    "RngStream",
    "StreamFactory",
    "PathObservation",
    "WindowBatch",
    "sample_path",
    "sample_tau0",
    "sample_window_batch",
]

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1
MAX_CANDIDATES = 10_000_000


class SimulationError(RuntimeError):
    pass


def _philox_key(master_seed: int, replication_id: int) -> np.ndarray:
    return np.array([replication_id & _MASK64, master_seed & _MASK64], dtype=np.uint64)


def _philox_counter(round_id: int) -> np.ndarray:
    # low words count draws inside the round; word 2 carries the round
    return np.array([0, 0, round_id & _MASK64, 0], dtype=np.uint64)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream for one ``(replication, round)`` cell.

    The Philox key holds ``(master_seed, replication_id)`` and the counter's
    third word holds ``round_id``, so every cell is a disjoint block of one
    keyed sequence and results cannot depend on scheduling.
    """

    master_seed: int
    replication_id: int = 0
    round_id: int = 0

    def generator(self) -> np.random.Generator:
        bg = np.random.Philox(key=0)
        _reset(bg, _philox_key(self.master_seed, self.replication_id), self.round_id)
        return np.random.Generator(bg)


def _reset(bg: np.random.Philox, key: np.ndarray, round_id: int) -> None:
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": _philox_counter(round_id), "key": key},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


class StreamFactory:
    """Reuses one bit generator for all rounds of a replication.

    ``factory.generator(n)`` yields exactly the draws of
    ``RngStream(seed, replication, n).generator()`` without rebuilding it.
    The returned generator is invalidated by the next call.
    """

    def __init__(self, master_seed: int, replication_id: int = 0):
        self.master_seed = int(master_seed)
        self.replication_id = int(replication_id)
        self._key = _philox_key(self.master_seed, self.replication_id)
        self._bg = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bg)

    def generator(self, round_id: int) -> np.random.Generator:
        _reset(self._bg, self._key, round_id)
        return self._gen

    def stream(self, round_id: int) -> RngStream:
        return RngStream(self.master_seed, self.replication_id, round_id)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class PathObservation:
    """Free lots seen in one round, from ``S`` up to and including the lot taken."""

    jump_positions: np.ndarray
    stop_position: float
    threshold: float

    @property
    def full_information(self) -> bool:
        return self.stop_position > 0.0

    def window_jumps(self) -> np.ndarray:
        """Jumps in ``(S, 0]``; only complete when the round stopped after 0."""
        j = self.jump_positions
        return j[j <= 0.0]


def _chunk_size(model: IntensityModel, b: float) -> int:
    env = model.env
    return max(8, int(math.ceil(env.L * (b - env.S) + 3.0 * env.L / env.L_low)) + 4)


def sample_path(model: IntensityModel, threshold: float,
                rng: Union[RngStream, np.random.Generator]) -> PathObservation:
    """Simulate lots from ``S`` until the first one strictly after ``threshold``.

    Candidates come from a homogeneous process of rate ``L`` and each is kept
    with probability ``lambda(x) / L``; this is exact for every model bounded
    by ``L``.
    """
    env = model.env
    b = float(threshold)
    if not (env.S <= b <= 0.0):
        raise ValueError(f"threshold {b} outside [S, 0]")
    gen = _as_generator(rng)
    L = env.L
    chunk = _chunk_size(model, b)
    x = env.S
    kept = []
    drawn = 0
    while True:
        pos = x + np.cumsum(gen.standard_exponential(chunk)) / L
        accept = gen.random(chunk) * L < model._rate(pos)
        accepted = pos[accept]
        hit = np.flatnonzero(accepted > b)
        if hit.size:
            kept.append(accepted[: hit[0] + 1])
            break
        kept.append(accepted)
        x = pos[-1]
        drawn += chunk
        chunk = min(2 * chunk, 1 << 16)
        if drawn >= MAX_CANDIDATES:
            raise SimulationError(
                f"no lot after threshold {b} within {MAX_CANDIDATES} candidates; intensity {model!r} is suspect"
            )
    jumps = np.concatenate(kept) if len(kept) > 1 else kept[0]
    return PathObservation(jump_positions=jumps, stop_position=float(jumps[-1]), threshold=b)


def sample_tau0(model: IntensityModel, rng: Union[RngStream, np.random.Generator]) -> float:
    """Position of the first free lot strictly after the target."""
    return sample_path(model, 0.0, rng).stop_position


@dataclass(frozen=True)
class WindowBatch:
    """Many independent full-information rounds.

    ``positions`` holds all jumps in ``(S, 0]`` grouped by round and sorted
    within each round; ``offsets[i]:offsets[i+1]`` slices round ``i``.
    """

    positions: np.ndarray
    offsets: np.ndarray
    tau0: np.ndarray

    @property
    def n_rounds(self) -> int:
        return self.tau0.size

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def round_jumps(self, i: int) -> np.ndarray:
        return self.positions[self.offsets[i]: self.offsets[i + 1]]

    def first_after(self, b: float) -> np.ndarray:
        """Stop position of the threshold-``b`` rule in every round (``b <= 0``)."""
        at_or_before = np.concatenate(([0], np.cumsum(self.positions <= b)))
        start, stop = self.offsets[:-1], self.offsets[1:]
        idx = start + (at_or_before[stop] - at_or_before[start])
        inside = idx < stop
        out = self.tau0.copy()
        out[inside] = self.positions[idx[inside]]
        return out


def sample_window_batch(model: IntensityModel, n: int,
                        rng: Union[RngStream, np.random.Generator]) -> WindowBatch:
    """Sample ``n`` full-information rounds at once.

    On ``[S, 0]`` a rate-``L`` process is drawn as a Poisson count of uniform
    candidates and thinned; ``tau_0`` is found by sequential thinning from 0.
    """
    env = model.env
    gen = _as_generator(rng)
    S, L = env.S, env.L
    n_cand = gen.poisson(L * abs(S), size=n)
    total = int(n_cand.sum())
    cand = S + abs(S) * gen.random(total)
    keep = gen.random(total) * L < model._rate(cand)
    rid = np.repeat(np.arange(n), n_cand)
    cand, rid = cand[keep], rid[keep]
    cand = np.where(cand == S, np.nextafter(S, 0.0), cand)
    order = np.lexsort((cand, rid))
    positions = cand[order]
    counts = np.bincount(rid, minlength=n)
    offsets = np.concatenate(([0], np.cumsum(counts)))

    tau0 = np.empty(n)
    x = np.zeros(n)
    pending = np.arange(n)
    drawn = 0
    while pending.size:
        x[pending] += gen.standard_exponential(pending.size) / L
        accept = gen.random(pending.size) * L < model._rate(x[pending])
        tau0[pending[accept]] = x[pending[accept]]
        drawn += pending.size
        pending = pending[~accept]
        if drawn > MAX_CANDIDATES * 10:
            raise SimulationError("tau_0 thinning did not terminate")
    return WindowBatch(positions=positions, offsets=offsets, tau0=tau0)
