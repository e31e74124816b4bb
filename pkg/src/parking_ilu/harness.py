"""Multi-replication learning experiments and estimator diagnostics.

Regret is scored with the exact optimality gap of each played threshold,
so replication noise only comes from the policy's own randomness.
"""

from __future__ import annotations

import csv
import math
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._numerics import DEFAULT_TOLERANCES, Tolerances
from .bounds import mse_bound_bhat, var_tau0
from .ilu import FullInfoRecord, IluState, RiskSetState, _solve_step_equation, cutoff_clamp
from .intensity import EnvironmentParams, IntensityModel
from .oracle import gap_function, optimal_threshold
from .simulate import StreamFactory, RngStream, sample_path, sample_window_batch

__all__ = [
    "POLICIES",
    "ExperimentConfig",
    "RegretCurve",
    "FullInfoDiagnostics",
    "ExperimentResult",
    "LogFit",
    "MseRow",
    "BruteForceResult",
    "WaitingTimeCheck",
    "parse_policy",
    "run_replication",
    "run_experiment",
    "fit_log_growth",
    "estimator_mse_sweep",
    "brute_force_threshold",
    "waiting_time_check",
    "write_csv_atomic",
    "fmt",
]

POLICIES = ("ilu", "full_info", "fixed", "cutoff_ilu", "ilu_risk_set")


def fmt(x) -> str:
    """Serialise a number with 17 significant digits (ints unchanged)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


_POLICY_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


def parse_policy(text: str) -> tuple[str, Optional[float]]:
    """``"ilu"`` -> ``("ilu", None)``; ``"fixed(-0.5)"`` -> ``("fixed", -0.5)``."""
    m = _POLICY_RE.match(text)
    if not m or m.group(1) not in POLICIES:
        raise ValueError(f"unknown policy {text!r}; expected one of ilu, full_info, fixed(b), cutoff_ilu, ilu_risk_set")
    name, arg = m.group(1), m.group(2)
    if name == "fixed":
        if arg is None:
            raise ValueError("fixed policy needs a threshold: fixed(b)")
        return name, float(arg)
    if arg:
        raise ValueError(f"policy {name} takes no argument")
    return name, None


@dataclass(frozen=True)
class ExperimentConfig:
    model: IntensityModel
    T: int
    replications: int
    master_seed: int
    policy: str = "ilu"
    tolerances: Tolerances = DEFAULT_TOLERANCES

    def __post_init__(self):
        if self.T < 1 or self.replications < 1:
            raise ValueError("need T >= 1 and replications >= 1")
        name, arg = parse_policy(self.policy)
        if name == "fixed" and not (self.env.S <= arg <= 0.0):
            raise ValueError(f"fixed threshold {arg} outside [S, 0]")

    @property
    def env(self) -> EnvironmentParams:
        return self.model.env


class _FixedLearner:
    def __init__(self, b):
        self.b = b
        self.n_records = 0

    def next_threshold(self):
        return self.b

    def observe(self, path):
        if path.full_information:
            self.n_records += 1


class _IluLearner:
    def __init__(self, S, clamp_L=None):
        self.state = IluState(S=S)
        self.clamp_L = clamp_L

    @property
    def n_records(self):
        return len(self.state.records)

    def next_threshold(self):
        b = self.state.next_threshold()
        return float(cutoff_clamp(b, self.clamp_L)) if self.clamp_L is not None else b

    def observe(self, path):
        st = self.state
        if path.full_information:
            st.add_record(FullInfoRecord(path.window_jumps(), path.stop_position))
        st.last_threshold = path.threshold
        st.round += 1


class _FullInfoLearner:
    """Sees ``[S, tau_0]`` every round whatever threshold it plays."""

    full_observation = True

    def __init__(self, S):
        self.state = IluState(S=S)

    @property
    def n_records(self):
        return len(self.state.records)

    def next_threshold(self):
        return self.state.next_threshold()

    def observe(self, path):
        self.state.add_record(FullInfoRecord(path.window_jumps(), path.stop_position))
        self.state.round += 1


class _RiskSetLearner:
    def __init__(self, S):
        self.state = RiskSetState(S)

    @property
    def n_records(self):
        return self.state.n_full

    def next_threshold(self):
        return self.state.next_threshold()

    def observe(self, path):
        self.state.observe(path)


def _make_learner(config: ExperimentConfig):
    name, arg = parse_policy(config.policy)
    S = config.env.S
    if name == "ilu":
        return _IluLearner(S)
    if name == "cutoff_ilu":
        return _IluLearner(S, clamp_L=config.env.L)
    if name == "full_info":
        return _FullInfoLearner(S)
    if name == "ilu_risk_set":
        return _RiskSetLearner(S)
    return _FixedLearner(arg)


@dataclass
class ReplicationTrace:
    thresholds: np.ndarray
    stops: np.ndarray
    full_info: np.ndarray
    records_count: np.ndarray


def run_replication(config: ExperimentConfig, replication: int,
                    round_stream: Optional[Callable[[int], np.random.Generator]] = None) -> ReplicationTrace:
    """Rounds ``0..T`` of one replication.

    The threshold of round ``n`` is fixed before round ``n``'s stream is
    touched.  ``records_count[n]`` is the number of full-information records
    available when that threshold was chosen.
    """
    model = config.model
    learner = _make_learner(config)
    factory = StreamFactory(config.master_seed, replication)
    stream = round_stream or factory.generator
    full_obs = getattr(learner, "full_observation", False)
    n = config.T + 1
    thresholds = np.empty(n)
    stops = np.empty(n)
    records = np.empty(n, dtype=np.int64)
    for k in range(n):
        b = learner.next_threshold()
        records[k] = learner.n_records
        thresholds[k] = b
        gen = stream(k)
        if full_obs:
            path = sample_path(model, 0.0, gen)
            j = path.jump_positions
            stops[k] = j[np.searchsorted(j, b, side="right")]
        else:
            path = sample_path(model, b, gen)
            stops[k] = path.stop_position
        learner.observe(path)
    return ReplicationTrace(thresholds, stops, stops > 0.0, records)


def _run_chunk(args):
    config, reps = args
    return [run_replication(config, r) for r in reps]


@dataclass
class RegretCurve:
    per_round_gap: np.ndarray
    se: np.ndarray
    cumulative: np.ndarray
    cumulative_se: np.ndarray

    @property
    def T(self) -> int:
        return self.per_round_gap.size - 1


@dataclass
class FullInfoDiagnostics:
    mean_records: np.ndarray
    waiting_times: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    thresholds: np.ndarray
    stops: np.ndarray
    full_info: np.ndarray
    records_count: np.ndarray
    gaps: np.ndarray
    curve: RegretCurve
    diagnostics: FullInfoDiagnostics
    b_star: float

    def write_csvs(self, directory: str, rounds: bool = True, fit: Optional["LogFit"] = None) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        written = []
        c = self.curve
        rows = [(n, c.per_round_gap[n], c.se[n], c.cumulative[n]) for n in range(c.per_round_gap.size)]
        written.append(write_csv_atomic(os.path.join(directory, "regret.csv"),
                                        ["round", "mean_gap", "se", "cumulative"], rows))
        d = self.diagnostics
        rows = [(n, d.mean_records[n]) for n in range(d.mean_records.size)]
        written.append(write_csv_atomic(os.path.join(directory, "diagnostics.csv"),
                                        ["round", "mean_full_info_records"], rows))
        if rounds:
            R, n = self.thresholds.shape
            rows = ((r, k, self.thresholds[r, k], self.stops[r, k], self.full_info[r, k], self.records_count[r, k])
                    for r in range(R) for k in range(n))
            written.append(write_csv_atomic(os.path.join(directory, "rounds.csv"),
                                            ["replication", "round", "threshold", "stop", "full_info",
                                             "records_count"], rows))
        if fit is not None:
            written.append(write_csv_atomic(os.path.join(directory, "fit.csv"),
                                            ["t_min", "t_max", "intercept", "slope", "r2", "slope_ratio",
                                             "logarithmic"],
                                            [(fit.t_min, fit.t_max, fit.intercept, fit.slope, fit.r2,
                                              fit.slope_ratio, fit.logarithmic)]))
        return written


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   gap: Optional[Callable] = None) -> ExperimentResult:
    """Run all replications and score them with the exact optimality gap.

    Output is identical for every ``jobs`` value: each replication owns its
    random streams and results are merged by replication index.
    """
    R = config.replications
    if jobs <= 1 or R == 1:
        traces = [run_replication(config, r) for r in range(R)]
    else:
        chunks = [list(range(R))[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
        traces = [None] * R
        for chunk, part in zip(chunks, parts):
            for r, tr in zip(chunk, part):
                traces[r] = tr
    thresholds = np.stack([t.thresholds for t in traces])
    stops = np.stack([t.stops for t in traces])
    full_info = np.stack([t.full_info for t in traces])
    records = np.stack([t.records_count for t in traces])

    oracle = optimal_threshold(config.model, config.tolerances)
    gap = gap or gap_function(config.model, config.tolerances, oracle)
    gaps = gap(thresholds)
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
    cum_rep = np.cumsum(gaps, axis=1)
    cum_se = cum_rep.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
    curve = RegretCurve(per_round_gap=mean, se=se, cumulative=np.cumsum(mean), cumulative_se=cum_se)

    waits = []
    for r in range(R):
        idx = np.flatnonzero(full_info[r])
        waits.append(np.diff(idx))
    diag = FullInfoDiagnostics(mean_records=records.mean(axis=0),
                               waiting_times=np.concatenate(waits) if waits else np.empty(0, dtype=np.int64))
    return ExperimentResult(config, thresholds, stops, full_info, records, gaps, curve, diag, oracle.b_star)


@dataclass(frozen=True)
class LogFit:
    intercept: float
    slope: float
    r2: float
    t_min: int
    t_max: int
    slope_ratio: float

    @property
    def logarithmic(self) -> bool:
        """Good log fit and no drift of the slope between the two halves of the window."""
        return self.r2 >= 0.98 and self.slope_ratio <= 1.5


def _ols(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def fit_log_growth(cumulative: Sequence[float], t_min: Optional[int] = None,
                   t_max: Optional[int] = None) -> LogFit:
    """Least-squares fit of ``cumulative[t] ~ alpha + beta ln(t + 1)`` over ``[t_min, t_max]``.

    Defaults to ``[T/10, T]``.  ``slope_ratio`` compares the slopes fitted on
    the upper and lower halves of the window (in log time); it stays near 1
    for logarithmic growth and blows up for polynomial growth.
    """
    cum = np.asarray(cumulative, dtype=float)
    T = cum.size - 1
    if T < 100:
        raise ValueError("need at least 100 rounds for a growth fit")
    t_min = T // 10 if t_min is None else t_min
    t_max = T if t_max is None else t_max
    t = np.arange(t_min, t_max + 1)
    x, y = np.log(t + 1.0), cum[t_min: t_max + 1]
    if np.ptp(y) == 0:
        return LogFit(float(y[0]), 0.0, 1.0, t_min, t_max, 1.0)
    a, b, r2 = _ols(x, y)
    mid = np.searchsorted(x, 0.5 * (x[0] + x[-1]))
    _, b_lo, _ = _ols(x[:mid], y[:mid])
    _, b_hi, _ = _ols(x[mid:], y[mid:])
    ratio = b_hi / b_lo if b_lo > 0 else math.inf
    return LogFit(a, b, r2, t_min, t_max, ratio)


@dataclass(frozen=True)
class WaitingTimeCheck:
    mean: float
    se: float
    bound: float
    samples: int
    passed: bool


def waiting_time_check(diagnostics: FullInfoDiagnostics, env: EnvironmentParams,
                       min_samples: int = 100) -> WaitingTimeCheck:
    """Compare the mean gap between full-information rounds with ``exp(L |S|)``."""
    w = np.asarray(diagnostics.waiting_times, dtype=float)
    if w.size < min_samples:
        raise ValueError(f"need at least {min_samples} waiting times, got {w.size}")
    mean = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(w.size))
    bound = math.exp(env.L * abs(env.S))
    return WaitingTimeCheck(mean, se, bound, int(w.size), mean - 3.0 * se <= bound)


@dataclass(frozen=True)
class MseRow:
    n: int
    quantity: str
    empirical: float
    se: float
    theory: float
    kind: str  # "exact" or "bound"

    @property
    def ratio(self) -> float:
        return self.empirical / self.theory


def _sup_error(sorted_jumps: np.ndarray, n: int, model: IntensityModel, Lambda_S: float) -> float:
    K = sorted_jumps.size
    if K == 0:
        return Lambda_S
    Lam = -model._cumulative(sorted_jumps)
    right = (K - 1 - np.arange(K)) / n  # value at the jump (jump itself excluded)
    left = (K - np.arange(K)) / n  # limit from the left
    return float(max(np.max(np.abs(right - Lam)), np.max(np.abs(left - Lam)), abs(K / n - Lambda_S)))


def estimator_mse_sweep(model: IntensityModel, n_values: Sequence[int], replications: int,
                        master_seed: int = 0, tol: Tolerances = DEFAULT_TOLERANCES,
                        quantities: Sequence[str] = ("lambda_hat_S", "tau0_hat", "sup_error", "b_hat"),
                        ) -> list[MseRow]:
    """Empirical MSE of the full-information estimators against their theory.

    Replication ``r`` draws ``max(n_values)`` i.i.d. full-information rounds
    from stream ``(master_seed, r, 0)``; each ``n`` uses the first ``n`` of them.
    """
    n_values = [int(n) for n in n_values]
    if n_values != sorted(n_values) or n_values[0] < 1:
        raise ValueError("n_values must be positive and ascending")
    env = model.env
    S = env.S
    Lambda_S = float(model.integrated(S))
    need_b = "b_hat" in quantities
    oracle = optimal_threshold(model, tol)
    mean0 = oracle.tail_mean
    var0 = var_tau0(model, tol)
    K = mse_bound_bhat(env, model, tol).coefficient if need_b else math.nan

    err = {q: np.empty((len(n_values), replications)) for q in quantities}
    n_max = n_values[-1]
    for r in range(replications):
        batch = sample_window_batch(model, n_max, RngStream(master_seed, r, 0))
        for i, n in enumerate(n_values):
            stop = batch.offsets[n]
            if "lambda_hat_S" in err:
                err["lambda_hat_S"][i, r] = stop / n - Lambda_S
            if "tau0_hat" in err:
                err["tau0_hat"][i, r] = batch.tau0[:n].mean() - mean0
            if "sup_error" in err or need_b:
                pooled = np.sort(batch.positions[:stop])
            if "sup_error" in err:
                err["sup_error"][i, r] = _sup_error(pooled, n, model, Lambda_S)
            if need_b:
                b_hat = _solve_step_equation(pooled[::-1], n, float(batch.tau0[:n].mean()), S)
                err["b_hat"][i, r] = b_hat - oracle.b_star

    theory = {
        "lambda_hat_S": (lambda n: Lambda_S / n, "exact"),
        "tau0_hat": (lambda n: var0 / n, "exact"),
        "sup_error": (lambda n: 4.0 * Lambda_S / n, "bound"),
        "b_hat": (lambda n: K / n, "bound"),
    }
    rows = []
    for i, n in enumerate(n_values):
        for q in quantities:
            sq = err[q][i] ** 2
            se = float(sq.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
            f, kind = theory[q]
            rows.append(MseRow(n, q, float(sq.mean()), se, f(n), kind))
    return rows


@dataclass(frozen=True)
class BruteForceResult:
    b: float
    cost: float
    ci_halfwidth: float
    grid: np.ndarray = field(repr=False)
    costs: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)


def brute_force_threshold(model: IntensityModel, grid_step: float = 1e-2, paths_per_point: int = 100_000,
                          master_seed: int = 0) -> BruteForceResult:
    """Grid search of the simulated mean distance ``E|tau_b|`` over ``[S, 0]``.

    Every grid point is scored on the same ``paths_per_point`` simulated
    streets (common random numbers), which keeps the comparison between
    neighbouring thresholds from drowning in path-to-path noise.  Uses no
    oracle quantity, only simulation.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    S = model.env.S
    k = int(math.floor(abs(S) / grid_step + 1e-9))
    grid = np.concatenate((S + grid_step * np.arange(k + 1), [0.0] if k * grid_step < abs(S) - 1e-12 else []))
    grid[-1] = min(grid[-1], 0.0)
    batch = sample_window_batch(model, paths_per_point, RngStream(master_seed, 0, 0))
    costs = np.empty(grid.size)
    ses = np.empty(grid.size)
    for i, b in enumerate(grid):
        d = np.abs(batch.first_after(b))
        costs[i] = d.mean()
        ses[i] = d.std(ddof=1) / math.sqrt(d.size)
    i = int(np.argmin(costs))
    return BruteForceResult(float(grid[i]), float(costs[i]), 1.96 * float(ses[i]), grid, costs, ses)


def write_csv_atomic(path: str, header: Sequence[str], rows) -> str:
    """Write a CSV via a temporary file in the same directory and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
