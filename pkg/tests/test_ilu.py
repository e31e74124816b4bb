import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from parking_ilu.harness import ExperimentConfig, run_replication
from parking_ilu.ilu import (
    FullInfoRecord,
    IluState,
    IndifferenceLevelEstimator,
    RiskSetState,
    cutoff_clamp,
    empirical_mass,
    full_info_threshold,
    gamma_hat,
    ilu_step,
    phi_hat,
    solve_threshold,
)
from parking_ilu.intensity import ConstantIntensity
from parking_ilu.simulate import PathObservation, RngStream, StreamFactory, sample_window_batch

LN2 = math.log(2.0)
S = -2.0


def state_with(records):
    st_ = IluState(S=S)
    for jumps, tau0 in records:
        st_.add_record(FullInfoRecord(np.array(jumps, dtype=float), tau0))
    st_.round = len(records)
    return st_


def grid_inversion(records, target, step=1e-6):
    """Invert int_b^0 exp(gamma_hat) on a fine grid, independent of the step solver."""
    pooled = np.sort(np.concatenate([np.asarray(j, dtype=float) for j, _ in records]))
    m = len(records)
    y = np.arange(0.0, S - step / 2, -step)
    level = np.exp((pooled.size - np.searchsorted(pooled, y - step / 2, side="right")) / m)
    mass = np.cumsum(level) * step
    k = np.searchsorted(mass, target)
    return S if k >= mass.size else -(k + 1) * step


def test_gamma_hat_examples():
    one = state_with([([-1.5, -0.4], 0.3)])
    assert gamma_hat(one, -1.0) == 1
    assert gamma_hat(one, -1.6) == 2
    assert gamma_hat(one, -0.1) == 0
    assert gamma_hat(one, 0.0) == 0
    two = state_with([([-1.9, -1.0], 0.3), ([-1.8, -1.2, -0.9, -0.5], 0.4)])
    assert gamma_hat(two, -1.95) == 3


def test_gamma_hat_right_continuous_at_jumps():
    one = state_with([([-1.5, -0.4], 0.3)])
    assert gamma_hat(one, -0.4) == 0  # counts lots in (y, 0]
    assert gamma_hat(one, np.nextafter(-0.4, -1)) == 1


def test_phi_hat_examples():
    assert phi_hat(state_with([([], 0.5), ([], 1.5)])) == 1.0
    assert phi_hat(state_with([([-0.3], 0.7)])) == 0.7


def test_empty_state_queries_raise():
    empty = IluState(S=S)
    for call in (lambda: gamma_hat(empty, -1.0), lambda: phi_hat(empty), lambda: solve_threshold(empty)):
        with pytest.raises(NotFittedError):
            call()


def test_solve_examples():
    assert solve_threshold(state_with([([], 0.8)])) == pytest.approx(-0.8, abs=1e-15)
    assert solve_threshold(state_with([([], 2.5)])) == S
    single = [([-1.0], 0.5)]
    b = solve_threshold(state_with(single))
    assert b == pytest.approx(-0.5, abs=1e-15)
    assert b == pytest.approx(grid_inversion(single, 0.5), abs=2e-6)
    assert full_info_threshold([FullInfoRecord(np.array([-1.0]), 0.5)], S) == pytest.approx(-0.5, abs=1e-15)


def test_solve_crosses_a_step():
    # mass: 1 on (-1, 0], e^{1/1} per unit below -1
    records = [([-1.0], 1.0 + math.e * 0.25)]
    assert solve_threshold(state_with(records)) == pytest.approx(-1.25, abs=1e-12)


def test_full_info_threshold_empty_is_zero():
    assert full_info_threshold([], S) == 0.0


record_sets = st.lists(
    st.tuples(
        st.lists(st.floats(-1.999, 0.0), max_size=6, unique=True).map(sorted),
        st.floats(0.05, 3.0),
    ),
    min_size=1,
    max_size=6,
)


@settings(max_examples=100, deadline=None)
@given(record_sets)
def test_solver_plugs_back_exactly(records):
    state = state_with(records)
    b = solve_threshold(state)
    assert S <= b <= 0
    total = empirical_mass(state, S)
    assert empirical_mass(state, b) == pytest.approx(min(phi_hat(state), total), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(record_sets)
def test_solver_agrees_with_grid_inversion(records):
    b = solve_threshold(state_with(records))
    n_jumps = sum(len(j) for j, _ in records)
    assert b == pytest.approx(grid_inversion(records, phi_hat(state_with(records))),
                              abs=2e-6 * math.exp(n_jumps / len(records)) + 1e-9)


@settings(max_examples=60, deadline=None)
@given(record_sets, st.floats(-2.0, 0.0), st.floats(-2.0, 0.0))
def test_gamma_hat_monotone(records, y1, y2):
    state = state_with(records)
    lo, hi = min(y1, y2), max(y1, y2)
    assert gamma_hat(state, lo) >= gamma_hat(state, hi)


def test_tied_jumps_are_consecutive_breakpoints():
    records = [([-1.0], 2.0), ([-1.0], 2.0)]
    state = state_with(records)
    assert gamma_hat(state, -1.5) == 1.0
    b = solve_threshold(state)
    assert empirical_mass(state, b) == pytest.approx(2.0, abs=1e-12)
    assert b == pytest.approx(-1.0 - 1.0 / math.e, abs=1e-12)


def test_estimator_api():
    est = IndifferenceLevelEstimator(S=S)
    assert est.get_params() == {"S": S}
    assert clone(est).S == S
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit([[-1.0]], [0.5])
    assert est.threshold_ == -0.5 and est.predict() == -0.5
    np.testing.assert_array_equal(est.predict(np.zeros((3, 1))), [-0.5] * 3)


def test_partial_fit_matches_fit():
    rng = np.random.default_rng(0)
    windows = [np.sort(rng.uniform(-2, 0, rng.integers(0, 5))) for _ in range(30)]
    tau0 = rng.uniform(0.1, 2.0, 30)
    full = IndifferenceLevelEstimator(S=S).fit(windows, tau0)
    inc = IndifferenceLevelEstimator(S=S)
    for i in range(0, 30, 7):
        inc.partial_fit(windows[i:i + 7], tau0[i:i + 7])
    np.testing.assert_array_equal(full.pooled_jumps_, inc.pooled_jumps_)
    # tau0 sums accumulate in a different order
    assert full.threshold_ == pytest.approx(inc.threshold_, abs=1e-12)
    state = IluState(S=S)
    for w, t in zip(windows, tau0):
        state.add_record(FullInfoRecord(w, t))
    assert state.estimator.threshold_ == pytest.approx(full.threshold_, abs=1e-12)


@pytest.mark.parametrize("X, y", [([[-2.5]], [0.5]), ([[0.1]], [0.5]), ([[-1.0]], [0.0]),
                                  ([[-1.0]], [0.5, 0.6]), ([[math.nan]], [0.5])])
def test_estimator_input_validation(X, y):
    with pytest.raises(ValueError):
        IndifferenceLevelEstimator(S=S).fit(X, y)


def test_record_validation():
    with pytest.raises(ValueError):
        FullInfoRecord(np.array([-0.5, -1.0]), 0.4)
    with pytest.raises(ValueError):
        FullInfoRecord(np.array([-0.5]), -0.1)
    with pytest.raises(ValueError):
        FullInfoRecord.from_path(PathObservation(np.array([-0.3]), -0.3, -0.5))


def test_ilu_step_round_zero_and_records(unit_rate):
    state = IluState(S=S)
    factory = StreamFactory(1, 0)
    b, path, state = ilu_step(state, unit_rate, factory.generator(0))
    assert b == 0.0 and path.full_information and len(state.records) == 1
    for n in range(1, 200):
        before = len(state.records)
        b, path, state = ilu_step(state, unit_rate, factory.generator(n))
        assert len(state.records) == before + int(path.stop_position > 0)
        assert state.round >= len(state.records) >= 1


def test_causality_threshold_ignores_current_round(env):
    config = ExperimentConfig(ConstantIntensity(1.0, env), 60, 1, 11, "ilu")
    factory = StreamFactory(11, 0)
    changed = 30

    def altered(n):
        return RngStream(999, 0, n).generator() if n == changed else factory.generator(n)

    base = run_replication(config, 0)
    other = run_replication(config, 0, round_stream=altered)
    np.testing.assert_array_equal(base.thresholds[: changed + 1], other.thresholds[: changed + 1])
    assert base.stops[changed] != other.stops[changed]


def test_full_info_threshold_consistent_at_large_n(unit_rate):
    batch = sample_window_batch(unit_rate, 10_000, RngStream(21))
    records = [FullInfoRecord(batch.round_jumps(i), batch.tau0[i]) for i in range(batch.n_rounds)]
    assert abs(full_info_threshold(records, S) + LN2) <= 0.05


def test_gamma_and_phi_unbiased(unit_rate):
    sets, size = 2000, 5
    batch = sample_window_batch(unit_rate, sets * size, RngStream(22))
    for y in (-2.0, -1.0, -0.3):
        per_round = np.add.reduceat(batch.positions > y, batch.offsets[:-1]) * (batch.counts > 0)
        estimates = per_round.reshape(sets, size).mean(axis=1)
        se = estimates.std(ddof=1) / math.sqrt(sets)
        assert abs(estimates.mean() - abs(y)) <= 3 * se
    tau = batch.tau0.reshape(sets, size).mean(axis=1)
    assert abs(tau.mean() - 1.0) <= 3 * tau.std(ddof=1) / math.sqrt(sets)


def test_cutoff_clamp():
    assert cutoff_clamp(0.0, 2.0) == pytest.approx(-LN2 / 2)
    assert cutoff_clamp(-1.0, 2.0) == -1.0
    np.testing.assert_allclose(cutoff_clamp(np.array([-0.1, -0.5]), 2.0), [-LN2 / 2, -0.5])


def test_risk_set_reduces_to_pooled_average_when_all_rounds_complete():
    windows = [np.array([-1.5, -0.4]), np.array([-1.1]), np.array([])]
    tau0 = [0.3, 0.9, 0.4]
    rs = RiskSetState(S)
    for w, t in zip(windows, tau0):
        rs.observe(PathObservation(np.append(w, t), t, 0.0))
    est = IndifferenceLevelEstimator(S=S).fit(windows, tau0)
    for y in (-1.9, -1.2, -0.5, -0.1):
        assert rs.integrated_intensity(y) == pytest.approx(est.integrated_intensity(y), abs=1e-15)
    assert rs.threshold_ == pytest.approx(est.threshold_, abs=1e-15)
