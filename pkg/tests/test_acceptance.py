"""Acceptance criteria 1-9 at their pinned tolerances.

Each test prints one ``criterion n: PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.
"""

import csv
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from parking_ilu.bounds import lower_bound_constant, mse_bound_bhat, prior_information, upper_bound_constant
from parking_ilu.cli import main
from parking_ilu.harness import ExperimentConfig, estimator_mse_sweep, fit_log_growth, run_experiment
from parking_ilu.intensity import ConstantIntensity, EnvironmentParams, SinusoidalIntensity
from parking_ilu.oracle import constant_gap, optimal_threshold
from parking_ilu.simulate import StreamFactory, sample_path, sample_tau0

LN2 = math.log(2.0)
MAIN_SEED = 20240601

CONFIG = """\
[env]
S = {S}
L = {L}

[intensity]
model = {model}

[experiment]
policy = ilu
T = {T}
replications = {R}
seed = {seed}
grid_step = 0.01
paths_per_point = 100000

[output]
directory = {out}
"""


def cli(tmp_path, *args, model="constant(1.0)", S=-2.0, L=2.0, T=10, R=1, seed=0, out="out"):
    path = tmp_path / f"cfg-{abs(hash((model, S, L, T, R, seed, out)))}.ini"
    path.write_text(CONFIG.format(S=S, L=L, model=model, T=T, R=R, seed=seed, out=tmp_path / out))
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main([args[0], str(path), *args[1:]])
    return code, list(csv.DictReader(io.StringIO(buf.getvalue())))


@pytest.fixture(scope="module")
def main_experiment():
    env = EnvironmentParams(-2.0, 2.0)
    t0 = time.perf_counter()
    res = run_experiment(ExperimentConfig(ConstantIntensity(1.0, env), 5000, 500, MAIN_SEED, "ilu"))
    return res, time.perf_counter() - t0


def test_criterion_1_constant_oracle_exactness(tmp_path):
    errors = []
    t0 = time.perf_counter()
    for rate in (0.9, 1.0, 1.5, 2.0):
        code, out = cli(tmp_path, "solve", model=f"constant({rate})", L=2.5)
        assert code == 0
        errors.append(abs(float(out[0]["b_star"]) + LN2 / rate))
    elapsed = (time.perf_counter() - t0) / 4
    ok = max(errors) <= 1e-8 and elapsed < 1.0
    record_criterion(1, ok, f"max |b* + ln2/lambda| = {max(errors):.2e} (tol 1e-8), {elapsed:.3f} s per solve")
    assert ok


def test_criterion_2_indifference():
    t0 = time.perf_counter()
    wide = EnvironmentParams(-2.0, 2.5)
    models = [ConstantIntensity(r, wide) for r in (0.9, 1.0, 1.5, 2.0)]
    models.append(SinusoidalIntensity(1.5, 0.3, 1.0, EnvironmentParams(-2.0, 2.0)))
    worst = 0.0
    for m in models:
        r = optimal_threshold(m)
        worst = max(worst, abs(abs(r.b_star) - r.expected_cost_at_star))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    record_criterion(2, ok, f"max ||b*| - E|tau_b*|| = {worst:.2e} (tol 1e-6), {elapsed:.2f} s")
    assert ok


def test_criterion_3_brute_force_cross_validation(tmp_path):
    t0 = time.perf_counter()
    gaps = {}
    for model in ("constant(1.0)", "sinusoidal(1.5, 0.3, 1.0)"):
        code, solved = cli(tmp_path, "solve", model=model)
        assert code == 0
        code, brute = cli(tmp_path, "brute", model=model, seed=0)
        assert code == 0
        gaps[model] = abs(float(brute[0]["b_brute"]) - float(solved[0]["b_star"]))
    elapsed = time.perf_counter() - t0
    ok = max(gaps.values()) <= 2e-2 and elapsed < 300
    detail = ", ".join(f"{k}: {v:.4f}" for k, v in gaps.items())
    record_criterion(3, ok, f"|b_brute - b*| {detail} (tol 2e-2), {elapsed:.0f} s")
    assert ok


def test_criterion_4_estimator_rates():
    env = EnvironmentParams(-2.0, 2.0)
    t0 = time.perf_counter()
    rows = estimator_mse_sweep(ConstantIntensity(1.0, env), [10, 100, 1000], 2000, master_seed=4,
                               quantities=("lambda_hat_S", "tau0_hat", "sup_error"))
    elapsed = time.perf_counter() - t0
    ok = elapsed < 120
    parts = []
    for r in rows:
        if r.kind == "exact":
            good = 0.7 <= r.ratio <= 1.3
        else:
            good = r.empirical <= r.theory
        ok &= good
        parts.append(f"{r.quantity}@{r.n}={r.ratio:.3f}")
    record_criterion(4, ok, "MSE/theory " + " ".join(parts) + f", {elapsed:.0f} s")
    assert ok


def test_criterion_5_threshold_estimate_rate():
    env = EnvironmentParams(-2.0, 2.0)
    model = ConstantIntensity(1.0, env)
    t0 = time.perf_counter()
    rows = estimator_mse_sweep(model, [100, 1000, 10_000], 500, master_seed=5, quantities=("b_hat",))
    K = mse_bound_bhat(env, model).coefficient
    elapsed = time.perf_counter() - t0
    scaled = [r.n * r.empirical for r in rows]
    ses = [r.n * r.se for r in rows]
    settles = all(scaled[i + 1] <= scaled[i] + 3 * math.hypot(ses[i], ses[i + 1]) for i in range(2))
    ok = settles and max(scaled) <= K and elapsed < 300
    record_criterion(5, ok, "n*MSE(b_hat) = " + ", ".join(f"{s:.3f}+-{e:.3f}" for s, e in zip(scaled, ses))
                     + f" vs K = {K:.1f}, {elapsed:.0f} s")
    assert ok


def test_criterion_6_logarithmic_regret(main_experiment):
    res, elapsed = main_experiment
    cum = res.curve.cumulative
    C = upper_bound_constant(res.config.env).C_upper
    fit = fit_log_growth(cum, 500, 5000)
    anchor = constant_gap(1.0, 0.0)
    checks = {
        "a": cum[5000] <= C * math.log(5001),
        "b": fit.r2 >= 0.98,
        "c": cum[5000] / cum[500] <= 1.6 * math.log(5001) / math.log(501),
        "d": cum[5000] / 5000 <= 0.05 * anchor,
    }
    ok = all(checks.values()) and elapsed < 600
    detail = (f"R({5000}) = {cum[5000]:.2f}, R2 = {fit.r2:.4f}, ratio = {cum[5000] / cum[500]:.3f} "
              f"(max {1.6 * math.log(5001) / math.log(501):.3f}), R/T = {cum[5000] / 5000:.4f} "
              f"(max {0.05 * anchor:.4f}), parts " + " ".join(f"{k}={'ok' if v else 'X'}" for k, v in checks.items())
              + f", mean final threshold {res.thresholds[:, -1].mean():.3f}, {elapsed:.0f} s")
    record_criterion(6, ok, detail)
    assert ok


def test_criterion_7_lower_bound_constants(main_experiment):
    env = EnvironmentParams(-2.0, 2.0)
    t0 = time.perf_counter()
    iq_err = abs(prior_information(0.0, 1.0) - 40.0)
    low = lower_bound_constant(env)
    formula = 1.0 / (40.0 / (low.b_scaled - low.a_scaled) ** 2 + 1.0 / low.a_scaled)
    c_prime_ok = math.isclose(low.C_prime, formula, rel_tol=1e-12)
    elapsed = time.perf_counter() - t0
    res, _ = main_experiment
    T = np.arange(100, 5001)
    below = bool(np.all(low.minimax_bound(T) <= res.curve.cumulative[T]))
    ok = iq_err <= 1e-8 and c_prime_ok and below and elapsed < 1.0
    record_criterion(7, ok, f"|I_q - 40| = {iq_err:.1e}, C' = {low.C_prime:.6f} (formula {formula:.6f}), "
                            f"C_lower = {low.C_lower:.3e} below regret on [100, 5000]: {below}")
    assert ok


def test_criterion_8_simulation_fidelity():
    env = EnvironmentParams(-2.0, 2.0)
    n = 100_000
    t0 = time.perf_counter()
    unit = ConstantIntensity(1.0, env)
    factory = StreamFactory(8, 0)
    counts = np.array([sample_path(unit, 0.0, factory.generator(i)).window_jumps().size for i in range(n)])
    mean_ok = abs(counts.mean() - 2.0) <= 3 * math.sqrt(2.0 / n)
    var_ok = abs(counts.var(ddof=1) - 2.0) <= 3 * math.sqrt(2.0 / n + 8.0 / (n - 1))
    k_max = 8
    observed = np.bincount(np.minimum(counts, k_max), minlength=k_max + 1)
    probs = stats.poisson.pmf(np.arange(k_max), 2.0)
    probs = np.append(probs, 1 - probs.sum())
    p_gof = stats.chisquare(observed, probs * n).pvalue
    sinus = SinusoidalIntensity(1.5, 0.3, 1.0, env)
    factory = StreamFactory(8, 1)
    tau = np.array([sample_tau0(sinus, factory.generator(i)) for i in range(n)])
    surv = []
    for t in (0.5, 1.0, 2.0):
        p = math.exp(-float(sinus.cumulative(t)))
        surv.append(abs(np.mean(tau > t) - p) / math.sqrt(p * (1 - p) / n))
    elapsed = time.perf_counter() - t0
    ok = mean_ok and var_ok and p_gof > 1e-3 and max(surv) <= 3 and elapsed < 60
    record_criterion(8, ok, f"count mean {counts.mean():.4f} var {counts.var(ddof=1):.4f}, chi2 p = {p_gof:.3f}, "
                            f"survival max z = {max(surv):.2f}, {elapsed:.0f} s")
    assert ok


def test_criterion_9_determinism(tmp_path):
    outputs = []
    for jobs in ("1", "1", "2"):
        code, _ = cli(tmp_path, "run", "--jobs", jobs, T=300, R=4, seed=99, out=f"run{len(outputs)}")
        assert code == 0
        folder = tmp_path / f"run{len(outputs)}"
        outputs.append({p.name: p.read_bytes() for p in sorted(folder.iterdir())})
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) == 4
    record_criterion(9, ok, f"{len(outputs[0])} CSV files byte-identical across 2 runs and --jobs 1/2: {ok}")
    assert ok
