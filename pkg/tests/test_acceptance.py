"""Acceptance criteria 1-13, one test each.

Every test records a pass/fail line (printed in the terminal summary) before
asserting, so failing criteria still report their measured values.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from sinaiwalk.bd_oracle import (ellipticity_band, expected_local_time_green,
                                 expected_local_time_closed_form, mc_excursion_local_time)
from sinaiwalk.env_model import Environment, EnvironmentSpec, sample_environment
from sinaiwalk.estimator import u_n
from sinaiwalk.harness import (CALIBRATED, ExperimentConfig, aggregate, calibrated_threshold,
                               default_workers, emit_figure_data, report_json, run_experiment)
from sinaiwalk.landscape import basic_valley_for_env, check_basic_valley, is_valid_basic_valley

pytestmark = pytest.mark.acceptance

N = 500_000
REPS = 500
TREND_N = (10_000, 100_000, N)


def record(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[num] = (bool(ok), detail)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def calibrated(name: str, n: int, reps: int = REPS, **kw) -> ExperimentConfig:
    return ExperimentConfig(name, n=n, gamma=CALIBRATED["valley_gamma"],
                            threshold_override=calibrated_threshold(n), replications=reps,
                            master_seed=1, workers=default_workers(), **kw)


@pytest.fixture(scope="module")
def campaigns():
    """One set of 500 records per n; every walk-based criterion reads them.

    The master seed (1) differs from the pilot's (0) so that acceptance is
    measured on replications the calibration never saw.
    """
    return {n: run_experiment(calibrated("theorem1", n))["records"] for n in TREND_N}


@pytest.fixture(scope="module")
def oracle_sweep():
    return run_experiment(ExperimentConfig("oracle", replications=20, master_seed=1,
                                           workers=default_workers()))


def test_criterion_01_oracle_exactness():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(1000):
        env = sample_environment(EnvironmentSpec("two_point", 0.3, seed), (-8, 8))
        for m in (-2, 0, 3):
            worst = max(worst,
                        abs(expected_local_time_green(env, m, m + 1) - env.a(m) / env.b(m + 1)),
                        abs(expected_local_time_green(env, m, m - 1) - env.b(m) / env.a(m - 1)))
    flat = Environment.constant(0.5, -40, 40)
    sym = max(abs(expected_local_time_green(flat, 0, k) - 1.0) for k in range(-20, 21))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-12 and sym <= 1e-12 and elapsed < 1.0,
           f"max nearest-neighbour error {worst:.2e}, symmetric error {sym:.2e}, "
           f"{elapsed:.2f} s")


def test_criterion_02_monte_carlo_arbitration(oracle_sweep):
    agg = oracle_sweep["aggregate"]
    env = Environment.from_alpha([0.7, 0.6, 0.8], 0, fill=0.5)
    green = expected_local_time_green(env, 0, 2)
    closed = expected_local_time_closed_form(env, 0, 2)
    mc = mc_excursion_local_time(env, 0, 2, 10**6, seed=2, half_width=3)
    ok = (agg["mc_within_4se"] == 1.0 and math.isclose(green, 5.25, rel_tol=1e-12)
          and math.isclose(closed, 10.5, rel_tol=1e-12)
          and abs(mc["mean"] - green) < 4 * mc["stderr"])
    record(2, ok, f"{agg['envs']} envs, max |z| {agg['max_abs_z']:.2f}; "
                  f"case green {green:.4f} closed form {closed:.4f} mc {mc['mean']:.4f}")


def test_criterion_03_variance_bound(oracle_sweep):
    agg = oracle_sweep["aggregate"]
    record(3, agg["variance_violations"] == 0,
           f"{agg['variance_violations']} MC violations, "
           f"{agg['exact_variance_violations']} exact-variance violations of {agg['envs']}")


def test_criterion_04_ellipticity_band():
    rng = np.random.default_rng(np.random.SeedSequence([4, 4]))
    bad = bad_green = 0
    for i in range(1000):
        env = sample_environment(EnvironmentSpec("two_point", 0.3, i), (-20, 20))
        m = int(rng.integers(-6, 7))
        k = m + int(rng.integers(1, 7)) * (1 if rng.random() < 0.5 else -1)
        b = ellipticity_band(env, m, k)
        bad += not b["ok"]
        bad_green += not b["green_ok"]
    record(4, bad == 0, f"{bad} of 1000 outside [3/7, 10/3] "
                        f"(linear-system value: {bad_green} outside)")


def test_criterion_05_return_visit():
    env = sample_environment(EnvironmentSpec("two_point", 0.3, 5), (-20, 20))
    mc = mc_excursion_local_time(env, 0, 0, 10**6, seed=5, half_width=3)
    record(5, abs(mc["mean"] - 1.0) <= 0.01, f"mean {mc['mean']:.6f} over 1e6 excursions")


def test_criterion_06_band_half_width():
    v = u_n(N, 10)
    record(6, abs(v - 0.7206) <= 1e-4, f"u_n = {v:.6f}")


def _valid(records):
    return [r for r in records if r["valley"]]


def test_criterion_07_reconstruction(campaigns):
    fr = {n: aggregate("theorem1", campaigns[n])["success_fraction"] for n in TREND_N}
    trend = all(a <= b for a, b in itertools.pairwise(fr[n] for n in TREND_N))
    record(7, fr[N] >= 0.9 and trend,
           "success " + ", ".join(f"n={n}: {fr[n]:.3f}" for n in TREND_N))


def test_criterion_08_localisation(campaigns):
    agg = aggregate("prop1", campaigns[N])
    record(8, agg["both_ok_fraction"] >= 0.9,
           f"both {agg['both_ok_fraction']:.3f} (distance {agg['distance_ok_fraction']:.3f}, "
           f"time gap {agg['t_gap_ok_fraction']:.3f}, m_n unvisited {agg['m_n_unvisited']})")


def test_criterion_09_coverage_and_size(campaigns):
    med = {n: aggregate("prop2", campaigns[n])["median_coverage"] for n in TREND_N}
    agg = aggregate("prop2", campaigns[N])
    trend = all(a <= b for a, b in itertools.pairwise(med[n] for n in TREND_N))
    record(9, med[N] >= 0.8 and agg["size_ratio_ok_fraction"] >= 0.8 and trend,
           "median coverage " + ", ".join(f"n={n}: {med[n]:.3f}" for n in TREND_N)
           + f"; size in band {agg['size_ratio_ok_fraction']:.3f}")


def test_criterion_10_containment(campaigns):
    frac = aggregate("containment", campaigns[N])["containment_fraction"]
    record(10, frac >= 0.9, f"containment {frac:.3f}")


def test_criterion_11_landscape_checker():
    n, gamma = 10_000, 1.0
    failures = checked = present = 0
    widest = 0
    for seed in range(200):
        env = sample_environment(EnvironmentSpec("two_point", 0.3, 10_000 + seed), (-50, 50))
        env, pot, bv = basic_valley_for_env(env, n, gamma)
        widest = max(widest, env.hi - env.lo + 1)
        if bv is None:
            continue
        present += 1
        rep = check_basic_valley(pot, bv, n, gamma)
        checked += rep["minimality_checked"]
        failures += not is_valid_basic_valley(pot, bv, n, gamma)
    record(11, failures == 0 and widest <= 5000 and checked == present,
           f"{failures} failures over {present} valleys (200 envs, window {widest} sites)")


def test_criterion_12_difference_slope(campaigns):
    med = aggregate("theorem1", campaigns[N])["median_abs_slope"]
    record(12, med is not None and med <= 1e-3, f"median |slope| {med:.2e}")


def test_criterion_13_determinism(tmp_path):
    cfg = calibrated("theorem1", 100_000, reps=8)
    a, b = run_experiment(cfg), run_experiment(cfg)
    c = run_experiment(ExperimentConfig(**{**cfg.to_dict(), "workers": 1}))
    same = report_json(a) == report_json(b) == report_json(c)
    for which in ("reconstruction", "difference"):
        emit_figure_data(a, which, tmp_path / f"a_{which}.csv")
        emit_figure_data(b, which, tmp_path / f"b_{which}.csv")
        same &= ((tmp_path / f"a_{which}.csv").read_bytes()
                 == (tmp_path / f"b_{which}.csv").read_bytes())
    record(13, same, "reports and figure CSVs byte-identical; serial equals pool")
