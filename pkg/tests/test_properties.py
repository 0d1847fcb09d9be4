import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import make_potential
from sinaiwalk.bd_oracle import (ellipticity_band, exact_variance, expected_local_time_green,
                                 expected_local_time_closed_form)
from sinaiwalk.env_model import Environment, EnvironmentSpec, potential, sample_environment
from sinaiwalk.estimator import estimate_table, ols
from sinaiwalk.landscape import (ValleyTriple, basic_valley_for_env, is_valid_basic_valley,
                                 is_valley, refine_right, v_gamma_set)
from sinaiwalk.walk_sim import favorite_sites, positions, run_from_steps

alphas = st.lists(st.floats(0.05, 0.95), min_size=2, max_size=9)
steps = st.lists(st.sampled_from([-1, 1]), min_size=2, max_size=400)
FAST = settings(max_examples=60, deadline=None,
                suppress_health_check=[HealthCheck.too_slow])


def flat_env():
    return Environment.constant(0.5, -10, 10)


@FAST
@given(steps)
def test_ledger_conserves_time(s):
    run = run_from_steps(flat_env(), s)
    assert run.ledger.counts.sum() == len(s)
    assert run.final_position == sum(s)
    x = positions(run)
    fav = favorite_sites(run)
    assert run.ledger.count(fav.k_star) == fav.l_star == np.bincount(x - x.min()).max()


@FAST
@given(steps, st.floats(1.0, 5.0))
def test_post_counts_cover_tail(s, thr):
    run = run_from_steps(flat_env(), s)
    t = estimate_table(run, 1.0, threshold=thr)
    assert t.post_count.sum() == len(s) - t.t_k_star + 1
    assert np.all(t.post_count <= t.local_time)
    assert set(t.l_gamma.tolist()) == set(t.sites[t.post_count >= thr].tolist())


@FAST
@given(st.floats(-5, 5), st.floats(-50, 50), st.integers(2, 40))
def test_ols_recovers_lines(a, b, size):
    x = np.arange(size) - size // 3
    s, i = ols(x, a * x + b)
    assert math.isclose(s, a, abs_tol=1e-9) and math.isclose(i, b, abs_tol=1e-8)


@FAST
@given(alphas)
def test_oracle_relations(a):
    env = Environment.from_alpha(a, 0, fill=0.5)
    k = len(a) - 1
    g = expected_local_time_green(env, 0, k)
    assert g >= 0
    assert math.isclose(expected_local_time_green(env, 0, 1), a[0] / (1 - a[1]), rel_tol=1e-12)
    closed = expected_local_time_closed_form(env, 0, 1)
    assert math.isclose(closed, a[0] / (1 - a[1]), rel_tol=1e-12)
    assert exact_variance(env, 0, k) >= -1e-9 * max(1.0, g * g)
    band = ellipticity_band(env, 0, k)
    assert math.isclose(band["green_value"], a[0] / a[-1], rel_tol=1e-9)


@FAST
@given(st.floats(0.05, 0.95), st.integers(1, 8), st.sampled_from([-1, 1]))
def test_constant_drift_formula_matches_solver(a, d, sign):
    env = Environment.constant(a, -12, 12)
    k = sign * d
    assert math.isclose(expected_local_time_closed_form(env, 0, k),
                        expected_local_time_green(env, 0, k), rel_tol=1e-10)


@FAST
@given(st.lists(st.integers(-3, 3), min_size=4, max_size=60), st.data())
def test_refine_drop_dominates_pairs(incs, data):
    s = np.concatenate([[0.0], np.cumsum(incs)]).astype(float)
    pot = make_potential(s, 0)
    m = int(np.argmin(s))
    b = m + int(np.argmax(s[m:]))
    a = int(np.argmax(s[:m + 1]))
    v = ValleyTriple(a, m, b)
    assert is_valley(pot, v)
    r = refine_right(pot, v)
    i = data.draw(st.integers(m, b))
    j = data.draw(st.integers(i, b))
    assert r.drop >= s[i] - s[j]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.5, 1.0, 2.0]))
def test_basic_valley_invariants(seed, gamma):
    n = 20_000
    env = sample_environment(EnvironmentSpec("two_point", 0.3, seed), (-60, 60))
    env, pot, bv = basic_valley_for_env(env, n, gamma)
    if bv is None:
        return
    assert is_valid_basic_valley(pot, bv, n, gamma)
    v = v_gamma_set(pot, bv, n, gamma)
    assert bv.m_n in v
    assert bv.triple.m_left <= v.min() and v.max() <= bv.triple.m_right


@FAST
@given(st.integers(0, 2**32), st.integers(-40, -1), st.integers(1, 40))
def test_potential_starts_at_zero_and_telescopes(seed, lo, hi):
    env = sample_environment(EnvironmentSpec("uniform_elliptic", 0.2, seed), (lo, hi))
    pot = potential(env)
    assert pot[0] == 0.0
    eps = env.epsilon
    assert math.isclose(pot[hi] - pot[0], eps[1 - lo:hi - lo + 1].sum(), abs_tol=1e-9)
