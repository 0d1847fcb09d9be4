import numpy as np
import pytest

from sinaiwalk.env_model import Environment, EnvironmentSpec, sample_environment
from sinaiwalk.errors import UsageError
from sinaiwalk.walk_sim import (favorite_sites, hitting_time, load_run, local_time,
                                positions, post_hit_counts, run_from_steps, run_walk,
                                save_run)


@pytest.fixture(scope="module")
def run():
    env = sample_environment(EnvironmentSpec("two_point", 0.3, 3), (-50, 50))
    return run_walk(env, 200_000, 17)


def zigzag(n):
    return run_from_steps(Environment.constant(0.5, -2, 2), [1, -1] * (n // 2))


def test_forced_all_up():
    r = run_from_steps(Environment.constant(0.999, -1, 1), [1] * 10)
    assert r.final_position == 10
    assert r.env.hi >= 10


def test_ledger_conservation(run):
    assert run.ledger.total == run.n
    assert run.ledger.counts.min() >= 0


def test_replay_matches_final_position(run):
    x = positions(run)
    assert x.size == run.n
    assert x[-1] == run.final_position


def test_replay_rebuilds_ledger(run):
    x = positions(run)
    sites, counts = np.unique(x, return_counts=True)
    for s, c in zip(sites, counts):
        assert run.ledger.count(int(s)) == c


def test_deterministic():
    env = sample_environment(EnvironmentSpec("two_point", 0.3, 3), (-50, 50))
    a = run_walk(env, 50_000, 5)
    b = run_walk(sample_environment(EnvironmentSpec("two_point", 0.3, 3), (-2, 2)), 50_000, 5)
    assert np.array_equal(a.steps, b.steps)
    assert a.final_position == b.final_position


def test_local_time_examples():
    r = zigzag(4)
    assert local_time(r, 1, 3) == 2
    assert local_time(r, 1, 0) == 0
    assert local_time(r, 7, 4) == 0
    with pytest.raises(UsageError):
        local_time(r, 1, 5)


def test_favorites_zigzag():
    fav = favorite_sites(zigzag(4))
    assert fav.l_star == 2
    assert set(fav.sites) == {0, 1}
    assert fav.k_star == 0


def test_favorites_single_step():
    fav = favorite_sites(run_from_steps(Environment.constant(0.5, -1, 1), [1]))
    assert fav.sites == (1,) and fav.k_star == 1


def test_k_star_minimal_modulus(run):
    fav = favorite_sites(run)
    assert fav.k_star in fav.sites
    assert all(abs(fav.k_star) <= abs(k) for k in fav.sites)
    assert fav.l_star == run.ledger.max_count


def test_favorite_positive_on_exact_sign_tie():
    # X = 1,2,1,0,-1,-2,-1 : sites 1 and -1 are the only favourites
    r = run_from_steps(Environment.constant(0.5, -3, 3), [1, 1, -1, -1, -1, -1, 1])
    fav = favorite_sites(r)
    assert set(fav.sites) == {-1, 1}
    assert fav.k_star == 1 and fav.sign_tie


def test_hitting_times():
    r = zigzag(6)
    assert hitting_time(r, 0) == 2
    assert hitting_time(r, 5) is None
    assert hitting_time(r, r.final_position) <= r.n


def test_hitting_record_first_visit(run):
    x = positions(run)
    for site in (run.final_position, run.ledger.lo, run.ledger.hi, 0):
        t = hitting_time(run, site)
        assert x[t - 1] == site
        assert not np.any(x[:t - 1] == site)


def test_post_hit_counts_full_and_last(run):
    lo, counts = post_hit_counts(run, 1)
    assert lo == run.ledger.lo and np.array_equal(counts, run.ledger.counts)
    lo, counts = post_hit_counts(run, run.n)
    assert counts.sum() == 1 and lo == run.final_position


def test_post_hit_counts_telescoping(run):
    rng = np.random.default_rng(0)
    t0 = int(rng.integers(2, run.n))
    lo, counts = post_hit_counts(run, t0)
    for k in rng.integers(run.ledger.lo, run.ledger.hi + 1, 100):
        k = int(k)
        j = k - lo
        post = int(counts[j]) if 0 <= j < counts.size else 0
        assert post == local_time(run, k, run.n) - local_time(run, k, t0 - 1)


def test_post_hit_counts_range(run):
    with pytest.raises(UsageError):
        post_hit_counts(run, 0)
    with pytest.raises(UsageError):
        post_hit_counts(run, run.n + 1)


def test_one_step_frequency():
    env = Environment.constant(0.37, -3, 3)
    rng = np.random.default_rng(1)
    ups = sum(run_walk(env, 1, int(s)).final_position == 1
              for s in rng.integers(0, 2**63, 20_000))
    se = np.sqrt(0.37 * 0.63 / 20_000)
    assert abs(ups / 20_000 - 0.37) < 4 * se


@pytest.mark.slow
def test_symmetric_final_position_clt():
    env = Environment.constant(0.5, -10, 10)
    finals = [run_walk(env, 10**6, s).final_position for s in range(200)]
    assert abs(np.mean(finals)) < 3 * 1e3 / np.sqrt(200)


def test_save_load_round_trip(tmp_path, run):
    path = tmp_path / "run.bin"
    save_run(run, path)
    back = load_run(path)
    assert back.n == run.n and back.final_position == run.final_position
    assert np.array_equal(back.steps, run.steps)
    assert np.array_equal(back.ledger.counts, run.ledger.counts)


def test_ledger_csv(tmp_path):
    r = zigzag(4)
    r.ledger.to_csv(tmp_path / "l.csv")
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines == ["site,count,first_hit_time", "0,2,2", "1,2,1"]
