import math

import numpy as np
import pytest

from sinaiwalk.env_model import (Environment, EnvironmentSpec, extend_environment,
                                 hypothesis_diagnostics, potential, read_environment,
                                 sample_environment, write_environment)
from sinaiwalk.errors import ConfigError, UsageError


def test_two_point_support():
    env = sample_environment(EnvironmentSpec("two_point", 0.3, 1), (-500, 500))
    assert set(np.unique(env.alpha)) == {0.3, 0.7}


def test_uniform_support():
    env = sample_environment(EnvironmentSpec("uniform_elliptic", 0.1, 1), (-500, 500))
    assert env.alpha.min() >= 0.1 and env.alpha.max() <= 0.9


def test_two_point_moments_large_sample():
    env = sample_environment(EnvironmentSpec("two_point", 0.3, 11), (0, 10**6 - 1))
    eps = env.epsilon
    sigma = math.log(7 / 3)
    assert abs(eps.mean()) < 3 * sigma / 1e3
    assert eps.var() == pytest.approx(sigma**2, rel=0.02)
    assert sigma**2 == pytest.approx(0.7179, abs=1e-4)


def test_epsilon_matches_alpha(two_point_env):
    a = two_point_env.alpha
    assert np.allclose(two_point_env.epsilon, np.log((1 - a) / a), atol=1e-12, rtol=0)


@pytest.mark.parametrize("family,param", [("two_point", 0.5), ("two_point", 0.0),
                                          ("two_point", 1.0), ("uniform_elliptic", 0.5),
                                          ("uniform_elliptic", 0.0), ("bogus", 0.3)])
def test_invalid_spec_rejected(family, param):
    with pytest.raises(ConfigError):
        EnvironmentSpec(family, param, 0)


def test_spec_round_trip():
    spec = EnvironmentSpec("uniform_elliptic", 0.2, 99)
    assert EnvironmentSpec.from_dict(spec.to_dict()) == spec
    assert spec.digest() == EnvironmentSpec("uniform_elliptic", 0.2, 99).digest()
    assert spec.digest() != EnvironmentSpec("uniform_elliptic", 0.2, 98).digest()


def test_diagnostics_two_point():
    d = hypothesis_diagnostics(EnvironmentSpec("two_point", 0.3, 0))
    assert d["mean_eps"] == 0.0
    assert d["sigma2"] == pytest.approx(math.log(7 / 3) ** 2, rel=1e-14)
    assert d["eta0"] == 0.3


def test_diagnostics_uniform():
    d = hypothesis_diagnostics(EnvironmentSpec("uniform_elliptic", 0.1, 0))
    assert d["mean_eps"] == 0.0
    assert d["eta0"] == 0.1
    # Monte Carlo cross-check of the quadrature
    u = np.random.default_rng(0).uniform(0.1, 0.9, 10**6)
    assert d["sigma2"] == pytest.approx(np.var(np.log((1 - u) / u)), rel=0.01)


def test_potential_flat():
    pot = potential(Environment.constant(0.5, -5, 5))
    assert np.all(pot.s == 0.0)


def test_potential_origin_and_first_step():
    alpha = np.full(11, 0.5)
    alpha[6] = 0.3  # site 1
    pot = potential(Environment.from_alpha(alpha, -5))
    assert pot[0] == 0.0
    assert pot[1] == pytest.approx(0.847298, abs=1e-6)


def test_potential_two_branch_convention(two_point_env):
    pot = potential(two_point_env)
    eps = two_point_env.epsilon
    lo = two_point_env.lo
    assert pot[0] == 0.0
    for k in (-200, -37, -1, 1, 5, 200):
        if k > 0:
            want = eps[1 - lo:k - lo + 1].sum()
        else:
            want = -eps[k + 1 - lo:1 - lo].sum()
        assert pot[k] == pytest.approx(want, abs=1e-10)
    # increments are epsilon on both sides of 0
    assert np.allclose(np.diff(pot.s), eps[1:], atol=1e-10)


def test_extend_same_window_is_identity(two_point_env):
    assert extend_environment(two_point_env, two_point_env.window) is two_point_env


def test_extend_keeps_old_sites():
    spec = EnvironmentSpec("two_point", 0.3, 5)
    env = sample_environment(spec, (-10, 10))
    big = extend_environment(env, (-20, 20))
    assert big.a(5) == env.a(5)
    assert np.array_equal(big.alpha[10:31], env.alpha)


def test_extend_order_independent():
    spec = EnvironmentSpec("uniform_elliptic", 0.2, 5)
    one = extend_environment(sample_environment(spec, (-3, 3)), (-20, 20))
    two = extend_environment(extend_environment(sample_environment(spec, (-3, 3)),
                                                (-9, 15)), (-20, 20))
    direct = sample_environment(spec, (-20, 20))
    assert np.array_equal(one.alpha, two.alpha)
    assert np.array_equal(one.alpha, direct.alpha)


def test_extend_cannot_shrink(two_point_env):
    with pytest.raises(UsageError):
        extend_environment(two_point_env, (-10, 10))


def test_window_must_contain_origin():
    with pytest.raises(UsageError):
        sample_environment(EnvironmentSpec(), (1, 10))


def test_csv_round_trip(tmp_path, two_point_env):
    path = tmp_path / "env.csv"
    write_environment(two_point_env, path)
    back = read_environment(path)
    assert back.window == two_point_env.window
    assert np.array_equal(back.alpha, two_point_env.alpha)
    assert path.read_text().startswith("# {")
