"""Exact birth-and-death quantities for one excursion away from a site.

For a start site ``m`` and a target ``k`` the object of interest is
``E_m[L(k, T_m)]``, the expected number of visits to ``k`` at times
``1..T_m`` where ``T_m`` is the first return to ``m``.  Three routes are
offered:

* :func:`expected_local_time_closed_form` evaluates the closed-form expression
  ``(alpha_m / beta_k) * exp(-(S_k - S_m)) * a_{k,m}`` literally;
* :func:`expected_local_time_green` solves the first-step linear system on a
  reflecting interval (tridiagonal, eliminated from the ends);
* :func:`mc_excursion_local_time` simulates excursions.

The closed form agrees with the linear system when ``|k - m| = 1``, for the
symmetric walk and whenever the increments between ``m`` and ``k`` are
constant; otherwise the two differ and the simulation sides with the
linear system.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import excursions, toward_sweep
from .env_model import Environment, extend_environment
from .errors import UsageError

EXCURSION_CAP = 10**9
_UNIFORMS = 1 << 22
BAND_RTOL = 1e-12


def _alpha_run(env: Environment, m: int, k: int) -> np.ndarray:
    """Right-step probabilities seen walking from ``m`` towards ``k``.

    For ``k < m`` the lattice is mirrored about ``m``: the returned sequence
    holds ``beta`` at ``m, m-1, ..., k``.
    """
    env = _cover(env, min(m, k), max(m, k))
    if k >= m:
        return env.alpha[m - env.lo:k - env.lo + 1].copy()
    seq = env.alpha[k - env.lo:m - env.lo + 1][::-1]
    return 1.0 - seq


def _cover(env: Environment, lo: int, hi: int) -> Environment:
    if env.lo <= lo and hi <= env.hi:
        return env
    if env.spec is None and env.fill is None:
        raise UsageError(f"sites [{lo}, {hi}] outside environment window [{env.lo}, {env.hi}]")
    return extend_environment(env, (min(lo, env.lo), max(hi, env.hi)))


def _local_potential(a: np.ndarray) -> np.ndarray:
    """S_j - S_0 along a run of right-step probabilities."""
    s = np.zeros(a.size)
    s[1:] = np.cumsum(np.log((1.0 - a[1:]) / a[1:]))
    return s


def _a_coefficient(s: np.ndarray) -> float:
    """``a_{k,m}`` from a local potential with ``s[0] = S_m``, ``s[-1] = S_k``."""
    inner = s[1:-1]
    num = np.logaddexp.reduce(np.append(inner, s[-1]))
    den = np.logaddexp.reduce(np.append(inner, s[0]))
    return math.exp(num - den)


def expected_local_time_closed_form(env: Environment, m: int, k: int) -> float:
    if k == m:
        return 1.0
    a = _alpha_run(env, m, k)
    s = _local_potential(a)
    return a[0] / (1.0 - a[-1]) * math.exp(-s[-1]) * _a_coefficient(s)


def _interval(env: Environment, m: int, half_width: int) -> tuple[np.ndarray, int]:
    if half_width < 1:
        raise UsageError("half_width must be at least 1")
    env = _cover(env, m - half_width, m + half_width)
    lo = m - half_width
    return env.alpha[lo - env.lo:m + half_width - env.lo + 1].copy(), half_width


def green_weighted(alpha_loc: np.ndarray, m_idx: int, weights: np.ndarray) -> float:
    """``E_m[sum_x w(x) L(x, T_m)]`` on a reflecting interval.

    ``h(x)`` is the expected weighted visit count before reaching ``m`` when
    started from ``x``.  Away from ``m`` it solves
    ``h(x) = w(x) + alpha_x h(x+1) + beta_x h(x-1)``, ``h(m) = 0``, with the
    end sites stepping inward surely.  The excursion total is
    ``w(m) + alpha_m h(m+1) + beta_m h(m-1)``.
    """
    last = alpha_loc.size - 1
    if not 0 < m_idx < last:
        raise UsageError("m must lie strictly inside the interval")
    total = float(weights[m_idx])
    # each block runs from its reflecting end towards m
    p_right = 1.0 - alpha_loc[m_idx + 1:][::-1]
    p_right[0] = 1.0
    p_left = alpha_loc[:m_idx].copy()
    p_left[0] = 1.0
    h_right = toward_sweep(p_right, weights[m_idx + 1:][::-1].astype(float))
    h_left = toward_sweep(p_left, weights[:m_idx].astype(float))
    am = alpha_loc[m_idx]
    return total + am * h_right + (1.0 - am) * h_left


def expected_local_time_green(env: Environment, m: int, k: int,
                              half_width: int | None = None) -> float:
    """The value does not depend on the reflecting interval once ``k`` is
    strictly inside it, so the default is the smallest such interval."""
    if half_width is None:
        half_width = abs(k - m) + 1
    alpha_loc, m_idx = _interval(env, m, half_width)
    if abs(k - m) > half_width:
        raise UsageError(f"k = {k} outside [{m - half_width}, {m + half_width}]")
    if k == m:
        return 1.0
    w = np.zeros(alpha_loc.size)
    w[k - m + m_idx] = 1.0
    return green_weighted(alpha_loc, m_idx, w)


def _barrier_between(a: np.ndarray) -> float:
    """``S_{M_k} - S_m``: highest local potential strictly between the ends,
    zero when the ends are neighbours."""
    s = _local_potential(a)
    if a.size <= 2:
        return 0.0
    return float(s[1:-1].max())


def variance_bound(env: Environment, m: int, k: int) -> float:
    """``2 E^2 exp(S_{M_k} - S_m) |k - m| / beta_k`` with E from the linear system.

    For ``k < m`` the same expression is evaluated on the lattice mirrored
    about ``m``.
    """
    if k == m:
        raise UsageError("variance bound needs k != m")
    e = expected_local_time_green(env, m, k)
    a = _alpha_run(env, m, k)
    return 2.0 * e * e * math.exp(_barrier_between(a)) * abs(k - m) / (1.0 - a[-1])


def exact_variance(env: Environment, m: int, k: int) -> float:
    """Exact ``Var_m[L(k, T_m)]`` for ``k != m``.

    ``L`` is zero unless ``k`` is reached, and then geometric: each visit is
    the last with probability ``q = beta_k P_{k-1}(T_m < T_k)`` (mirrored for
    ``k < m``).  Excursions beyond ``k`` always return to ``k``, so only the
    sites between ``m`` and ``k`` matter.  With ``p`` the chance of reaching
    ``k`` and ``E = p / q``,
    ``Var = E (2 - q) / q - E^2``.
    """
    if k == m:
        return 0.0
    a = _alpha_run(env, m, k)
    s = _local_potential(a)
    d = a.size - 1
    log_z = np.logaddexp.reduce(s[:d])
    p = a[0] * math.exp(-log_z)                     # reach k before returning
    q = (1.0 - a[-1]) * math.exp(s[d - 1] - log_z)  # leave k for good
    e = p / q
    return e * (2.0 - q) / q - e * e


def ellipticity_band(env: Environment, m: int, k: int, eta0: float | None = None) -> dict:
    """``(alpha_m / beta_k) a_{k,m}`` against ``[eta0/(1-eta0), 1/eta0]``.

    ``green_value`` is the same product rebuilt from the linear system,
    ``E_m[L(k, T_m)] exp(S_k - S_m)``, which reduces to ``alpha_m / alpha_k``.
    Both are compared with a relative slack of 1e-12 so that values sitting
    exactly on an endpoint are not rejected by rounding.
    """
    if k == m:
        raise UsageError("band needs k != m")
    eta = env.eta0 if eta0 is None else eta0
    a = _alpha_run(env, m, k)
    s = _local_potential(a)
    value = a[0] / (1.0 - a[-1]) * _a_coefficient(s)
    green = expected_local_time_green(env, m, k) * math.exp(s[-1])
    lower, upper = eta / (1.0 - eta), 1.0 / eta
    lo, hi = lower * (1 - BAND_RTOL), upper * (1 + BAND_RTOL)
    return {"value": value, "lower": lower, "upper": upper, "ok": lo <= value <= hi,
            "green_value": green, "green_ok": lo <= green <= hi}


def sa_weight(env: Environment, m: int, sites, half_width: int | None = None) -> float:
    """Expected visits to the site set per excursion from ``m``; one solve."""
    sites = np.asarray(sorted(set(int(s) for s in sites)), dtype=np.int64)
    if sites.size == 0:
        return 0.0
    reach = int(max(abs(sites.min() - m), abs(sites.max() - m)))
    hw = reach + 1 if half_width is None else half_width
    if hw <= reach:
        raise UsageError("half_width does not cover the site set")
    alpha_loc, m_idx = _interval(env, m, hw)
    w = np.zeros(alpha_loc.size)
    w[sites - m + m_idx] = 1.0
    return green_weighted(alpha_loc, m_idx, w)


def mc_excursion_local_time(env: Environment, m: int, k: int, reps: int, seed: int,
                            half_width: int = 50, cap: int = EXCURSION_CAP) -> dict:
    """Monte Carlo visits to ``k`` over ``reps`` excursions from ``m``.

    Same reflecting interval as :func:`expected_local_time_green`; a
    half-width of ``|k - m| + 1`` already gives the exact law of the visit
    count, wider intervals only add steps.  Excursions
    that hit ``cap`` steps are closed early and reported in ``capped``.
    """
    if reps < 1:
        raise UsageError("reps must be positive")
    alpha_loc, m_idx = _interval(env, m, half_width)
    if abs(k - m) > half_width:
        raise UsageError(f"k = {k} outside the interval")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    state = np.array([0, m_idx, 0, 0], dtype=np.int64)
    totals = np.zeros(5)
    while state[0] < reps:
        u = rng.random(_UNIFORMS)
        excursions(alpha_loc, m_idx, k - m + m_idx, u, state, reps, cap, totals)
    m1, m2, m3, m4 = (totals[i] / reps for i in (0, 1, 3, 4))
    mean = m1
    var = max(m2 - m1 * m1, 0.0) * reps / max(reps - 1, 1)
    # fourth central moment from raw moments; large-sample stderr of the variance
    mu4 = m4 - 4 * m3 * m1 + 6 * m2 * m1 ** 2 - 3 * m1 ** 4
    var_se = math.sqrt(max(mu4 - var * var, 0.0) / reps)
    return {"mean": mean, "variance": var, "stderr": math.sqrt(var / reps),
            "variance_stderr": var_se, "reps": reps, "capped": int(totals[2])}
