"""Valleys of the random potential and the basic valley around the origin.

A valley ``{M', m, M''}`` is a triple of sites with ``S_{M'}`` the maximum of
``S`` on ``[M', m]``, ``S_{M''}`` the maximum on ``[m, M'']`` and ``S_m`` the
minimum on ``[M', M'']``.  Refinement splits a valley at its deepest interior
descent (right side) or ascent (left side).  The basic valley is the
smallest valley containing 0 whose depth is at least
``Gamma_n = log n + gamma * log log n`` and whose far barrier clears the
potential between 0 and the bottom by ``gamma * log log n``.

All comparisons of potential values are exact.  For the two-point family the
potential is an integer multiple of one atom, so ties are genuine and are
broken towards the smallest absolute site, then towards the nonnegative one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .env_model import Environment, PotentialPath, extend_environment, potential
from .errors import UsageError

log = logging.getLogger(__name__)

# refinement-tree nodes explored before giving up on a search
MAX_NODES = 20000


@dataclass(frozen=True)
class ValleyTriple:
    m_left: int
    bottom: int
    m_right: int

    @property
    def width(self) -> int:
        return self.m_right - self.m_left


@dataclass(frozen=True)
class Refinement:
    m1: int
    M1: int
    drop: float
    degenerate: bool


@dataclass(frozen=True)
class BasicValley:
    triple: ValleyTriple
    gamma: float
    n: int
    capital_gamma_n: float
    side_condition_ok: bool
    depth: float

    @property
    def m_n(self) -> int:
        return self.triple.bottom

    def to_dict(self, v_gamma=None) -> dict:
        d = {
            "M_n_prime": self.triple.m_left,
            "m_n": self.triple.bottom,
            "M_n": self.triple.m_right,
            "depth": self.depth,
            "Gamma_n": self.capital_gamma_n,
            "gamma": self.gamma,
            "n": self.n,
            "side_condition": self.side_condition_ok,
        }
        if v_gamma is not None:
            d["V_gamma"] = site_runs(v_gamma)
        return d


@dataclass(frozen=True)
class GoodEnvReport:
    basic_valley_exists: bool
    window_bound_ok: bool
    window_bound: float
    sa_weight: float
    sa_bound: float
    sa_ok: bool
    d0: float
    d1: float
    valley: BasicValley | None = None

    @property
    def good(self) -> bool:
        return self.basic_valley_exists and self.window_bound_ok and self.sa_ok


def log2(n: float) -> float:
    """log log n."""
    return math.log(math.log(n))


def log3(n: float) -> float:
    """log log log n."""
    return math.log(math.log(math.log(n)))


def capital_gamma(n: int, gamma: float) -> float:
    return math.log(n) + gamma * log2(n)


def window_cap(n: int, sigma2: float, d0: float) -> int:
    """``d0 * (log log n * log n / sigma)^2`` sites, the good-environment scale."""
    return int(math.ceil(d0 * (log2(n) * math.log(n)) ** 2 / sigma2))


def site_runs(sites) -> list[list[int]]:
    """Compress a sorted site collection to inclusive ``[lo, hi]`` runs."""
    out: list[list[int]] = []
    for k in sorted(int(s) for s in sites):
        if out and k == out[-1][1] + 1:
            out[-1][1] = k
        else:
            out.append([k, k])
    return out


def _pick(sites) -> int:
    """Smallest |k|; +k wins a tie with -k."""
    return int(min(sites, key=lambda k: (abs(int(k)), int(k) < 0)))


def argmin_site(pot: PotentialPath, a: int, b: int) -> int:
    seg = pot.segment(a, b)
    return _pick(np.flatnonzero(seg == seg.min()) + a)


def is_valley(pot: PotentialPath, v: ValleyTriple) -> bool:
    a, m, b = v.m_left, v.bottom, v.m_right
    if not (pot.lo <= a <= m <= b <= pot.hi):
        return False
    return (pot[a] == pot.segment(a, m).max()
            and pot[b] == pot.segment(m, b).max()
            and pot[m] == pot.segment(a, b).min())


def depth(pot: PotentialPath, v: ValleyTriple) -> float:
    if not is_valley(pot, v):
        raise UsageError(f"{v} is not a valley of this potential")
    return min(pot[v.m_left] - pot[v.bottom], pot[v.m_right] - pot[v.bottom])


def _max_descent(seg: np.ndarray, sites: np.ndarray) -> tuple[float, int, int]:
    """Largest ``seg[j'] - seg[j'']`` with ``j' <= j''``.

    ``sites[j]`` labels position ``j``.  Returns ``(drop, site', site'')``;
    ties pick the smallest ``|site''|`` and then the smallest ``|site'|``.
    """
    runmax = np.maximum.accumulate(seg)
    drops = runmax - seg
    d = drops.max()
    if d <= 0:
        return 0.0, int(sites[0]), int(sites[0])
    cand = np.flatnonzero(drops == d)
    j2 = int(cand[_rank(sites[cand])])
    head = np.flatnonzero(seg[:j2 + 1] == runmax[j2])
    j1 = int(head[_rank(sites[head])])
    return float(d), int(sites[j1]), int(sites[j2])


def _rank(labels: np.ndarray) -> int:
    """Index of the label with least modulus, nonnegative first."""
    return min(range(len(labels)), key=lambda i: (abs(int(labels[i])), int(labels[i]) < 0))


def refine_right(pot: PotentialPath, v: ValleyTriple) -> Refinement:
    """Deepest descent ``S_{M1} - S_{m1}`` with ``m <= M1 < m1 <= M''``."""
    if not is_valley(pot, v):
        raise UsageError(f"{v} is not a valley of this potential")
    m, b = v.bottom, v.m_right
    if m == b:
        return Refinement(m, m, 0.0, True)
    d, hi, lo = _max_descent(pot.segment(m, b), np.arange(m, b + 1))
    if d == 0:
        return Refinement(m, m, 0.0, True)
    return Refinement(m1=lo, M1=hi, drop=d, degenerate=False)


def refine_left(pot: PotentialPath, v: ValleyTriple) -> Refinement:
    """Mirror of :func:`refine_right` on ``[M', m]``: ``M' <= m1 < M1 <= m``."""
    if not is_valley(pot, v):
        raise UsageError(f"{v} is not a valley of this potential")
    a, m = v.m_left, v.bottom
    if a == m:
        return Refinement(m, m, 0.0, True)
    # walk the segment from m leftwards so a leftward descent looks rightward
    d, hi, lo = _max_descent(pot.segment(a, m)[::-1], np.arange(m, a - 1, -1))
    if d == 0:
        return Refinement(m, m, 0.0, True)
    return Refinement(m1=lo, M1=hi, drop=d, degenerate=False)


def children(pot: PotentialPath, v: ValleyTriple) -> list[ValleyTriple]:
    """The valleys produced by one left and one right refinement of ``v``."""
    out = []
    r = refine_right(pot, v)
    if not r.degenerate:
        out.append(ValleyTriple(v.m_left, v.bottom, r.M1))
        out.append(ValleyTriple(r.M1, r.m1, v.m_right))
    lft = refine_left(pot, v)
    if not lft.degenerate:
        out.append(ValleyTriple(v.m_left, lft.m1, lft.M1))
        out.append(ValleyTriple(lft.M1, v.bottom, v.m_right))
    return out


def side_condition(pot: PotentialPath, v: ValleyTriple, n: int, gamma: float) -> bool:
    """Condition 3: the barrier opposite the bottom clears the potential
    between 0 and the bottom by ``gamma * log log n``."""
    margin = gamma * log2(n)
    a, m, b = v.m_left, v.bottom, v.m_right
    if m < 0:
        return pot[b] - pot.segment(m, 0).max() >= margin
    if m > 0:
        return pot[a] - pot.segment(0, m).max() >= margin
    return True


def conditions(pot: PotentialPath, v: ValleyTriple, n: int,
               gamma: float) -> tuple[bool, bool, bool]:
    """The three basic-valley conditions: contains 0, depth, side margin."""
    c1 = v.m_left <= 0 <= v.m_right
    c2 = depth(pot, v) >= capital_gamma(n, gamma)
    c3 = side_condition(pot, v, n, gamma) if c1 else False
    return c1, c2, c3


def _qualifies(pot, v, n, gamma) -> bool:
    return all(conditions(pot, v, n, gamma))


def _depth_bound(pot: PotentialPath, a: int, b: int) -> float:
    """Upper bound on the depth of any valley inside ``[a, b]``."""
    seg = pot.segment(a, b)
    left = np.maximum.accumulate(seg)
    right = np.maximum.accumulate(seg[::-1])[::-1]
    return float(np.max(np.minimum(left, right) - seg))


def endpoints(pot: PotentialPath, m: int, n: int, gamma: float) -> tuple[int, int] | None:
    """``(M_n', M_n)`` computed from a bottom ``m`` by the sign-split rules.

    The left end is the nearest ``l <= min(m-1, 0)`` whose height above
    ``S_m`` reaches ``Gamma_n`` (and, when ``m > 0``, clears ``max S`` on
    ``[0, m]`` by the margin); the right end is the mirror image.  Returns
    None if either scan leaves the potential window.
    """
    big = capital_gamma(n, gamma)
    margin = gamma * log2(n)
    sm = pot[m]
    lvl_left = sm + big
    lvl_right = sm + big
    if m > 0:
        lvl_left = max(lvl_left, pot.segment(0, m).max() + margin)
    elif m < 0:
        lvl_right = max(lvl_right, pot.segment(m, 0).max() + margin)

    start = min(m - 1, 0)
    if start < pot.lo:
        return None
    left = pot.segment(pot.lo, start)[::-1]
    hit = np.flatnonzero(left >= lvl_left)
    if hit.size == 0:
        return None
    a = start - int(hit[0])

    start = max(m + 1, 0)
    if start > pot.hi:
        return None
    right = pot.segment(start, pot.hi)
    hit = np.flatnonzero(right >= lvl_right)
    if hit.size == 0:
        return None
    b = start + int(hit[0])
    return a, b


def _first_rise(pot: PotentialPath, big: float, direction: int) -> int | None:
    """First site from 0 (in ``direction``) rising ``big`` over the running min."""
    seg = pot.segment(0, pot.hi) if direction > 0 else pot.segment(pot.lo, 0)[::-1]
    rise = seg - np.minimum.accumulate(seg)
    hit = np.flatnonzero(rise >= big)
    if hit.size == 0:
        return None
    return int(hit[0]) * direction


def _minimal_qualifying(pot, root: ValleyTriple, n, gamma) -> ValleyTriple | None:
    """Smallest proper refinement-descendant of ``root`` meeting all three
    conditions, with no qualifying descendant of its own."""
    big = capital_gamma(n, gamma)
    memo: dict[ValleyTriple, bool] = {}
    minimal: list[ValleyTriple] = []
    budget = [MAX_NODES]

    def has_qualifying_below(v: ValleyTriple) -> bool:
        if v in memo:
            return memo[v]
        budget[0] -= 1
        if budget[0] < 0:
            raise RuntimeError("refinement search exceeded node budget")
        found = False
        for c in children(pot, v):
            if not c.m_left <= 0 <= c.m_right:
                continue
            if _depth_bound(pot, c.m_left, c.m_right) < big:
                continue
            below = has_qualifying_below(c)
            if _qualifies(pot, c, n, gamma):
                found = True
                if not below:
                    minimal.append(c)
            found = found or below
        memo[v] = found
        return found

    has_qualifying_below(root)
    if not minimal:
        return None
    return min(set(minimal), key=lambda v: (v.width, abs(v.bottom), v.bottom < 0))


def find_basic_valley(pot: PotentialPath, n: int, gamma: float) -> BasicValley | None:
    """Basic valley ``{M_n', m_n, M_n}`` of ``pot``, or None.

    Scan outward from 0 to the first ``Gamma_n`` rises, take the lowest point
    between them as a provisional bottom and grow its barriers by the
    endpoint rules; then repeatedly replace the valley by its smallest
    qualifying refinement-descendant and recompute the endpoints from the new
    bottom, until no descendant qualifies.  None means a scan ran off the
    potential window.
    """
    if n < 16:
        raise UsageError("n must exceed e^e so that log log log n > 0")
    big = capital_gamma(n, gamma)
    r = _first_rise(pot, big, +1)
    lft = _first_rise(pot, big, -1)
    if r is None or lft is None:
        log.debug("no Gamma_n rise inside window [%d, %d]", pot.lo, pot.hi)
        return None
    m = argmin_site(pot, lft, r)
    seen: set[int] = set()
    while True:
        ends = endpoints(pot, m, n, gamma)
        if ends is None:
            log.debug("endpoint scan from m=%d left the window", m)
            return None
        a, b = ends
        mm = argmin_site(pot, a, b)
        if mm != m and mm not in seen:
            seen.add(m)
            m = mm
            continue
        v = ValleyTriple(a, m, b)
        try:
            sub = _minimal_qualifying(pot, v, n, gamma)
        except RuntimeError:
            log.warning("refinement budget exhausted around m=%d", m)
            return None
        if sub is None or sub.bottom in seen or sub.bottom == m:
            break
        seen.add(m)
        m = sub.bottom
    return BasicValley(triple=v, gamma=gamma, n=n, capital_gamma_n=big,
                       side_condition_ok=side_condition(pot, v, n, gamma),
                       depth=depth(pot, v))


def valley_window(env: Environment, n: int, d0: float = 4.0) -> Environment:
    """``env`` grown to the search cap on both sides."""
    if env.spec is not None:
        sigma2 = env.spec.sigma2
    else:
        sigma2 = float(np.var(env.epsilon)) or 1.0
    cap = window_cap(n, sigma2, d0)
    return extend_environment(env, (min(env.lo, -cap), max(env.hi, cap)))


def basic_valley_for_env(env: Environment, n: int, gamma: float, d0: float = 4.0):
    """Convenience: grow ``env`` to the cap, then search.  Returns
    ``(env, potential, valley-or-None)``."""
    env = valley_window(env, n, d0)
    pot = potential(env)
    return env, pot, find_basic_valley(pot, n, gamma)


# --- independent checker -------------------------------------------------------

def _brute_descent(seg: np.ndarray, sites: np.ndarray) -> tuple[float, int, int] | None:
    """Every ordered pair ``j1 <= j2`` examined explicitly (quadratic work);
    returns (drop, high site, low site)."""
    best = 0.0
    pairs: list[tuple[int, int]] = []
    for j2 in range(seg.size):
        row = seg[:j2 + 1] - seg[j2]
        d = row.max()
        if d <= 0 or d < best:
            continue
        js = [(int(j1), j2) for j1 in np.flatnonzero(row == d)]
        if d > best:
            best, pairs = float(d), js
        else:
            pairs += js
    if best <= 0:
        return None
    lab = [int(x) for x in sites]
    j1, j2 = min(pairs, key=lambda p: (abs(lab[p[1]]), lab[p[1]] < 0,
                                       abs(lab[p[0]]), lab[p[0]] < 0))
    return best, lab[j1], lab[j2]


def _brute_children(pot: PotentialPath, v: ValleyTriple) -> list[ValleyTriple]:
    out = []
    a, m, b = v.m_left, v.bottom, v.m_right
    if b > m:
        r = _brute_descent(pot.segment(m, b), np.arange(m, b + 1))
        if r is not None:
            _, hi, lo = r
            out += [ValleyTriple(a, m, hi), ValleyTriple(hi, lo, b)]
    if m > a:
        r = _brute_descent(pot.segment(a, m)[::-1], np.arange(m, a - 1, -1))
        if r is not None:
            _, hi, lo = r
            out += [ValleyTriple(a, lo, hi), ValleyTriple(hi, m, b)]
    return out


def check_basic_valley(pot: PotentialPath, bv: BasicValley, n: int, gamma: float,
                       max_window: int = 5000) -> dict:
    """Re-derive every property of a basic valley without the search code.

    Checks the valley equalities, the bottom tie rule, the three conditions,
    the endpoint rules, and, for windows up to ``max_window`` sites, that no
    valley reachable by repeated (brute-force) refinement also satisfies the
    three conditions.
    """
    v = bv.triple
    a, m, b = v.m_left, v.bottom, v.m_right
    out = {"valley": False, "tie_rule": False, "conditions": (False, False, False),
           "endpoints": False, "minimal": None, "minimality_checked": False}
    if not (pot.lo <= a <= m <= b <= pot.hi):
        return out
    seg = pot.segment(a, b)
    out["valley"] = bool(pot[a] == seg[:m - a + 1].max() and pot[b] == seg[m - a:].max()
                         and pot[m] == seg.min())
    if not out["valley"]:
        return out
    mins = [a + int(j) for j in np.flatnonzero(seg == seg.min())]
    out["tie_rule"] = m == min(mins, key=lambda k: (abs(k), k < 0))

    big = math.log(n) + gamma * math.log(math.log(n))
    margin = gamma * math.log(math.log(n))
    c1 = a <= 0 <= b
    c2 = min(pot[a], pot[b]) - pot[m] >= big
    if m < 0:
        c3 = pot[b] - max(pot[t] for t in range(m, 1)) >= margin
    elif m > 0:
        c3 = pot[a] - max(pot[t] for t in range(0, m + 1)) >= margin
    else:
        c3 = True
    out["conditions"] = (c1, c2, c3)

    # endpoint rules: nearest qualifying l on each side of the bottom
    def ok_left(l):
        if pot[l] - pot[m] < big:
            return False
        return m <= 0 or pot[l] - max(pot[t] for t in range(0, m + 1)) >= margin

    def ok_right(l):
        if pot[l] - pot[m] < big:
            return False
        return m >= 0 or pot[l] - max(pot[t] for t in range(m, 1)) >= margin

    out["endpoints"] = (a <= min(m - 1, 0) and ok_left(a)
                        and not any(ok_left(l) for l in range(a + 1, min(m - 1, 0) + 1))
                        and b >= max(m + 1, 0) and ok_right(b)
                        and not any(ok_right(l) for l in range(max(m + 1, 0), b)))

    if b - a + 1 > max_window:
        return out

    def qualifies(w: ValleyTriple) -> bool:
        sa, sm, sb = pot[w.m_left], pot[w.bottom], pot[w.m_right]
        if not w.m_left <= 0 <= w.m_right or min(sa, sb) - sm < big:
            return False
        if w.bottom < 0:
            return sb - pot.segment(w.bottom, 0).max() >= margin
        if w.bottom > 0:
            return sa - pot.segment(0, w.bottom).max() >= margin
        return True

    seen = {v}
    stack = [v]
    minimal = True
    while stack:
        w = stack.pop()
        for c in _brute_children(pot, w):
            if c in seen or not c.m_left <= 0 <= c.m_right:
                continue
            seen.add(c)
            if qualifies(c):
                minimal = False
                stack.clear()
                break
            stack.append(c)
    out["minimal"] = minimal
    out["minimality_checked"] = True
    return out


def is_valid_basic_valley(pot: PotentialPath, bv: BasicValley, n: int, gamma: float,
                          max_window: int = 5000) -> bool:
    r = check_basic_valley(pot, bv, n, gamma, max_window)
    ok = r["valley"] and r["tie_rule"] and all(r["conditions"]) and r["endpoints"]
    if r["minimality_checked"]:
        ok = ok and r["minimal"]
    else:
        log.info("minimality unchecked: window exceeds %d sites", max_window)
    return bool(ok)


def v_gamma_set(pot: PotentialPath, bv: BasicValley, n: int, gamma: float) -> np.ndarray:
    """Sites of ``[M_n', M_n]`` whose running barrier to ``m_n`` stays below
    ``log n - (gamma/2) log log n``; ``m_n`` itself is always included."""
    a, m, b = bv.triple.m_left, bv.triple.bottom, bv.triple.m_right
    level = math.log(n) - 0.5 * gamma * log2(n)
    sm = pot[m]
    left = pot.segment(a, m)[::-1]
    left_bar = np.maximum.accumulate(left)[::-1] - sm
    right_bar = np.maximum.accumulate(pot.segment(m, b)) - sm
    sites = np.concatenate([np.arange(a, m + 1)[left_bar < level],
                            np.arange(m + 1, b + 1)[right_bar[1:] < level]])
    if m not in sites:
        sites = np.sort(np.append(sites, m))
    return sites


def good_environment_check(env: Environment, n: int, gamma: float, d0: float = 4.0,
                           d1: float = 16.0) -> GoodEnvReport:
    """Evaluate the three good-environment properties for ``env`` at time ``n``."""
    from .bd_oracle import sa_weight

    if env.spec is not None:
        sigma2 = env.spec.sigma2
    else:
        sigma2 = float(np.var(env.epsilon)) or 1.0
    bound = d0 * (log2(n) * math.log(n)) ** 2 / sigma2
    sa_bound = d1 * log2(n) ** 2
    env, pot, bv = basic_valley_for_env(env, n, gamma, d0)
    if bv is None:
        return GoodEnvReport(False, False, bound, math.nan, sa_bound, False, d0, d1, None)
    a, m, b = bv.triple.m_left, bv.triple.bottom, bv.triple.m_right
    win_ok = a >= -bound and b <= bound
    w = sa_weight(env, m, range(a, b + 1))
    return GoodEnvReport(True, win_ok, bound, w, sa_bound, w <= sa_bound, d0, d1, bv)
