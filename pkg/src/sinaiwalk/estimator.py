"""Reconstruction of the potential from one trajectory's local times.

Only trajectory data enter :func:`l_gamma_set` and :func:`estimate_table`.
The true potential is used solely by :func:`target_profile` and
:func:`reconstruction_error`, which score an estimate after the fact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .env_model import PotentialPath
from .errors import UsageError
from .landscape import log2, log3
from .walk_sim import WalkRun, favorite_sites, post_hit_counts


@dataclass(frozen=True, eq=False)
class LGamma:
    k_star: int
    t_k_star: int
    threshold: float
    sites: np.ndarray
    post_lo: int
    post_counts: np.ndarray

    def post_count(self, k: int) -> int:
        j = k - self.post_lo
        return int(self.post_counts[j]) if 0 <= j < self.post_counts.size else 0


@dataclass(frozen=True, eq=False)
class EstimateTable:
    n: int
    gamma: float
    c0: float
    u_n: float
    threshold: float
    k_star: int
    t_k_star: int
    sites: np.ndarray
    local_time: np.ndarray
    post_count: np.ndarray
    in_l_gamma: np.ndarray
    s_hat: np.ndarray

    @property
    def l_gamma(self) -> np.ndarray:
        return self.sites[self.in_l_gamma]

    def row(self, k: int) -> dict:
        j = int(np.searchsorted(self.sites, k))
        if j >= self.sites.size or self.sites[j] != k:
            raise KeyError(k)
        return {"k": k, "L_kn": int(self.local_time[j]), "post_count": int(self.post_count[j]),
                "in_L_gamma": bool(self.in_l_gamma[j]), "s_hat": float(self.s_hat[j])}


@dataclass(frozen=True, eq=False)
class TargetProfile:
    m_n: int
    n: int
    lo: int
    values: np.ndarray

    def at(self, k):
        return self.values[np.asarray(k) - self.lo]


@dataclass(frozen=True)
class ReconstructionReport:
    empty: bool
    sup_error: float | None
    within_band: bool
    u_n: float
    slope: float | None
    intercept: float | None
    coverage: float
    l_gamma_size: int
    size_ratio: float
    connected: bool
    contains_k_star: bool
    m_n_to_kstar_distance: int
    l_gamma_lo: int | None
    l_gamma_hi: int | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def u_n(n: int, c0: float) -> float:
    """Error half-width ``c0 * log log log n / log n``; needs n >= 16."""
    if n < 16:
        raise UsageError("u_n needs n >= 16 so that log log log n > 0")
    return c0 * log3(n) / math.log(n)


def default_threshold(n: int, gamma: float) -> float:
    return math.log(n) ** gamma


def l_gamma_set(run: WalkRun, gamma: float, threshold: float | None = None) -> LGamma:
    """Sites visited at least ``(log n)^gamma`` times during ``[T_{k*}, n]``.

    Pass one (the ledger) gives the favourite ``k*`` and its first hitting
    time; pass two replays the steps from that time.  ``threshold`` replaces
    ``(log n)^gamma`` by an absolute count.
    """
    if gamma <= 0:
        raise UsageError("gamma must be positive")
    thr = default_threshold(run.n, gamma) if threshold is None else float(threshold)
    fav = favorite_sites(run)
    t_k = run.ledger.hit(fav.k_star)
    lo, counts = post_hit_counts(run, t_k)
    sites = np.flatnonzero(counts >= thr) + lo
    return LGamma(k_star=fav.k_star, t_k_star=t_k, threshold=thr, sites=sites,
                  post_lo=lo, post_counts=counts)


def estimate_table(run: WalkRun, gamma: float, c0: float = 10.0,
                   threshold: float | None = None) -> EstimateTable:
    """``log L(k, n) / log n`` for every visited site, with L_n^gamma flags.

    Runs shorter than 16 steps get ``u_n = nan`` (no band to score against).
    """
    if run.n < 2:
        raise UsageError("need at least two steps to normalise by log n")
    lg = l_gamma_set(run, gamma, threshold)
    led = run.ledger
    sites = led.visited()
    lt = led.counts[sites - led.lo]
    post = np.zeros(sites.size, dtype=np.int64)
    j = sites - lg.post_lo
    ok = (j >= 0) & (j < lg.post_counts.size)
    post[ok] = lg.post_counts[j[ok]]
    logn = math.log(run.n)
    return EstimateTable(
        n=run.n, gamma=gamma, c0=c0, u_n=u_n(run.n, c0) if run.n >= 16 else math.nan,
        threshold=lg.threshold,
        k_star=lg.k_star, t_k_star=lg.t_k_star, sites=sites, local_time=lt,
        post_count=post, in_l_gamma=post >= lg.threshold, s_hat=np.log(lt) / logn)


def target_profile(pot: PotentialPath, m_n: int, n: int) -> TargetProfile:
    """``1 - (S_k - S_{m_n}) / log n`` over the potential window."""
    vals = 1.0 - (pot.s - pot[m_n]) / math.log(n)
    vals[m_n - pot.lo] = 1.0
    return TargetProfile(m_n=m_n, n=n, lo=pot.lo, values=vals)


def ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares line; a single point gets slope 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise UsageError("no points to fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        return 0.0, float(ym)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm)


def differences(table: EstimateTable, profile: TargetProfile) -> np.ndarray:
    """``target - s_hat`` for every row of the table."""
    return profile.at(table.sites) - table.s_hat


def reconstruction_error(table: EstimateTable, profile: TargetProfile) -> ReconstructionReport:
    sel = table.in_l_gamma
    lsites = table.sites[sel]
    size = int(lsites.size)
    ratio = size / math.log(table.n) ** 2
    dist = abs(profile.m_n - table.k_star)
    if size == 0:
        return ReconstructionReport(
            empty=True, sup_error=None, within_band=False, u_n=table.u_n, slope=None,
            intercept=None, coverage=0.0, l_gamma_size=0, size_ratio=0.0, connected=False,
            contains_k_star=False, m_n_to_kstar_distance=dist, l_gamma_lo=None,
            l_gamma_hi=None)
    diff = differences(table, profile)[sel]
    sup = float(np.max(np.abs(diff)))
    slope, icept = ols(lsites, diff)
    coverage = float(table.local_time[sel].sum()) / table.n
    return ReconstructionReport(
        empty=False, sup_error=sup, within_band=bool(sup < table.u_n), u_n=table.u_n, slope=slope,
        intercept=icept, coverage=coverage, l_gamma_size=size, size_ratio=ratio,
        connected=bool(lsites[-1] - lsites[0] + 1 == size),
        contains_k_star=bool(table.k_star in lsites), m_n_to_kstar_distance=dist,
        l_gamma_lo=int(lsites[0]), l_gamma_hi=int(lsites[-1]))


def localize_bottom(run: WalkRun, true_m_n: int | None = None) -> dict:
    """``k*`` and ``T_{k*}``; with the true bottom, the two localisation gaps."""
    fav = favorite_sites(run)
    t_k = run.ledger.hit(fav.k_star)
    out = {"k_star": fav.k_star, "t_k_star": t_k, "favorites": list(fav.sites),
           "distance_bound": log2(run.n) ** 2, "time_bound": math.log(run.n) ** 3}
    if true_m_n is None:
        return out
    dist = max(abs(true_m_n - x) for x in fav.sites)
    t_m = run.ledger.hit(true_m_n)
    gap = None if t_m is None else abs(t_m - t_k)
    out.update({
        "m_n": true_m_n,
        "distance": dist,
        "distance_ok": dist <= out["distance_bound"],
        "t_gap": gap,
        "t_gap_ok": gap is not None and gap <= out["time_bound"],
        "m_n_visited": t_m is not None,
    })
    return out


def write_estimate_csv(table: EstimateTable, profile: TargetProfile | None, path) -> None:
    """Columns k, L_kn, post_count, in_L_gamma, s_hat, target, diff."""
    target = profile.at(table.sites) if profile is not None else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "L_kn", "post_count", "in_L_gamma", "s_hat", "target", "diff"])
        for j, k in enumerate(table.sites):
            t = "" if target is None else repr(float(target[j]))
            d = "" if target is None else repr(float(target[j] - table.s_hat[j]))
            w.writerow([int(k), int(table.local_time[j]), int(table.post_count[j]),
                        int(bool(table.in_l_gamma[j])), repr(float(table.s_hat[j])), t, d])
