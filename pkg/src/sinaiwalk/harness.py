"""Reproducible Monte Carlo campaigns over (environment, walk) replications.

Seed derivation: replication ``r`` of a campaign with master seed ``s`` uses
``SeedSequence([s, r, 0])`` for the environment, ``[s, r, 1]`` for the walk
and ``[s, r, 2]`` for any auxiliary simulation; each sequence is reduced to
one 64-bit integer.  A replication can therefore be rerun on its own.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bd_oracle import (ellipticity_band, exact_variance, expected_local_time_closed_form,
                        expected_local_time_green, mc_excursion_local_time, variance_bound)
from .env_model import FAMILIES, EnvironmentSpec, sample_environment
from .errors import ConfigError
from .estimator import (estimate_table, localize_bottom, ols, reconstruction_error,
                        target_profile)
from .landscape import basic_valley_for_env, site_runs, v_gamma_set
from .walk_sim import run_walk

EXPERIMENTS = ("theorem1", "prop1", "prop2", "containment", "oracle")

# Frozen by the pilot run (200 replications, n = 5e5, master seed 0, two-point
# environment with p = 0.3); see calibration/pilot.json.
CALIBRATED = {"valley_gamma": 0.1, "threshold_exponent": 2.0}


def calibrated_threshold(n: int) -> float:
    """Absolute L-threshold ``(log n)^e`` with the pilot exponent ``e``."""
    return math.log(n) ** CALIBRATED["threshold_exponent"]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    n: int = 500_000
    gamma: float = 4.0
    c0: float = 10.0
    d0: float = 4.0
    d1: float = 16.0
    env_family: str = "two_point"
    env_param: float = 0.3
    replications: int = 1
    master_seed: int = 0
    threshold_override: float | None = None
    out_dir: str | None = None
    workers: int = 1
    # oracle sweep: excursions per Monte Carlo estimate
    excursions: int = 1_000_000

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if int(self.n) < 10_000:
            raise ConfigError("n must be at least 1e4")
        if int(self.replications) < 1:
            raise ConfigError("replications must be at least 1")
        if not self.gamma > 0 or not self.c0 > 0 or not self.d0 > 0 or not self.d1 > 0:
            raise ConfigError("gamma, c0, d0 and d1 must be positive")
        if self.threshold_override is not None and not self.threshold_override > 0:
            raise ConfigError("threshold_override must be positive")
        if self.env_family not in FAMILIES:
            raise ConfigError(f"unknown environment family {self.env_family!r}")
        if int(self.workers) < 1 or int(self.excursions) < 1:
            raise ConfigError("workers and excursions must be positive")
        EnvironmentSpec(self.env_family, self.env_param, 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def digest(self) -> str:
        """Hash of the fields that influence results (not output or pool size)."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def replication_seeds(master_seed: int, rep: int) -> dict:
    def one(stream: int) -> int:
        ss = np.random.SeedSequence([int(master_seed), int(rep), stream])
        return int(ss.generate_state(1, dtype=np.uint64)[0])
    return {"env_seed": one(0), "walk_seed": one(1), "aux_seed": one(2)}


def _f(x):
    """JSON-safe float: non-finite values become None."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


# --- one replication -----------------------------------------------------------

def run_replication(cfg: ExperimentConfig, rep: int, keep_sites: bool = False) -> dict:
    """Environment, walk, valley, estimate and every per-run statistic."""
    seeds = replication_seeds(cfg.master_seed, rep)
    spec = EnvironmentSpec(cfg.env_family, cfg.env_param, seeds["env_seed"])
    env = sample_environment(spec, (-256, 256))
    run = run_walk(env, cfg.n, seeds["walk_seed"])
    env, pot, bv = basic_valley_for_env(run.env, cfg.n, cfg.gamma, cfg.d0)
    table = estimate_table(run, cfg.gamma, cfg.c0, cfg.threshold_override)
    lset = table.l_gamma
    fav = set(localize_bottom(run)["favorites"])
    rec = {
        "rep": rep, **seeds,
        "valley": bv is not None,
        "k_star": table.k_star, "t_k_star": table.t_k_star,
        "threshold": table.threshold,
        "l_gamma_size": int(lset.size),
        "l_gamma_runs": site_runs(lset),
        "favorites_in_l": fav <= set(lset.tolist()),
    }
    if bv is None:
        return rec
    prof = target_profile(pot, bv.m_n, cfg.n)
    rep_ = reconstruction_error(table, prof)
    loc = localize_bottom(run, bv.m_n)
    vset = set(v_gamma_set(pot, bv, cfg.n, cfg.gamma).tolist())
    rec.update({
        "m_n": bv.m_n, "M_n_prime": bv.triple.m_left, "M_n": bv.triple.m_right,
        "empty": rep_.empty, "sup_error": _f(rep_.sup_error), "within_band": rep_.within_band,
        "u_n": rep_.u_n, "slope": _f(rep_.slope), "intercept": _f(rep_.intercept),
        "coverage": rep_.coverage, "size_ratio": rep_.size_ratio,
        "connected": rep_.connected,
        "distance": loc["distance"], "distance_ok": loc["distance_ok"],
        "t_gap": loc["t_gap"], "t_gap_ok": loc["t_gap_ok"],
        "contained": set(lset.tolist()) <= vset,
    })
    if keep_sites:
        sel = table.in_l_gamma
        rec["sites"] = {"k": table.sites[sel].tolist(),
                        "target": prof.at(table.sites[sel]).tolist(),
                        "s_hat": table.s_hat[sel].tolist()}
    return rec


def oracle_replication(cfg: ExperimentConfig, rep: int) -> dict:
    """One random environment: nearest-neighbour exactness, one (m, k) pair
    at distance 2..6 against Monte Carlo, and one band evaluation."""
    seeds = replication_seeds(cfg.master_seed, rep)
    spec = EnvironmentSpec(cfg.env_family, cfg.env_param, seeds["env_seed"])
    env = sample_environment(spec, (-80, 80))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, rep, 3]))
    m = int(rng.integers(-10, 11))
    d = int(rng.integers(2, 7)) * (1 if rng.random() < 0.5 else -1)
    k = m + d
    nn = [abs(expected_local_time_green(env, m, m + 1) - env.a(m) / env.b(m + 1)),
          abs(expected_local_time_green(env, m, m - 1) - env.b(m) / env.a(m - 1))]
    green = expected_local_time_green(env, m, k)
    closed = expected_local_time_closed_form(env, m, k)
    mc = mc_excursion_local_time(env, m, k, cfg.excursions, seeds["aux_seed"],
                                 half_width=abs(d) + 1)
    vb = variance_bound(env, m, k)
    ev = exact_variance(env, m, k)
    bk = int(rng.integers(1, 7)) * (1 if rng.random() < 0.5 else -1)
    band = ellipticity_band(env, m, m + bk)
    return {
        "rep": rep, **seeds, "m": m, "k": k,
        "nn_error": float(max(nn)),
        "green": float(green), "closed_form": float(closed),
        "mc_mean": float(mc["mean"]), "mc_stderr": float(mc["stderr"]),
        "mc_variance": float(mc["variance"]),
        "mc_variance_stderr": float(mc["variance_stderr"]), "mc_capped": int(mc["capped"]),
        "z": float((mc["mean"] - green) / mc["stderr"]) if mc["stderr"] > 0 else 0.0,
        "exact_variance": float(ev), "variance_bound": float(vb),
        # guard: the MC variance may exceed the bound by 4 of its own stderrs
        "variance_violation": bool(mc["variance"] - 4.0 * mc["variance_stderr"] > vb),
        "exact_variance_violation": bool(ev > vb),
        "band_k": m + bk, "band_value": float(band["value"]),
        "band_lower": float(band["lower"]), "band_upper": float(band["upper"]),
        "band_ok": bool(band["ok"]), "band_green_value": float(band["green_value"]),
        "band_green_ok": bool(band["green_ok"]),
        "closed_form_matches_green": bool(abs(closed - green) <= 1e-9 * max(1.0, green)),
    }


# --- aggregation -----------------------------------------------------------------

def _quantiles(xs) -> dict | None:
    xs = [x for x in xs if x is not None]
    if not xs:
        return None
    q = np.quantile(np.asarray(xs, dtype=float), [0.0, 0.1, 0.5, 0.9, 1.0])
    return dict(zip(("min", "q10", "median", "q90", "max"), (float(v) for v in q)))


def _frac(flags) -> float | None:
    flags = list(flags)
    return sum(bool(f) for f in flags) / len(flags) if flags else None


def aggregate(name: str, records: list[dict]) -> dict:
    """Aggregates from the per-replication records alone."""
    if name == "oracle":
        return {
            "envs": len(records),
            "nn_max_error": float(max(r["nn_error"] for r in records)),
            "max_abs_z": float(max(abs(r["z"]) for r in records)),
            "mc_within_4se": _frac(abs(r["z"]) <= 4.0 for r in records),
            "variance_violations": sum(bool(r["variance_violation"]) for r in records),
            "exact_variance_violations": sum(bool(r["exact_variance_violation"])
                                             for r in records),
            "band_violations": sum(not r["band_ok"] for r in records),
            "band_green_violations": sum(not r["band_green_ok"] for r in records),
            "closed_form_disagreements": sum(not r["closed_form_matches_green"] for r in records),
            "capped_excursions": sum(int(r["mc_capped"]) for r in records),
        }
    valid = [r for r in records if r["valley"]]
    out = {
        "replications": len(records),
        "valley_absent": len(records) - len(valid),
        "valley_absent_rate": (len(records) - len(valid)) / len(records),
        "l_gamma_size": _quantiles(r["l_gamma_size"] for r in records),
    }
    if name == "theorem1":
        out.update({
            "success_fraction": _frac(r["within_band"] for r in valid),
            "empty_l_gamma": sum(r["empty"] for r in valid),
            "sup_error": _quantiles(r["sup_error"] for r in valid),
            "abs_slope": _quantiles(None if r["slope"] is None else abs(r["slope"])
                                    for r in valid),
            "median_abs_slope": (_quantiles(abs(r["slope"]) for r in valid
                                            if r["slope"] is not None) or {}).get("median"),
        })
    elif name == "prop1":
        out.update({
            "distance_ok_fraction": _frac(r["distance_ok"] for r in valid),
            "t_gap_ok_fraction": _frac(r["t_gap_ok"] for r in valid),
            "both_ok_fraction": _frac(r["distance_ok"] and r["t_gap_ok"] for r in valid),
            "m_n_unvisited": sum(r["t_gap"] is None for r in valid),
            "distance": _quantiles(r["distance"] for r in valid),
            "t_gap": _quantiles(r["t_gap"] for r in valid),
        })
    elif name == "prop2":
        out.update({
            "coverage": _quantiles(r["coverage"] for r in valid),
            "median_coverage": (_quantiles(r["coverage"] for r in valid) or {}).get("median"),
            "size_ratio": _quantiles(r["size_ratio"] for r in valid),
            "size_ratio_ok_fraction": _frac(0.1 <= r["size_ratio"] <= 10 for r in valid),
            "favorites_in_l_fraction": _frac(r["favorites_in_l"] for r in records),
            "connected_fraction": _frac(r["connected"] for r in valid),
        })
    elif name == "containment":
        out["containment_fraction"] = _frac(r["contained"] for r in valid)
    return out


def passed(name: str, agg: dict) -> bool:
    """The campaign-level acceptance thresholds."""
    def ge(key, x):
        return agg.get(key) is not None and agg[key] >= x
    if name == "theorem1":
        return ge("success_fraction", 0.9)
    if name == "prop1":
        return ge("both_ok_fraction", 0.9)
    if name == "prop2":
        return ge("median_coverage", 0.8) and ge("size_ratio_ok_fraction", 0.8)
    if name == "containment":
        return ge("containment_fraction", 0.9)
    return (agg["variance_violations"] == 0 and agg["band_violations"] == 0
            and agg["mc_within_4se"] == 1.0 and agg["nn_max_error"] <= 1e-12)


# --- campaign ------------------------------------------------------------------

def _work(args):
    cfg, rep = args
    if cfg.name == "oracle":
        return oracle_replication(cfg, rep)
    return run_replication(cfg, rep, keep_sites=(rep == 0 and cfg.name == "theorem1"))


def _records(cfg: ExperimentConfig) -> list[dict]:
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if cfg.workers == 1:
        return [_work(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))


def run_experiment(cfg: ExperimentConfig) -> dict:
    records = _records(cfg)
    figure = None
    if cfg.name == "theorem1":
        figure = _figure_block(records[0])
        for r in records:
            r.pop("sites", None)
    agg = aggregate(cfg.name, records)
    report = {
        "experiment": cfg.name,
        "provenance": {
            "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out_dir", "workers")},
            "config_hash": cfg.digest(),
            "version": __version__,
            "seed_derivation": "SeedSequence([master_seed, rep, stream]); "
                               "stream 0 = environment, 1 = walk, 2 = auxiliary",
        },
        "aggregate": agg,
        "passed": passed(cfg.name, agg),
        "records": records,
    }
    if figure is not None:
        report["figure"] = figure
    return report


def _named(name):
    def f(cfg: ExperimentConfig) -> dict:
        if cfg.name != name:
            cfg = replace(cfg, name=name)
        return run_experiment(cfg)
    f.__name__ = f"exp_{name}"
    return f


exp_theorem1 = _named("theorem1")
exp_prop1 = _named("prop1")
exp_prop2 = _named("prop2")
exp_lemma_containment = _named("containment")
exp_oracle = _named("oracle")


# --- outputs -------------------------------------------------------------------

def _figure_block(rec: dict) -> dict:
    """Curves of replication 0 over L_n^gamma (empty when absent)."""
    s = rec.get("sites") or {"k": [], "target": [], "s_hat": []}
    return {"rep": rec["rep"], "u_n": rec.get("u_n"), **s}


def _plain(o):
    """numpy scalars and arrays to their Python equivalents for JSON."""
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False, default=_plain) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(report_json(report))


def emit_figure_data(report: dict, which: str, path) -> None:
    """Plot-ready CSV from a theorem1 report.

    ``reconstruction``: k, target, s_hat_minus_un, s_hat_plus_un.
    ``difference``: k, diff, fitted (OLS line of diff on k).
    """
    fig = report.get("figure")
    if fig is None:
        raise ConfigError("report carries no figure data (run the theorem1 experiment)")
    k = np.asarray(fig["k"], dtype=np.int64)
    target = np.asarray(fig["target"], dtype=float)
    s_hat = np.asarray(fig["s_hat"], dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if which == "reconstruction":
            w.writerow(["k", "target", "s_hat_minus_un", "s_hat_plus_un"])
            un = fig["u_n"]
            for j in range(k.size):
                w.writerow([int(k[j]), repr(float(target[j])), repr(float(s_hat[j] - un)),
                            repr(float(s_hat[j] + un))])
        elif which == "difference":
            w.writerow(["k", "diff", "fitted"])
            if k.size:
                diff = target - s_hat
                slope, icept = ols(k, diff)
                for j in range(k.size):
                    w.writerow([int(k[j]), repr(float(diff[j])),
                                repr(float(icept + slope * k[j]))])
        else:
            raise ConfigError(f"unknown figure {which!r}")


def write_outputs(report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = report["experiment"]
    paths = [out / f"{name}_report.json"]
    write_report(report, paths[0])
    with open(out / f"{name}_records.csv", "w", newline="") as fh:
        recs = report["records"]
        keys = sorted({k for r in recs for k in r if not isinstance(r[k], (list, dict))})
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in recs:
            w.writerow({k: r.get(k, "") for k in keys})
    paths.append(out / f"{name}_records.csv")
    if "figure" in report:
        for which in ("reconstruction", "difference"):
            p = out / f"{name}_{which}.csv"
            emit_figure_data(report, which, p)
            paths.append(p)
    return paths


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
