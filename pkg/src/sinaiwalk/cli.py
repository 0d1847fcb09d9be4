"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 an experiment ran
but missed its acceptance threshold.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .env_model import (EnvironmentSpec, hypothesis_diagnostics,
                        sample_environment, write_environment)
from .errors import ConfigError, UsageError
from .estimator import (estimate_table, localize_bottom, reconstruction_error,
                        target_profile, write_estimate_csv)
from .harness import (EXPERIMENTS, ExperimentConfig, oracle_replication, report_json,
                      run_experiment, write_outputs)
from .landscape import basic_valley_for_env, good_environment_check, v_gamma_set
from .walk_sim import load_run, run_walk, save_run

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

# flag name -> ExperimentConfig field
_FIELDS = {"n": "n", "gamma": "gamma", "c0": "c0", "d0": "d0", "d1": "d1",
           "env_family": "env_family", "env_param": "env_param", "seed": "master_seed",
           "reps": "replications", "threshold_override": "threshold_override",
           "out": "out_dir", "workers": "workers", "excursions": "excursions"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    # defaults stay None so that a config file can fill the gaps
    p.add_argument("--config", help="JSON file of settings; flags win on conflict")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--c0", type=float)
    p.add_argument("--d0", type=float)
    p.add_argument("--d1", type=float)
    p.add_argument("--env-family", dest="env_family")
    p.add_argument("--env-param", dest="env_param", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--threshold-override", dest="threshold_override", type=float)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sinaiwalk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("env", help="sample an environment and describe it")
    _common(p)
    p.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))

    p = sub.add_parser("walk", help="simulate a walk and store it with its ledger")
    _common(p)
    p.add_argument("--walk-seed", dest="walk_seed", type=int)

    p = sub.add_parser("estimate", help="reconstruct the potential from a stored walk")
    _common(p)
    p.add_argument("--run", required=True, help="walk artifact written by 'walk'")
    p.add_argument("--valley-gamma", dest="valley_gamma", type=float,
                   help="gamma of the basic valley used for scoring (default --gamma)")

    p = sub.add_parser("valley", help="basic valley and good-environment diagnostics")
    _common(p)

    p = sub.add_parser("oracle", help="excursion local-time oracle sweep")
    _common(p)
    p.add_argument("--excursions", type=int)

    p = sub.add_parser("experiment", help="run one Monte Carlo campaign")
    p.add_argument("name", choices=EXPERIMENTS)
    _common(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--excursions", type=int)

    p = sub.add_parser("calibrate", help="pilot run fixing gamma and the L-threshold")
    _common(p)
    return ap


def _settings(args) -> dict:
    """Config-file values overlaid by explicit flags, keyed by config field."""
    out: dict = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in raw.items():
            key = _FIELDS.get(k.replace("-", "_"), k.replace("-", "_"))
            out[key] = v
    for flag, field in _FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[field] = v
    return out


def _spec(s: dict) -> EnvironmentSpec:
    return EnvironmentSpec(s.get("env_family", "two_point"), float(s.get("env_param", 0.3)),
                           int(s.get("master_seed", 0)))


def _emit(obj: dict, out: str | None, name: str) -> None:
    text = report_json(obj)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    sys.stdout.write(text)


def cmd_env(args, s) -> int:
    spec = _spec(s)
    lo, hi = args.window or (-100, 100)
    env = sample_environment(spec, (lo, hi))
    info = {"identity": env.identity(), "window": [env.lo, env.hi], "spec": spec.to_dict(),
            "diagnostics": hypothesis_diagnostics(spec)}
    if s.get("out_dir"):
        Path(s["out_dir"]).mkdir(parents=True, exist_ok=True)
        write_environment(env, Path(s["out_dir"]) / "environment.csv")
    _emit(info, s.get("out_dir"), "environment.json")
    return EXIT_OK


def cmd_walk(args, s) -> int:
    spec = _spec(s)
    n = int(s.get("n", 500_000))
    env = sample_environment(spec, (-256, 256))
    run = run_walk(env, n, args.walk_seed if args.walk_seed is not None else spec.master_seed)
    loc = localize_bottom(run)
    info = {"env": run.env_ref, "n": n, "walk_seed": run.walk_seed,
            "final_position": run.final_position, "k_star": loc["k_star"],
            "t_k_star": loc["t_k_star"], "l_star": run.ledger.max_count,
            "range": [run.ledger.lo, run.ledger.hi]}
    out = s.get("out_dir")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        save_run(run, Path(out) / "walk.bin")
        run.ledger.to_csv(Path(out) / "ledger.csv")
    _emit(info, out, "walk.json")
    return EXIT_OK


def cmd_estimate(args, s) -> int:
    run = load_run(args.run)
    gamma = float(s.get("gamma", 4.0))
    c0 = float(s.get("c0", 10.0))
    table = estimate_table(run, gamma, c0, s.get("threshold_override"))
    vg = args.valley_gamma if args.valley_gamma is not None else gamma
    _, pot, bv = basic_valley_for_env(run.env, run.n, vg, float(s.get("d0", 4.0)))
    profile = None if bv is None else target_profile(pot, bv.m_n, run.n)
    info = {"n": run.n, "gamma": gamma, "c0": c0, "u_n": table.u_n,
            "threshold": table.threshold, "k_star": table.k_star,
            "t_k_star": table.t_k_star, "l_gamma_size": int(table.l_gamma.size),
            "valley": None if bv is None else bv.to_dict()}
    if profile is not None:
        info["reconstruction"] = reconstruction_error(table, profile).to_dict()
        info["localization"] = localize_bottom(run, bv.m_n)
    out = s.get("out_dir")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_estimate_csv(table, profile, Path(out) / "estimate.csv")
    _emit(info, out, "estimate.json")
    return EXIT_OK


def cmd_valley(args, s) -> int:
    spec = _spec(s)
    n = int(s.get("n", 500_000))
    gamma = float(s.get("gamma", 4.0))
    d0, d1 = float(s.get("d0", 4.0)), float(s.get("d1", 16.0))
    env = sample_environment(spec, (-256, 256))
    env, pot, bv = basic_valley_for_env(env, n, gamma, d0)
    rep = good_environment_check(env, n, gamma, d0, d1)
    info = {"valley": None if bv is None else bv.to_dict(v_gamma_set(pot, bv, n, gamma)),
            "good_environment": {k: getattr(rep, k) for k in (
                "basic_valley_exists", "window_bound_ok", "window_bound", "sa_ok",
                "sa_bound", "d0", "d1")} | {"sa_weight": rep.sa_weight if bv else None,
                                            "good": rep.good}}
    _emit(info, s.get("out_dir"), "valley.json")
    return EXIT_OK


def cmd_oracle(args, s) -> int:
    cfg = _config("oracle", s)
    rows = [oracle_replication(cfg, r) for r in range(cfg.replications)]
    out = s.get("out_dir")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "oracle.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "k", "expected_paper", "expected_green", "mc_mean", "mc_stderr",
                        "variance_bound", "mc_variance", "band_ok"])
            for r in rows:
                w.writerow([r["m"], r["k"], repr(r["closed_form"]), repr(r["green"]),
                            repr(r["mc_mean"]), repr(r["mc_stderr"]),
                            repr(r["variance_bound"]), repr(r["mc_variance"]),
                            int(r["band_ok"])])
    sys.stdout.write(report_json({"records": rows}))
    return EXIT_OK


def _config(name: str, s: dict) -> ExperimentConfig:
    keys = set(ExperimentConfig.__dataclass_fields__) - {"name"}
    unknown = set(s) - keys
    if unknown:
        raise ConfigError(f"unknown settings {sorted(unknown)}")
    return replace(ExperimentConfig(name), **s)


def cmd_experiment(args, s) -> int:
    cfg = _config(args.name, s)
    report = run_experiment(cfg)
    if cfg.out_dir:
        write_outputs(report, cfg.out_dir)
    sys.stdout.write(report_json({k: report[k] for k in ("experiment", "aggregate", "passed",
                                                         "provenance")}))
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_calibrate(args, s) -> int:
    from .calibration import pilot

    res = pilot(n=int(s.get("n", 500_000)), reps=int(s.get("replications", 200)),
                master_seed=int(s.get("master_seed", 0)),
                family=s.get("env_family", "two_point"),
                param=float(s.get("env_param", 0.3)), c0=float(s.get("c0", 10.0)),
                d0=float(s.get("d0", 4.0)), d1=float(s.get("d1", 16.0)))
    _emit(res, s.get("out_dir"), "pilot.json")
    return EXIT_OK


COMMANDS = {"env": cmd_env, "walk": cmd_walk, "estimate": cmd_estimate, "valley": cmd_valley,
            "oracle": cmd_oracle, "experiment": cmd_experiment, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return COMMANDS[args.command](args, _settings(args))
    except (UsageError, ConfigError, OSError) as exc:
        sys.stderr.write(f"sinaiwalk: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
