"""Command-line entry point: ``mnl-bandits <subcommand>``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np
import yaml

from .dec import dec_bounds, dec_estimate
from .errors import SolverError, ValidationError
from .experiment import BENCH_DEFAULTS, default_config_text, load_config, oracle_bench, run_experiment
from .lemmas import FAULTS, SUITES, verify_lemmas
from .policies import eps_greedy_dist, log_barrier_dist

EXIT_OK, EXIT_VALIDATION, EXIT_SUITE, EXIT_SOLVER = 0, 1, 2, 3

DEC_DEFAULTS = {
    "fixtures": 50,
    "seed": 0,
    "max_items": 4,
    "max_capacity": 2,
    "gammas": [100.0, 1000.0, 10000.0],
    "eps": [0.1, 0.3, 0.5],
    "margin": -1e-6,
    "search": {},
    "output": "dec_check.csv",
}


def _read_yaml(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a mapping")
    return data


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    if args.workers:
        cfg["workers"] = args.workers
    res = run_experiment(cfg)
    for row in res["summary"]:
        print(",".join(row))
    if res["failures"]:
        for algorithm, seed, error in res["failures"]:
            print(f"failed: {algorithm} seed {seed}: {error}", file=sys.stderr)
        if any("SolverError" in e for _, _, e in res["failures"]):
            return EXIT_SOLVER
    print(f"wrote {cfg['output_dir']}/summary.csv and regret.svg")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suite or None
    for n in names or []:
        if n not in SUITES:
            raise ValidationError(f"unknown suite {n!r} (choose from {', '.join(SUITES)})", field="--suite")
    results = verify_lemmas({"suites": names, "seed": args.seed, "scale": args.scale, "fault": args.fault})
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_SUITE


def dec_check(cfg: dict) -> list:
    """Rows (fixture id, kind, gamma, eps, estimate, bound, margin) over random fixtures."""
    cfg = {**DEC_DEFAULTS, **cfg}
    unknown = set(cfg) - set(DEC_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown key {sorted(unknown)[0]!r}")
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for fid in range(int(cfg["fixtures"])):
        N = int(rng.integers(2, cfg["max_items"] + 1))
        K = int(rng.integers(1, cfg["max_capacity"] + 1))
        gamma = float(rng.choice(cfg["gammas"]))
        eps = float(rng.choice(cfg["eps"]))
        v, r = rng.random(N), rng.random(N)
        for kind, q, bound in (
            ("logbarrier", log_barrier_dist(v, r, gamma, N, K), dec_bounds("logbarrier", N, K, gamma)),
            ("epsgreedy", eps_greedy_dist(v, r, eps, K), dec_bounds("epsgreedy", N, K, gamma, eps)),
        ):
            est = dec_estimate(q, v, r, gamma, K, cfg["search"])
            rows.append((fid, kind, gamma, eps if kind == "epsgreedy" else "", est.value, bound, bound - est.value))
    return rows


def cmd_dec(args) -> int:
    cfg = {**DEC_DEFAULTS, **_read_yaml(args.config)}
    rows = dec_check(cfg)
    out = args.output or cfg["output"]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fixture", "kind", "gamma", "eps", "estimate", "bound", "margin"])
        w.writerows(rows)
    worst = min(r[-1] for r in rows)
    ok = worst >= cfg["margin"]
    print(f"{'PASS' if ok else 'FAIL'} dec-check fixtures={cfg['fixtures']} worst_margin={worst:+.3e} -> {out}")
    return EXIT_OK if ok else EXIT_SUITE


def cmd_bench(args) -> int:
    cfg = _read_yaml(args.config) if args.config else {}
    unknown = set(cfg) - set(BENCH_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown key {sorted(unknown)[0]!r}")
    rows = oracle_bench(cfg)
    for name in ("hedge", "ogd"):
        sel = [r for r in rows if r[0] == name]
        within = sum(r[2] <= r[3] for r in sel)
        print(f"{name}: mean regret {np.mean([r[2] for r in sel]):.3f}, bound {sel[0][3]:.3f}, "
              f"within bound on {within}/{len(sel)} seeds")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["oracle", "seed", "reg_log", "bound"])
            w.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnl-bandits", description="Contextual MNL bandit simulator and checks.")
    p.add_argument("--print-config", action="store_true", help="print the default simulate config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", help="run a configured experiment")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify-lemmas", help="run the property suites")
    s.add_argument("--suite", action="append", help=f"one of: {', '.join(SUITES)} (repeatable)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=1.0, help="multiply every sample count")
    s.add_argument("--fault", choices=sorted(FAULTS), help="inject a known fault (test of the tests)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("dec-check", help="estimate the DEC on random fixtures and compare with the bounds")
    s.add_argument("config")
    s.add_argument("--output")
    s.set_defaults(func=cmd_dec)

    s = sub.add_parser("oracle-bench", help="measure online-oracle log-loss regret")
    s.add_argument("config", nargs="?")
    s.add_argument("--output")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_config:
        print(default_config_text(), end="")
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver did not converge: {exc} (residual {exc.residual})", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
