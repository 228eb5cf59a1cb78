"""Command-line entry point.

Subcommands: simulate, picard, verify-identity, norms, linear-test,
rescale-check.  Exit codes: 0 clean, 2 flagged halt or failed check,
1 usage error (bad arguments, unreadable config).
"""

import argparse
import math
import os
import sys

import numpy as np

from . import io as bio
from .diagnostics import besov_norm, sobolev_norm
from .evolution import evolve, picard_solve
from .harness import Experiment, run_suite
from .initial_data import generate_initial_data


def _parser():
    ap = argparse.ArgumentParser(
        prog="bwm",
        description="Pseudo-spectral simulator and harmonic-analysis "
                    "diagnostics for biharmonic wave maps.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "picard", "verify-identity", "norms",
                 "linear-test", "rescale-check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=".")
        sp.add_argument("--seed", type=int, default=0)
        if name == "norms":
            sp.add_argument("--state", default=None,
                            help="BWM1 state file to analyze instead of "
                                 "config-generated data")
    return ap


def _load(args):
    try:
        cfg = bio.load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"bwm: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(1)
    os.makedirs(args.out, exist_ok=True)
    return cfg


def cmd_simulate(args):
    cfg = _load(args)
    run = bio.build_run_config(cfg)
    s0 = generate_initial_data(run.data_kind, run.grid, run.delta,
                               seed=args.seed)
    traj = evolve(run, s0)
    bio.monitors_csv(os.path.join(args.out, "monitors.csv"), traj)
    bio.save_state(os.path.join(args.out, "initial.bwm"), s0)
    bio.save_state(os.path.join(args.out, "final.bwm"), traj.final_state())
    if traj.halted:
        print(f"flagged halt: {traj.halt_reason}", file=sys.stderr)
        return 2
    return 0


def cmd_picard(args):
    cfg = _load(args)
    run = bio.build_run_config(cfg)
    s0 = generate_initial_data(run.data_kind, run.grid, run.delta,
                               seed=args.seed)
    res = picard_solve(run, s0)
    bio.picard_csv(os.path.join(args.out, "picard.csv"), res)
    if res.halted:
        print(f"flagged halt: {res.halt_reason}", file=sys.stderr)
        return 2
    return 0


def _suite_command(args, suite, name):
    cfg = _load(args)
    exp = Experiment(name, cfg, suites=(suite,), out_dir=args.out,
                     seed=args.seed)
    report = run_suite(exp)
    for check in report["suites"][suite]:
        status = "pass" if check["passed"] else "FAIL"
        print(f"{check['name']}: {status} "
              f"(measured {bio.fmt_float(check['measured'])}, "
              f"tolerance {bio.fmt_float(check['tolerance'])})")
    return 0 if report["passed"] else 2


def cmd_norms(args):
    cfg = _load(args)
    if args.state:
        try:
            state = bio.load_state(args.state)
        except (OSError, ValueError) as exc:
            print(f"bwm: cannot read state: {exc}", file=sys.stderr)
            return 1
    else:
        run = bio.build_run_config(cfg)
        state = generate_initial_data(run.data_kind, run.grid, run.delta,
                                      seed=args.seed)
    grid = state.grid
    rows = []
    for s in (grid.d / 2.0, 1.0, 2.0):
        for p in (1.0, 2.0):
            v = besov_norm(state.u, s, p)
            rows.append(("besov", s, p, math.nan, "", v.value,
                         v.trunc_low, v.trunc_high, v.flag))
        v = sobolev_norm(state.u, s)
        rows.append(("sobolev", s, 2.0, math.nan, "", v.value,
                     v.trunc_low, v.trunc_high, v.flag))
    bio.write_csv(os.path.join(args.out, "norms.csv"),
                  ["family", "s", "p", "q", "e", "value", "truncation_low",
                   "truncation_high", "flag"],
                  [tuple(float(c) if isinstance(c, (int, float, np.floating))
                         else c for c in r) for r in rows])
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            code = cmd_simulate(args)
        elif args.command == "picard":
            code = cmd_picard(args)
        elif args.command == "verify-identity":
            code = _suite_command(args, "identity", "verify_identity")
        elif args.command == "norms":
            code = cmd_norms(args)
        elif args.command == "linear-test":
            code = _suite_command(args, "linear", "linear_test")
        else:
            code = _suite_command(args, "scaling", "rescale_check")
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    return code


if __name__ == "__main__":
    sys.exit(main())
