"""Command-line entry points.

Exit codes: 0 success, 1 validation/usage error, 2 run abort or failing
check suite.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import List, Optional

import numpy as np

from .checks import available_suites, check_invariants
from .errors import ConfigurationError
from .harness import eval_exact, load_config, resolve_output_dir, run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagepg",
        description="Policy-gradient experiments with score-aware gradient estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment across its seeds")
    run_p.add_argument("--config", required=True, help="path to a YAML experiment config")
    run_p.add_argument(
        "--seeds",
        type=int,
        default=None,
        metavar="N",
        help="run seeds 0..N-1 instead of the configured seed list",
    )
    run_p.add_argument("--out", default=None, metavar="DIR", help="output directory override")

    eval_p = sub.add_parser(
        "eval-exact", help="evaluate the configured environment's exact objective"
    )
    eval_p.add_argument("--config", required=True, help="path to a YAML experiment config")
    eval_p.add_argument(
        "--theta", required=True, help="comma-separated parameter vector, e.g. '0.3,-0.2'"
    )

    check_p = sub.add_parser("check", help="run one invariant suite")
    check_p.add_argument("--suite", required=True, help="suite name (see list-suites)")

    sub.add_parser("list-suites", help="list the available invariant suites")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigurationError("--seeds must be at least 1")
        cfg = dataclasses.replace(cfg, seeds=tuple(range(args.seeds)))
    summary = run_experiment(cfg, out_override=args.out)
    out_dir = resolve_output_dir(cfg, args.out)
    for run in summary["runs"]:
        status = f"aborted ({run['aborted']}) at epoch {run['abort_epoch']}" if run["aborted"] else "ok"
        final = run["final_exact_objective"]
        shown = "n/a" if final is None else f"{final:.6f}"
        print(
            f"seed {run['seed']}: {run['total_steps']} steps, "
            f"final objective {shown}, "
            f"running avg {run['final_running_avg_reward']:.6f} [{status}]"
        )
    mean = summary["final"]["exact_objective_mean"]
    if mean is not None:
        print(f"final exact objective: mean {mean:.6f} +/- {summary['final']['exact_objective_std']:.6f}")
    print(f"results written to {out_dir}")
    if summary["aborted_seeds"]:
        print(f"aborted seeds: {summary['aborted_seeds']}", file=sys.stderr)
        return 2
    return 0


def _cmd_eval_exact(args) -> int:
    cfg = load_config(args.config)
    try:
        theta = np.array([float(v) for v in args.theta.split(",")])
    except ValueError:
        raise ConfigurationError("--theta must be a comma-separated list of numbers")
    value = eval_exact(cfg, theta)
    print("unavailable" if value is None else repr(value))
    return 0


def _cmd_check(args) -> int:
    results = check_invariants(args.suite)
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.suite} :: {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 2


def _cmd_list_suites() -> int:
    for name in available_suites():
        print(name)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; fold the latter
        # into the validation-error code
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval-exact":
            return _cmd_eval_exact(args)
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_list_suites()
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
