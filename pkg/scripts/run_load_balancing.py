#!/usr/bin/env python3
"""Run the load-balancing experiment set: identical servers, heterogeneous
servers, and the actor-critic baseline on the heterogeneous instance."""

import argparse
import sys
from pathlib import Path

from sagepg.cli import main

CONFIGS = [
    "lb_n4.yaml",
    "lb_n4_heterogeneous.yaml",
    "lb_n4_heterogeneous_actor_critic.yaml",
]


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="output directory root")
    args = parser.parse_args(argv)
    config_dir = Path(__file__).resolve().parent.parent / "configs"
    worst = 0
    for name in CONFIGS:
        cli_args = ["run", "--config", str(config_dir / name)]
        if args.out:
            cli_args += ["--out", str(Path(args.out) / Path(name).stem)]
        print(f"=== {name} ===")
        worst = max(worst, main(cli_args))
    return worst


if __name__ == "__main__":
    sys.exit(run())
