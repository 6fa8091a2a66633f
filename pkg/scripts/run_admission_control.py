#!/usr/bin/env python3
"""Run the admission-control experiment set (both arrival regimes plus the
actor-critic baseline).  Results land under results/ unless --out is given."""

import argparse
import sys
from pathlib import Path

from sagepg.cli import main

CONFIGS = [
    "mm1_k0.yaml",
    "mm1_k3.yaml",
    "mm1_overloaded_k2.yaml",
    "mm1_k0_actor_critic.yaml",
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
