#!/usr/bin/env python3
"""Run the lattice magnetization-steering experiment (10 x 20 grid)."""

import argparse
import sys
from pathlib import Path

from sagepg.cli import main


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="output directory root")
    args = parser.parse_args(argv)
    config = Path(__file__).resolve().parent.parent / "configs" / "ising_10x20.yaml"
    cli_args = ["run", "--config", str(config)]
    if args.out:
        cli_args += ["--out", args.out]
    return main(cli_args)


if __name__ == "__main__":
    sys.exit(run())
