#!/usr/bin/env python3
"""Simulate, analyze and report one of the shipped configs.

    python scripts/run_experiment.py reference [--output-dir runs] [--force]

Names: reference, dipole, heat, smoke. The dipole config skips analyze by
default (its analysis is the profile-scaling and gap check in the tests);
pass --analyze to run it anyway.
"""

import argparse
import sys
from pathlib import Path

from nsasymp import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("name", choices=sorted(c.stem for c in CONFIGS.glob("*.cfg")))
    p.add_argument("--output-dir", default="runs")
    p.add_argument("--force", action="store_true")
    p.add_argument("--analyze", action="store_true", help="analyze the dipole run too")
    args = p.parse_args(argv)

    extra = ["--force"] if args.force else []
    code = cli.main(["simulate", "--config", str(CONFIGS / f"{args.name}.cfg"),
                     "--output-dir", args.output_dir, *extra])
    if code or (args.name == "dipole" and not args.analyze):
        return code
    run = str(Path(args.output_dir) / args.name)
    code = cli.main(["analyze", "--run", run, *extra])
    if code:
        return code
    return cli.main(["report", "--run", run, "--format", "csv"])


if __name__ == "__main__":
    sys.exit(main())
