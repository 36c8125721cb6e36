"""Command line entry point: simulate, analyze, identities, report.

Exit codes: 0 ok, 1 evaluation/usage failure, 2 configuration or data error,
3 solver blow-up, 4 tail-mass or unreliable moment/norm, 5 divergent moment
tail, 6 quadrature non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import scipy.fft as sfft

from . import __version__, pipeline
from .config import load
from .errors import NSAsympError

log = logging.getLogger("nsasymp")


def _threads() -> int:
    raw = os.environ.get("NSAF_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring non-integer NSAF_THREADS=%r", raw)
        return 1
    return max(1, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsasymp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the solver and write fields, diagnostics and moments")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir", help="override output.dir from the config")
    s.add_argument("--force", action="store_true", help="rerun even if the stage is complete")

    a = sub.add_parser("analyze", help="moments, profiles, residual decay reports and identities")
    a.add_argument("--run", required=True)
    a.add_argument("--statements", default=None,
                   help="comma separated name[:m=..][:q=..][:mu=..]; empty string runs identities only")
    a.add_argument("--force", action="store_true")

    i = sub.add_parser("identities", help="run the identity battery only")
    i.add_argument("--run", required=True)
    i.add_argument("--force", action="store_true")

    r = sub.add_parser("report", help="emit decay reports")
    r.add_argument("--run", required=True)
    r.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    return p


def _dispatch(args) -> int:
    if args.command == "simulate":
        cfg = load(args.config)
        if args.output_dir:
            cfg = replace(cfg, output_dir=args.output_dir)
        print(pipeline.simulate(cfg, force=args.force))
    elif args.command == "analyze":
        statements = None if args.statements is None else args.statements.split(",")
        pipeline.analyze(args.run, statements, force=args.force)
        print(args.run)
    elif args.command == "identities":
        pipeline.identities(args.run, force=args.force)
        print(args.run)
    else:
        path = pipeline.report(args.run, args.format)
        if args.format == "json":
            sys.stdout.write(path.read_text())
        else:
            print(path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with sfft.set_workers(_threads()):
            return _dispatch(args)
    except NSAsympError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
