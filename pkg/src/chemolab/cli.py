"""Command line entry point: ``chemolab run|sweep <config>`` and ``chemolab check``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import ConfigError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="chemolab",
                                description="Chemorepulsion model with lethality: scenarios and checks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory for CSV and report.txt")
    common.add_argument("--seed", type=int, help="seed for random initial data")
    common.add_argument("--quiet", action="store_true", help="only print failures")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one scenario config")
    run.add_argument("config")
    sweep = sub.add_parser("sweep", parents=[common], help="run a sweep scenario config")
    sweep.add_argument("config")
    sub.add_parser("check", parents=[common], help="run the built-in acceptance suite")
    return p


def _say(args, text):
    if not args.quiet:
        print(text)


def _run_config(args, parser):
    from .scenarios import run_scenario

    if not os.path.isfile(args.config):
        parser.print_usage(sys.stderr)
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.out)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "sweep" and cfg.scenario != "sweep":
        print(f"error: {args.config} is a {cfg.scenario} config, not a sweep", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_scenario(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, v in report.verdicts.items():
        if v.status != "pass" or not args.quiet:
            value = "n/a" if v.value is None else f"{v.value:.6g}"
            tol = "n/a" if v.tol is None else f"{v.tol:.6g}"
            print(f"{name:24s} {v.status:12s} value={value} tol={tol}")
    if report.numerical_failure:
        print(f"numerical failure: {report.metadata.get('error', '')}")
    _say(args, f"{cfg.scenario}: {report.wall_time:.2f}s")
    for path in report.series_files:
        _say(args, f"wrote {path}")
    return report.exit_code()


def _check(args):
    from .acceptance import run_all

    results = run_all(quiet=True)
    for res in results:
        if not (args.quiet and res.passed):
            print(res.line())
    failed = sum(not r.passed for r in results)
    _say(args, f"{len(results) - failed}/{len(results)} criteria passed")
    return EXIT_FAIL if failed else EXIT_PASS


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return _check(args)
    return _run_config(args, parser)


if __name__ == "__main__":
    sys.exit(main())
