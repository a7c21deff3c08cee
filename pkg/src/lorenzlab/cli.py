"""Command line entry point for the experiment runner.

Exit codes: 0 when the run completed and every check passed, 1 on a
runtime failure or any failed check (a partial manifest is still
written), 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, format_config, load_config
from .errors import ConfigError
from .experiments import run_directory, run_experiment


def _parse_overrides(items) -> dict:
    pairs = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorenzlab",
        description="Run a named experiment and write a manifest with "
                    "per-check outcomes and artifact hashes.")
    parser.add_argument("experiment", nargs="?", choices=EXPERIMENTS,
                        help="experiment to run (else from config file)")
    parser.add_argument("-c", "--config", metavar="FILE",
                        help="key = value config file")
    parser.add_argument("-s", "--set", dest="overrides", action="append",
                        metavar="KEY=VALUE", help="override one key")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _parse_overrides(args.overrides)
        if args.experiment:
            overrides["experiment"] = args.experiment
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.print_config:
        print(format_config(cfg), end="")
        return 0

    try:
        manifest = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for check in manifest.checks:
        mark = "PASS" if check.passed else "FAIL"
        bound = "" if check.bound is None else f" (bound {check.bound:g})"
        print(f"[{mark}] {check.name}: {check.value:g}{bound}")
    print(f"manifest: {run_directory(cfg) / 'manifest.json'}")
    if manifest.status != "ok":
        print(f"error: {manifest.error}", file=sys.stderr)
        return 1
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
