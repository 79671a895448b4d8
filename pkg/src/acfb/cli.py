"""Command-line entry point: ``acfb <subcommand> --config <path> [--check] [--out <dir>]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 gate failure under ``--check``.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import __version__
from .config import load_config
from .errors import (BadInit, BallOutOfGrid, ConfigError, DegenerateFit, DomainTooSmall, FormatError,
                     GridTooSmall, NonFiniteEnergy, NotOnFreeBoundary, RadiusOutOfGrid, ValidationFailure)
from .pipelines import SUBCOMMANDS
from .report import write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GATE = 0, 2, 3, 4

# problems with the requested run itself, as opposed to failures of the numerics
CONFIG_ERRORS = (ConfigError, BadInit, FormatError, GridTooSmall, RadiusOutOfGrid, BallOutOfGrid,
                 ValidationFailure)
NUMERIC_ERRORS = (NonFiniteEnergy, DomainTooSmall, NotOnFreeBoundary, DegenerateFit)

log = logging.getLogger("acfb")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acfb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"acfb {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    helps = {
        "minimize": "minimize from the configured initial field; writes a snapshot and the energy trace",
        "analyze": "interface measures, free-boundary length, ball energy and their log-log fits",
        "weiss": "Weiss energy traces about free-boundary probes",
        "growth": "sup-delta growth exponents about free-boundary probes",
        "census": "sub-cube classification and its scaling in k",
        "connect1d": "one-dimensional connection between two wells",
        "sweep": "alpha or grid-size ladder with an aggregated table",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--check", action="store_true", help="evaluate acceptance gates; exit 4 on failure")
        sp.add_argument("--out", default=None, help="output directory (overrides config and environment)")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def run(subcommand, config_path, check=False, out=None) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = cfg.output_path(out)
    os.makedirs(out_dir, exist_ok=True)
    base_dir = os.path.dirname(os.path.abspath(config_path))
    outcome, code = None, EXIT_OK
    try:
        outcome = SUBCOMMANDS[subcommand](cfg, out_dir, base_dir)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    gates = []
    if outcome is not None:
        gates = [g.as_dict() for g in outcome.gates]
        for g in outcome.gates:
            tag = "PASS" if g.passed else ("FAIL" if g.blocking else "WARN")
            print(f"{tag} {g.name}: {g.value} ({g.threshold})")
        if check and outcome.failed:
            code = EXIT_GATE
    write_manifest(out_dir, subcommand=subcommand, config_sha256=cfg.sha256, seed=cfg.seed,
                   wall_time=time.perf_counter() - t0, exit_code=code,
                   artifacts=[] if outcome is None else outcome.artifacts, gates=gates, meta=cfg.meta,
                   config_path=os.path.abspath(config_path))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.check, args.out)


if __name__ == "__main__":
    sys.exit(main())
