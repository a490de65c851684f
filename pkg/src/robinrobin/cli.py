"""Command-line entry point: ``robinrobin [--config FILE] [overrides]``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import (
    INJECTION_PRESETS,
    SCHEMES,
    ConfigError,
    RunConfig,
    _parse_levels,
    describe,
    emit_csv,
    emit_functionals,
    emit_markdown,
    load_config,
    run_sweep,
)
from .mesh import parse_interface


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="robinrobin",
                description="Robin-Robin splitting convergence sweeps on the unit square.")
    p.add_argument("--config", help="config file (key = value, with sections)")
    p.add_argument("--levels", help="comma list or range a..b; h = dt = 2^-k")
    p.add_argument("--alpha", type=float, help="Robin parameter")
    p.add_argument("--degree", type=int, choices=(1, 2))
    p.add_argument("--interface", help="horizontal:<y0> or slanted:<yL>,<yR>")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--T", dest="T", type=float, help="final time")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--functionals", help="per-step Z/S/identity-residual CSV path")
    p.add_argument("--check-identity", action="store_true",
                   help="assert the discrete energy identity at every step")
    p.add_argument("--inject", choices=sorted(INJECTION_PRESETS),
                   help="residual-injection preset (stability runs, zero initial data)")
    p.add_argument("--jobs", type=int, default=1, help="levels run in parallel")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.levels:
        overrides["levels"] = _parse_levels(args.levels)
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.degree is not None:
        overrides["degree"] = args.degree
    if args.interface:
        try:
            overrides["interface"] = parse_interface(args.interface)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if args.scheme:
        overrides["scheme"] = args.scheme
    if args.T is not None:
        overrides["T"] = args.T
    if args.out:
        overrides["csv_path"] = args.out
    if args.functionals:
        overrides["functionals_path"] = args.functionals
    if args.check_identity:
        overrides["check_identity"] = True
    if args.inject:
        overrides["inject"] = args.inject
    return replace(config, **overrides)


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"robinrobin: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose or args.check_identity else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"robinrobin: configuration error: {exc}", file=sys.stderr)
        return 1

    print(f"# {describe(config)}")
    rows = run_sweep(config, jobs=args.jobs)
    print(emit_markdown(rows))
    for row in rows:
        d = row.diagnostics
        if "max_identity_residual" in d:
            extra = f" Xi={d['Xi']:.4e}" if "Xi" in d else ""
            print(f"level {row.level}: max|identity residual|={d['max_identity_residual']:.3e} "
                  f"Z0={d['Z_0']:.4e} ZN={d['Z_N']:.4e} sumS={d['S_sum']:.4e}{extra}")
    try:
        if config.csv_path:
            emit_csv(rows, config.csv_path)
        if config.functionals_path:
            emit_functionals(rows, config.functionals_path)
    except OSError as exc:
        print(f"robinrobin: cannot write output: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in rows if r.failure]
    for r in failed:
        print(f"robinrobin: level {r.level} failed: {r.failure}", file=sys.stderr)
    return 2 if failed else 0


def main():
    sys.exit(cli_main())
