"""Command-line entry point: ``doilab <experiment> [flags]``.

Exit codes: 0 when every check passes, 2 when a check fails, 1 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from ..errors import ConfigError, DoiLabError
from .config import EXPERIMENTS, build_config, load_config_file
from .experiments import RUNNERS
from .report import write_report

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doilab", description="Double operator integral and spectral shift experiments.")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment", parser_class=_Parser)
    sub.required = True
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--dim", type=int)
        sp.add_argument("--p", type=str, help="Schatten exponent (>= 1 or 'inf')")
        sp.add_argument("--m", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int, help="falls back to $DOI_LAB_SEED, then 0")
        sp.add_argument("--f", dest="f_name", help="registry function")
        sp.add_argument("--out", dest="output_path", help="output directory")
        sp.add_argument("--format", dest="fmt", choices=("csv", "json", "text"))
        sp.add_argument("--dim-half", dest="dim_half", type=int)
        sp.add_argument("--config", help="key=value config file; flags win")
        if name == "counterexample":
            sp.add_argument("--conjugate", action="store_true", help="conjugate by a random unitary")
    return parser


def main(argv: Optional[Sequence[str]] = None, env=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    flags = {k: getattr(args, k) for k in ("dim", "p", "m", "trials", "seed", "f_name", "output_path", "fmt", "dim_half")}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = build_config(args.experiment, flags, file_values, env)
        runner = RUNNERS[cfg.experiment]
        if cfg.experiment == "counterexample":
            report = runner(cfg, conjugate=args.conjugate)
        else:
            report = runner(cfg)
    except ConfigError as exc:
        print(f"doilab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DoiLabError as exc:
        print(f"doilab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if cfg.output_path:
        for path in write_report(report, cfg.output_path, cfg.fmt):
            print(path)
    else:
        sys.stdout.write(report.render(cfg.fmt))
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        print(f"doilab: failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


cli_main = main
