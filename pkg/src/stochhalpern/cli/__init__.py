"""Command-line harness: ``stochhalpern {solve,compare,variance-check,sweep} --config PATH``."""

from __future__ import annotations

import argparse
import sys

from ..estimators import InvalidParameter
from .commands import (EXIT_CONFIG, cmd_compare, cmd_solve, cmd_sweep, cmd_variance_check)
from .config import ConfigError

COMMANDS = {
    "solve": (cmd_solve, "run one solver and write trace.csv and summary.json"),
    "compare": (cmd_compare, "run several methods under a shared query budget"),
    "variance-check": (cmd_variance_check, "check the estimator variance schedule"),
    "sweep": (cmd_sweep, "measure how oracle queries scale with eps"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochhalpern", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH", help="INI experiment config")
        p.add_argument("--out-dir", metavar="PATH", help="override [output] dir")
        p.add_argument("--seed", type=int, metavar="N", help="override [solver] seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        return func(args)
    except (ConfigError, InvalidParameter) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
