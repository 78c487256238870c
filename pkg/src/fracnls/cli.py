"""``fracnls <subcommand> config.json``

Exit codes: 0 success, 1 invalid config, 2 numerical abort, 3 exit-time
study in which every run was censored.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from .config import KIND_OF_COMMAND, load_config
from .experiments import EXIT_ABORT, EXIT_INVALID, RUNNERS
from .normalform import TermCapError

log = logging.getLogger("fracnls")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracnls", description=__doc__.splitlines()[0].strip("`"))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "tabulate eigenvalues, frequencies and d(omega)/ds",
        "scan": "small-divisor scan over s, bad intervals and determinant bounds",
        "simulate": "split-step run with observables",
        "normalform": "Birkhoff normal form of the truncated system with structural checks",
        "exit-time": "time for the H^r norm to double, over an eps grid and seeds",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", help="JSON config document")
    return p


def _print_summary(command: str, summary: dict) -> None:
    printable = {k: v for k, v in summary.items() if k != "records"}
    if command == "scan":
        printable = {k: printable[k] for k in ("threshold", "failing_s", "total_measure") if k in printable}
        printable["bad_intervals"] = len(summary.get("bad_intervals", []))
    print(json.dumps(printable, indent=2, sort_keys=True, default=str))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    kind = KIND_OF_COMMAND[args.command]
    try:
        cfg = load_config(args.config, kind)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"invalid config {args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = RUNNERS[kind](cfg)
    except TermCapError as exc:
        print(f"term cap exceeded: {exc}. Lower N, K or window, or raise term_cap.", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    _print_summary(args.command, result.summary)
    for path in result.files:
        log.info("wrote %s", path)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
