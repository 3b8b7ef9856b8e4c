"""``mrnprk`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from .errors import MrnprkError, NumericalFailure
from .harness import COMMANDS, ExperimentConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrnprk", description="Multirate NPRK verification and experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--method", action="append", dest="methods",
                   help="registry name or JSON tensor path (repeatable, overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config, methods=args.methods, out=args.out)
        else:
            cfg = ExperimentConfig.from_dict({}, methods=args.methods, out=args.out)
        index = COMMANDS[args.command](cfg)
    except NumericalFailure as exc:
        print(f"mrnprk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MrnprkError as exc:
        print(f"mrnprk: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(index.get('methods', {}))} method(s) to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
