"""Command line entry point: ``deepmf <subcommand> [--config PATH] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

from deepmf.experiments import ExperimentConfig, run

SUBCOMMANDS = {
    "random-net": "random-net",
    "largen": "largen-sweep",
    "dbn": "dbn",
    "spectrum": "spectrum",
    "mc-verify": "mc-verify",
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepmf", description="Mean-field representation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="JSON document with experiment fields")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--realizations", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--quad-order", dest="quad_order", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "kind": SUBCOMMANDS[args.command],
        "seed": args.seed,
        "out": args.out,
        "realizations": args.realizations,
        "samples": args.samples,
        "quad_order": args.quad_order,
    }
    try:
        config = ExperimentConfig.load(args.config, overrides)
        summary = run(config)
    except Exception as exc:  # every failure is reported as JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if args.verbose:
            err["traceback"] = traceback.format_exc()
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, (ValueError, TypeError, OSError)) else 1
    print(json.dumps({"status": "ok", "out": str(config.out_dir()), "summary": summary}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
