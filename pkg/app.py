"""
fracbump command-line entry point.

    fracbump <subcommand> --config FILE [--k K] [--threads T] [--out DIR]

Exit codes: 0 success, 2 configuration, 3 convergence, 4 artifact I/O,
1 anything else raised by the package.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from scipy import fft

from cli.commands import COMMANDS
from utils.artifacts import write_json
from utils.config import load_run_config, settings
from utils.exceptions import FracBumpError
from utils.logging import logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracbump",
        description="Ring-shaped multi-spike solutions of the fractional Schrodinger equation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, type=Path, help="key-value or JSON run config")
        cmd.add_argument("--threads", type=int, default=None, help="FFT worker threads")
        cmd.add_argument("--out", type=str, default=None, help="output directory")
        if name in ("ansatz", "reduce", "construct"):
            cmd.add_argument("--k", type=int, default=None, help="number of spikes")
        if name == "coeffs":
            cmd.add_argument("--field", type=Path, default=None,
                             help="ground-state field file to reuse")
    return parser


def run(args: argparse.Namespace) -> List[Path]:
    config = load_run_config(args.config).with_overrides(out=args.out, threads=args.threads)
    config.validate()
    threads = config.threads or settings.threads or 1
    logger.set_level(settings.log_level)
    logger.info("starting", command=args.command, out=config.out, threads=threads)

    command = COMMANDS[args.command]
    with fft.set_workers(threads):
        if args.command == "coeffs":
            return command(config, args.field)
        if args.command in ("ansatz", "reduce", "construct"):
            return command(config, args.k)
        return command(config)


def _report_failure(error: FracBumpError, out: Optional[str]) -> None:
    record = error.to_record()
    print(json.dumps(record, sort_keys=True, default=str), file=sys.stderr)
    if out is None:
        return
    try:
        write_json(Path(out) / "error.json", record)
    except FracBumpError:
        pass


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        paths = run(args)
    except FracBumpError as error:
        logger.error("run failed", error=type(error).__name__, detail=str(error))
        out = args.out
        if out is None:
            try:
                out = load_run_config(args.config).out
            except FracBumpError:
                out = None
        _report_failure(error, out)
        return error.exit_code
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
