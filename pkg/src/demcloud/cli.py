"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
invariant violation or unexpected failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, pipeline
from .config import load_config
from .errors import ConfigError, DataError, InternalError


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2; usage errors must be 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(1 if status else 0)


def _build_parser() -> _Parser:
    parser = _Parser(prog="demcloud", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"demcloud {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add_config_command(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="pipeline config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker cap for parallel stages (0 = auto)")
        sp.add_argument("--verbose", action="store_true")
        return sp

    add_config_command("synth", "generate a synthetic strip sequence with truth masks")
    add_config_command("mosaic", "accumulate strips, derive motion masks, clip truths")
    add_config_command("patch", "split strips and truth masks into patches")
    add_config_command("texture", "compute normalized texture stacks per window size")
    add_config_command("train", "train one segmentation model per window size")
    add_config_command("predict", "predict per-patch cloud confidence")
    add_config_command("stitch", "reassemble confidence patches into full frames")
    add_config_command("ensemble", "combine windows, threshold, dilate, emit masks")
    add_config_command("evaluate", "score final masks against ground truth")
    add_config_command("pipeline", "run every stage in sequence")
    add_config_command("validate-config", "check a config file and report problems")

    hs = sub.add_parser("hillshade", help="render a shaded-relief preview of a CFDR grid")
    hs.add_argument("--input", required=True, help="CFDR elevation grid")
    hs.add_argument("--output", required=True, help="output PGM path")
    hs.add_argument("--azimuth", type=float, default=315.0)
    hs.add_argument("--altitude", type=float, default=45.0)
    hs.add_argument("--z-factor", type=float, default=1.0)
    hs.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "hillshade":
            pipeline.hillshade_file(args.input, args.output, args.azimuth,
                                    args.altitude, args.z_factor)
            return 0
        cfg = load_config(args.config, seed_override=args.seed,
                          threads_override=args.threads)
        if args.command == "validate-config":
            print(f"config OK (hash {cfg.config_hash()})")
            return 0
        if args.command == "pipeline":
            summary = pipeline.run_pipeline(cfg, verbose=args.verbose)
        else:
            summary = pipeline.run_stage(args.command, cfg, verbose=args.verbose)
        if args.verbose and summary:
            print(summary)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
