"""Command line for the extractor bridge.

    oboi-extract CONFIG [--out DIR] [--no-validate]

Reads a YAML or JSON extraction config, runs the detector over every
listed image, writes the tensor directory + manifest, and (unless
disabled) checks the result with the downstream validator. Exit codes:
0 success, 1 bad config/usage, 2 extraction or validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import load_config
from .errors import ExtractionFailed, ExtractorError, InvalidExtractionConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "detail": message}) + "\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oboi-extract", description=__doc__)
    parser.add_argument("config", help="extraction config (.yaml/.yml/.json)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument(
        "--no-validate",
        action="store_true",
        help="skip the downstream manifest check",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        config = load_config(args.config)
        if args.no_validate:
            config = dataclasses.replace(config, validate=False)
        from .extract import extract

        summary = extract(config, out_dir=args.out)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    except InvalidExtractionConfig as e:
        sys.stderr.write(
            json.dumps({"error": type(e).__name__, "detail": str(e)}) + "\n"
        )
        return EXIT_USAGE
    except (ExtractorError, OSError, json.JSONDecodeError) as e:
        sys.stderr.write(
            json.dumps({"error": type(e).__name__, "detail": str(e)}) + "\n"
        )
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
