"""stfx-export: one-shot feature export for the animation engine.

Exit codes: 0 success, 1 usage error, 2 bad input or unavailable model.
"""

import argparse
import sys

from .backends import MODEL_REGISTRY, ModelUnavailableError
from .export import export


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stfx-export",
        description="Export speech features from a WAV file to an STFX file.",
    )
    parser.add_argument("--wav", required=True, help="16-bit PCM mono WAV input")
    parser.add_argument(
        "--model", default="logmel",
        help=f"encoder backend: {', '.join(sorted(MODEL_REGISTRY))} (default logmel)",
    )
    parser.add_argument(
        "--fps", type=float, default=30.0,
        help="target mesh frame rate; output has round(duration * fps) frames",
    )
    parser.add_argument("--out", required=True, help="output STFX path")
    return parser


def run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        summary = export(args.wav, args.model, args.fps, args.out)
    except (ValueError, OSError, ModelUnavailableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for key, value in summary.items():
        print(f"{key}: {value}")
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
