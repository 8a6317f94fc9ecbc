"""featext command line: detect keypoints and export feature-set files."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionError, ExtractionSpec, available_detectors, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featext",
        description="Export image keypoints/descriptors as matcher interchange files",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="detect features on one image")
    p.add_argument("--image", required=True, help="input image file")
    p.add_argument("--detector", default="sift",
                   help=f"one of: {', '.join(available_detectors())}")
    p.add_argument("--out", required=True, help="output feature-set file")
    p.add_argument("--max-features", type=int, default=None,
                   help="keep at most this many keypoints (by response)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExtractionSpec(
            image=args.image, out=args.out,
            detector=args.detector, max_features=args.max_features)
        count = extract(spec)
    except (ExtractionError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {count} features to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
