"""Command-line front end for the extraction job."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .extract import ExtractionJob, run_extraction


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Embed an image folder and a concept bank into "
                    "unit-normalized WISEMAT1 matrices.")
    parser.add_argument("--images", required=True, help="image folder")
    parser.add_argument("--bank", required=True, help="concept bank JSONL")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--manifest", default=None,
                        help="dataset manifest fixing the image row order")
    parser.add_argument("--model", default="openai/clip-vit-large-patch14",
                        help="HF CLIP model id, or 'hash' for the offline "
                             "test encoder")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--class-names", action="store_true",
                        help="also embed the manifest's class names "
                             "(zero-shot baseline input)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    job = ExtractionJob(
        image_dir=Path(args.images),
        bank_path=Path(args.bank),
        out_dir=Path(args.out),
        manifest_path=Path(args.manifest) if args.manifest else None,
        model=args.model,
        batch_size=args.batch_size,
        device=args.device,
        class_names=args.class_names,
    )
    try:
        written = run_extraction(job)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, path in written.items():
        print(f"{key}: {path}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
