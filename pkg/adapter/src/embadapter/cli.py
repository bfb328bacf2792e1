"""Command-line front end for embedding export jobs.

Exit codes mirror the analytics toolkit: 0 success, 1 data/model error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoders import EncoderError
from .formats import FormatError
from .jobs import EmbedJob, JobError, embed_images, embed_texts, export_word_vectors


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embadapter", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand")

    for name in ("embed-texts", "embed-images"):
        sp = subs.add_parser(name)
        sp.add_argument("--manifest", required=True, help="JSONL input manifest")
        sp.add_argument("--model", required=True, help="model id (e.g. hash:256)")
        sp.add_argument("--output", required=True)
        sp.add_argument("--format", choices=("text", "binary"), default="text")
        sp.add_argument("--normalize", action="store_true")
        sp.add_argument("--batch-size", type=int, default=64)

    sp = subs.add_parser("export-words")
    sp.add_argument("--vocab", required=True, help="one word per line")
    sp.add_argument("--source", required=True, help="text-format word vectors")
    sp.add_argument("--output", required=True)
    sp.add_argument("--format", choices=("text", "binary"), default="text")
    return parser


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.subcommand in ("embed-texts", "embed-images"):
            job = EmbedJob(manifest=args.manifest, model_id=args.model,
                           output=args.output, format=args.format,
                           normalize=args.normalize, batch_size=args.batch_size)
            runner = embed_texts if args.subcommand == "embed-texts" else embed_images
            manifest = runner(job)
        else:
            vocab = [w.strip() for w in Path(args.vocab).read_text("utf-8").splitlines()
                     if w.strip()]
            manifest = export_word_vectors(vocab, args.source, args.output,
                                           format=args.format)
        json.dump(manifest, sys.stdout, sort_keys=True)
        print()
        return 0
    except (JobError, FormatError, EncoderError, OSError,
            json.JSONDecodeError) as e:
        print(f"{args.subcommand}: error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
