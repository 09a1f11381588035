"""Command line entry points.

Two subcommands: ``export`` turns a text file into an EMB1 or TOK1 file
(plus ids sidecar), ``rerank-scores`` scores every candidate of a rerank
dataset against its sentence. Exit codes: 0 success, 1 usage, 2 anything
the input or model made fail.
"""

from __future__ import annotations

import argparse
import sys

from .formats import (
    POOLINGS,
    ExportError,
    read_concept_names,
    read_input_lines,
    read_rerank_examples,
    write_score_lines,
)
from .inference import (
    DEFAULT_MAX_LENGTH,
    Encoder,
    ExportJob,
    run_export,
    score_rerank_examples,
)


def cmd_export(args: argparse.Namespace) -> int:
    texts = read_input_lines(args.input)
    if args.ids is not None:
        ids = read_input_lines(args.ids, what="ids")
        if len(ids) != len(texts):
            raise ExportError(f"{args.ids}: {len(ids)} ids for {len(texts)} texts")
    else:
        ids = list(texts)
    job = ExportJob(
        model=args.model,
        texts=texts,
        ids=ids,
        max_length=args.max_length,
        batch_size=args.batch_size,
        pooling=args.pooling,
    )
    report = run_export(job, args.out)
    print(
        f"exported {report.n} records at dimension {report.dim} "
        f"({report.n_truncated} truncated) to {args.out}"
    )
    return 0


def cmd_rerank_scores(args: argparse.Namespace) -> int:
    examples = read_rerank_examples(args.data)
    if not examples:
        write_score_lines([], args.out)
        print(f"scored 0 examples to {args.out}")
        return 0
    names = read_concept_names(args.concepts)
    encoder = Encoder(args.model)
    scores = score_rerank_examples(
        encoder,
        examples,
        names,
        max_sentence_length=args.max_length,
        max_name_length=args.max_name_length,
        batch_size=args.batch_size,
    )
    write_score_lines(scores, args.out)
    print(f"scored {len(scores)} examples ({len(scores[0])} candidates each) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normkit-export",
        description="Export transformer embeddings into EMB1/TOK1 files.",
    )
    sub = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    export = sub.add_parser("export", help="embed a text file, one record per line")
    export.add_argument("--model", required=True, help="model identifier or local path")
    export.add_argument("--input", required=True, help="UTF-8 text file, one input per line")
    export.add_argument(
        "--ids",
        help="parallel file of record ids, one per line (default: the input lines themselves)",
    )
    export.add_argument(
        "--max-length",
        type=int,
        default=DEFAULT_MAX_LENGTH["names"],
        help="token budget; conventional values are 20 for mentions, 60 for names, "
        "64 for window contexts, 150 for sentence contexts",
    )
    export.add_argument("--batch-size", type=int, default=128, help="texts per forward pass")
    export.add_argument(
        "--pooling",
        required=True,
        choices=POOLINGS,
        help="cls/nospec/all write a pooled EMB1 file; tokens writes TOK1 records",
    )
    export.add_argument("--out", required=True, help="output file")
    export.set_defaults(handler=cmd_export)

    scores = sub.add_parser("rerank-scores", help="score rerank candidates against sentences")
    scores.add_argument("--model", required=True, help="scorer checkpoint identifier or path")
    scores.add_argument("--data", required=True, help="rerank dataset (json lines)")
    scores.add_argument("--concepts", required=True, help="concept table for candidate names")
    scores.add_argument(
        "--max-length",
        type=int,
        default=DEFAULT_MAX_LENGTH["sentences"],
        help="token budget for sentences",
    )
    scores.add_argument(
        "--max-name-length",
        type=int,
        default=DEFAULT_MAX_LENGTH["names"],
        help="token budget for candidate names",
    )
    scores.add_argument("--batch-size", type=int, default=16, help="texts per forward pass")
    scores.add_argument("--out", required=True, help="output score file (json lines)")
    scores.set_defaults(handler=cmd_rerank_scores)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
