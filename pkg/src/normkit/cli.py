"""Command-line entry point wiring the library into reproducible pipelines.

Every artifact-producing subcommand writes a manifest next to its output
(``<out>.manifest.json`` for files, ``manifest.json`` inside directory
outputs) echoing the resolved configuration, with no timestamps, so a run
can be repeated exactly; running the same configuration twice produces
byte-identical files. All writes are atomic.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import LabeledVector, ProjectionModel, TrainingConfig, load_training_config
from .align import save_loss_trace, save_training_config, train
from .bpe import save_merges, save_vocab, train_bpe, word_counts
from .candidates import read_predictions, write_predictions
from .embedlink import BuiltinEmbedder, EmbeddingMatrix, ExtractionConfig, HashedEmbeddingTable
from .embedlink import build_embedding_index, link_embedding_batch, load_embeddings, pool, save_embeddings
from .erroranalysis import analyze, save_error_report, write_error_records_csv
from .exceptions import DataError, NormkitError
from .ioutil import atomic_write_text, dump_json
from .kb import load_concept_table, load_hierarchy, load_kb_dir, load_semantic_groups
from .kb import load_semantic_types, merge_lexicon, read_lexicon, save_kb_dir, stats
from .metrics import REPORT_NS, evaluate, save_metrics_report
from .rerank import build_rerank_dataset, read_rerank_dataset, read_score_lines
from .rerank import rerank_from_scores, write_rerank_dataset
from .stringlink import PipelineConfig, build_string_index, link_string_batch
from .textprep import DEFAULT_STEMMER, collect_mentions, context_window, iter_mentions
from .textprep import read_corpus, sentence_context, word_tokenize

SCORE_FORMS = ("neg_distance", "similarity")
CONTEXT_MODES = ("none", "window", "sentence")


# ---------------------------------------------------------------------------
# Manifest plumbing


def manifest_path(out: str | Path, directory: bool) -> Path:
    out = Path(out)
    return out / "manifest.json" if directory else Path(str(out) + ".manifest.json")


def _write_manifest(
    out: str | Path,
    directory: bool,
    subcommand: str,
    arguments: dict,
    outputs: Sequence[str],
    summary: dict | None = None,
) -> None:
    payload: dict = {"subcommand": subcommand, "arguments": arguments, "outputs": list(outputs)}
    if summary is not None:
        payload["summary"] = summary
    atomic_write_text(manifest_path(out, directory), dump_json(payload) + "\n")


def _manifest_config(artifact: str | Path) -> str | None:
    """Extraction config recorded in an artifact's manifest, if recoverable."""
    path = manifest_path(artifact, directory=False)
    if not path.is_file():
        return None
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return None
    value = payload.get("arguments", {}).get("config")
    return value if isinstance(value, str) else None


def _resolve_threads(value: int | None) -> int:
    """--threads beats NORMKIT_THREADS beats 1."""
    if value is None:
        env = os.environ.get("NORMKIT_THREADS", "")
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise DataError(f"NORMKIT_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise DataError(f"thread count must be >= 1, got {value}")
    return value


def _gold_from_corpus(corpus) -> dict[str, str]:
    return {m.id: m.gold_cui for _, m in iter_mentions(corpus) if m.gold_cui is not None}


def _outdir(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# kb


def cmd_kb_build(args: argparse.Namespace) -> int:
    kb = load_concept_table(args.concepts)
    if args.types:
        load_semantic_types(args.types, kb)
    if args.hierarchy:
        load_hierarchy(args.hierarchy, kb)
    if args.groups:
        load_semantic_groups(args.groups, kb)
    written = save_kb_dir(kb, _outdir(args.out))
    _write_manifest(
        args.out,
        directory=True,
        subcommand="kb build",
        arguments={
            "concepts": args.concepts,
            "types": args.types,
            "hierarchy": args.hierarchy,
            "groups": args.groups,
            "out": args.out,
        },
        outputs=written,
        summary={"n_concepts": kb.n_concepts, "n_names": kb.n_names},
    )
    print(f"knowledge base written to {args.out}: {kb.n_concepts} concepts, {kb.n_names} names")
    return 0


def cmd_kb_merge_lexicon(args: argparse.Namespace) -> int:
    kb = load_kb_dir(args.kb)
    entries = read_lexicon(args.lexicon)
    report = merge_lexicon(kb, entries, stemmer=DEFAULT_STEMMER if args.stem else None)
    written = save_kb_dir(kb, _outdir(args.out))
    _write_manifest(
        args.out,
        directory=True,
        subcommand="kb merge-lexicon",
        arguments={"kb": args.kb, "lexicon": args.lexicon, "stem": args.stem, "out": args.out},
        outputs=written,
        summary={
            "cuis_extended": report.cuis_extended,
            "names_added": report.names_added,
            "skipped_ambiguous": report.skipped_ambiguous,
            "skipped_unmatched": report.skipped_unmatched,
        },
    )
    print(
        f"merged {len(entries)} lexicon entries: extended {report.cuis_extended} concepts "
        f"with {report.names_added} names ({report.skipped_ambiguous} ambiguous, "
        f"{report.skipped_unmatched} unmatched)"
    )
    return 0


def cmd_kb_stats(args: argparse.Namespace) -> int:
    # read-only: prints a table, writes nothing, so no manifest
    print(stats(load_kb_dir(args.kb)).format_table())
    return 0


# ---------------------------------------------------------------------------
# bpe


def cmd_bpe_train(args: argparse.Namespace) -> int:
    if args.corpus:
        text = "\n".join(post.text for post in read_corpus(args.corpus))
    else:
        text = Path(args.text).read_text(encoding="utf-8")
    counts = word_counts(text)
    if not counts:
        raise DataError("training text contains no words")
    merges, vocab = train_bpe(counts, args.merges)
    out = _outdir(args.out)
    save_merges(merges, out / "merges.txt")
    save_vocab(vocab, out / "vocab.tsv")
    _write_manifest(
        args.out,
        directory=True,
        subcommand="bpe train",
        arguments={"corpus": args.corpus, "text": args.text, "merges": args.merges, "out": args.out},
        outputs=["merges.txt", "vocab.tsv"],
        summary={"n_merges": len(merges), "vocab_size": len(vocab)},
    )
    print(f"learned {len(merges)} merges over {len(counts)} word types; vocabulary size {len(vocab)}")
    return 0


# ---------------------------------------------------------------------------
# embed


def _builtin_embedder(dim: int, seed: int) -> BuiltinEmbedder:
    if dim < 1:
        raise DataError(f"dim must be >= 1, got {dim}")
    return BuiltinEmbedder(table=HashedEmbeddingTable(dim=dim, seed=seed))


def cmd_embed_index(args: argparse.Namespace) -> int:
    kb = load_kb_dir(args.kb)
    embedder = _builtin_embedder(args.dim, args.seed)
    matrix = build_embedding_index(kb, embedder, ExtractionConfig(args.config))
    save_embeddings(matrix, args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="embed index",
        arguments={"kb": args.kb, "config": args.config, "dim": args.dim, "seed": args.seed, "out": args.out},
        outputs=[args.out, args.out + ".ids"],
        summary={"n": matrix.n, "dim": matrix.dim},
    )
    print(f"embedded {matrix.n} names at dimension {matrix.dim}")
    return 0


def cmd_embed_mentions(args: argparse.Namespace) -> int:
    corpus = read_corpus(args.corpus)
    embedder = _builtin_embedder(args.dim, args.seed)
    cfg = ExtractionConfig(args.config)
    ids: list[str] = []
    token_lists: list[list[str]] = []
    n_truncated = 0
    for post, mention in iter_mentions(corpus):
        if args.context == "none":
            tokens = word_tokenize(post.surface(mention))
            if not tokens:
                raise DataError(f"mention {mention.id!r}: surface produced no tokens")
        elif args.context == "window":
            tokens = context_window(post, mention, total_tokens=args.window_tokens).tokens
        else:
            tokens = sentence_context(post, mention).tokens
            if len(tokens) > args.max_sentence_tokens:
                tokens = tokens[: args.max_sentence_tokens]
                n_truncated += 1
        ids.append(mention.id)
        token_lists.append(tokens)
    if not ids:
        raise DataError(f"{args.corpus}: corpus has no mentions")
    rows = np.stack([pool(embedder.embed_tokens(tokens), cfg) for tokens in token_lists])
    matrix = EmbeddingMatrix(data=rows, ids=ids)
    save_embeddings(matrix, args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="embed mentions",
        arguments={
            "corpus": args.corpus,
            "config": args.config,
            "context": args.context,
            "window_tokens": args.window_tokens,
            "max_sentence_tokens": args.max_sentence_tokens,
            "dim": args.dim,
            "seed": args.seed,
            "out": args.out,
        },
        outputs=[args.out, args.out + ".ids"],
        summary={"n_mentions": matrix.n, "dim": matrix.dim, "n_truncated": n_truncated},
    )
    print(f"embedded {matrix.n} mentions at dimension {matrix.dim} ({n_truncated} truncated)")
    return 0


# ---------------------------------------------------------------------------
# link


def cmd_link_string(args: argparse.Namespace) -> int:
    kb = load_kb_dir(args.kb)
    corpus = read_corpus(args.corpus)
    config = PipelineConfig(
        stemmer=DEFAULT_STEMMER if args.stem else None,
        score_form=args.score_form,
    )
    index = build_string_index(kb, config)
    pairs = [(m.id, post.surface(m)) for post, m in iter_mentions(corpus)]
    if not pairs:
        raise DataError(f"{args.corpus}: corpus has no mentions")
    threads = _resolve_threads(args.threads)
    results = link_string_batch(index, [surface for _, surface in pairs], k=args.k, threads=threads)
    write_predictions(zip((mid for mid, _ in pairs), results), args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="link string",
        arguments={
            "kb": args.kb,
            "corpus": args.corpus,
            "k": args.k,
            "score_form": args.score_form,
            "stem": args.stem,
            "threads": threads,
            "out": args.out,
        },
        outputs=[args.out],
        summary={"n_mentions": len(pairs), "index_entries": len(index.entries)},
    )
    print(f"linked {len(pairs)} mentions against {len(index.entries)} index entries")
    return 0


def cmd_link_embed(args: argparse.Namespace) -> int:
    index_cfg = _manifest_config(args.index)
    mention_cfg = _manifest_config(args.embeddings)
    if (
        index_cfg is not None
        and mention_cfg is not None
        and index_cfg != mention_cfg
        and not args.allow_mixed_configs
    ):
        raise DataError(
            f"index was built with extraction config {index_cfg!r} but mentions with "
            f"{mention_cfg!r}; mixing degrades retrieval, pass --allow-mixed-configs to force"
        )
    index = load_embeddings(args.index)
    mentions = load_embeddings(args.embeddings)
    kb = load_kb_dir(args.kb) if args.kb else None
    results = link_embedding_batch(index, mentions, kb=kb, k=args.k)
    write_predictions(zip(mentions.ids, results), args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="link embed",
        arguments={
            "index": args.index,
            "embeddings": args.embeddings,
            "kb": args.kb,
            "k": args.k,
            "allow_mixed_configs": args.allow_mixed_configs,
            "out": args.out,
        },
        outputs=[args.out],
        summary={"n_mentions": mentions.n, "index_rows": index.n},
    )
    print(f"linked {mentions.n} mention vectors against {index.n} index rows")
    return 0


# ---------------------------------------------------------------------------
# rerank


def cmd_rerank_build_data(args: argparse.Namespace) -> int:
    corpus = read_corpus(args.corpus)
    kb = load_kb_dir(args.kb)
    train_set, validation, n_dropped = build_rerank_dataset(
        corpus,
        kb,
        max_tokens=args.max_sentence_tokens,
        split=args.split,
        seed=args.seed,
    )
    out = _outdir(args.out)
    write_rerank_dataset(train_set, out / "train.jsonl")
    write_rerank_dataset(validation, out / "validation.jsonl")
    _write_manifest(
        args.out,
        directory=True,
        subcommand="rerank build-data",
        arguments={
            "corpus": args.corpus,
            "kb": args.kb,
            "max_sentence_tokens": args.max_sentence_tokens,
            "split": args.split,
            "seed": args.seed,
            "out": args.out,
        },
        outputs=["train.jsonl", "validation.jsonl"],
        summary={"n_train": len(train_set), "n_validation": len(validation), "n_dropped": n_dropped},
    )
    print(
        f"built {len(train_set)} training and {len(validation)} validation examples "
        f"({n_dropped} mentions dropped for length)"
    )
    return 0


def cmd_rerank_apply(args: argparse.Namespace) -> int:
    examples = read_rerank_dataset(args.data)
    if not examples:
        raise DataError(f"{args.data}: dataset is empty")
    scores = read_score_lines(args.scores)
    missing = [i for i in range(len(examples)) if i not in scores]
    if missing:
        raise DataError(f"{args.scores}: no scores for example(s) {missing[:5]}")
    extra = sorted(set(scores) - set(range(len(examples))))
    if extra:
        raise DataError(f"{args.scores}: scores for unknown example(s) {extra[:5]}")
    kb = load_kb_dir(args.kb) if args.kb else None
    predictions = [
        (str(i), rerank_from_scores(example, scores[i], kb)) for i, example in enumerate(examples)
    ]
    write_predictions(predictions, args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="rerank apply",
        arguments={"data": args.data, "scores": args.scores, "kb": args.kb, "out": args.out},
        outputs=[args.out],
        summary={"n_examples": len(examples)},
    )
    print(f"reranked {len(examples)} examples")
    return 0


# ---------------------------------------------------------------------------
# align


def cmd_align_train(args: argparse.Namespace) -> int:
    matrix = load_embeddings(args.embeddings)
    base = load_training_config(args.train_config) if args.train_config else TrainingConfig()
    overrides = {
        key: value
        for key, value in (("rate", args.rate), ("epochs", args.epochs), ("seed", args.seed))
        if value is not None
    }
    config = replace(base, **overrides)

    labeled: list[LabeledVector] = []
    for row, row_id in zip(matrix.data64, matrix.ids):
        label, sep, _ = row_id.partition("\t")
        if not sep:
            raise DataError(
                f"embedding id {row_id!r} carries no label; train on a name index "
                f"(ids in 'cui<TAB>name' form)"
            )
        labeled.append(LabeledVector(x=row, label=label))
    if args.batch_size < 2:
        raise DataError(f"batch size must be >= 2, got {args.batch_size}")
    random.Random(config.seed).shuffle(labeled)
    batches = [labeled[i : i + args.batch_size] for i in range(0, len(labeled), args.batch_size)]

    d_out = args.d_out if args.d_out else matrix.dim
    model = ProjectionModel.initialize(matrix.dim, d_out, seed=config.seed, noise=args.init_noise)
    model, trace = train(
        batches, model, config.mining_params, config.loss_params, config.rate, config.epochs
    )

    out = _outdir(args.out)
    weights = EmbeddingMatrix(data=model.W, ids=[f"w{i}" for i in range(d_out)])
    save_embeddings(weights, out / "weights.emb")
    save_loss_trace(trace, out / "trace.csv")
    save_training_config(config, out / "config.json")
    _write_manifest(
        args.out,
        directory=True,
        subcommand="align train",
        arguments={
            "embeddings": args.embeddings,
            "train_config": args.train_config,
            "rate": config.rate,
            "epochs": config.epochs,
            "seed": config.seed,
            "batch_size": args.batch_size,
            "d_out": d_out,
            "init_noise": args.init_noise,
            "out": args.out,
        },
        outputs=["config.json", "trace.csv", "weights.emb", "weights.emb.ids"],
        summary={
            "n_vectors": matrix.n,
            "n_batches": len(batches),
            "d_in": matrix.dim,
            "d_out": d_out,
            "final_loss": trace[-1][1],
        },
    )
    print(
        f"trained a {matrix.dim}->{d_out} projection on {matrix.n} vectors for "
        f"{config.epochs} epochs; final mean loss {trace[-1][1]:.6f}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval / analyze


def _parse_ns(raw: str) -> tuple[int, ...]:
    try:
        ns = tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise DataError(f"--ns must be a comma-separated integer list, got {raw!r}") from None
    if not ns:
        raise DataError("--ns must name at least one cutoff")
    return ns


def cmd_eval(args: argparse.Namespace) -> int:
    predictions = read_predictions(args.predictions)
    if args.corpus:
        corpus = read_corpus(args.corpus)
        gold = _gold_from_corpus(corpus)
        kinds: dict[str, str] | None = {m.id: m.kind for _, m in iter_mentions(corpus)}
    else:
        examples = read_rerank_dataset(args.data)
        gold = {str(i): example.gold_cui for i, example in enumerate(examples)}
        kinds = None
    ns = _parse_ns(args.ns)
    report = evaluate(predictions, gold, ns=ns, kinds=kinds)
    save_metrics_report(report, args.out)
    _write_manifest(
        args.out,
        directory=False,
        subcommand="eval",
        arguments={
            "predictions": args.predictions,
            "corpus": args.corpus,
            "data": args.data,
            "ns": args.ns,
            "out": args.out,
        },
        outputs=[args.out],
        summary={"n_mentions": report.n_mentions},
    )
    first = min(report.accuracy_at)
    print(
        f"evaluated {report.n_mentions} mentions: accuracy@{first} "
        f"{report.accuracy_at[first]:.4f}, precision {report.precision:.4f}, "
        f"recall {report.recall:.4f}, f1 {report.f1:.4f}"
    )
    return 0


def cmd_analyze_errors(args: argparse.Namespace) -> int:
    predictions = read_predictions(args.predictions)
    corpus = read_corpus(args.corpus)
    kb = load_kb_dir(args.kb)
    report = analyze(predictions, _gold_from_corpus(corpus), kb, collect_mentions(corpus))
    out = _outdir(args.out)
    save_error_report(report, out / "report.json")
    write_error_records_csv(report, out / "records.csv")
    _write_manifest(
        args.out,
        directory=True,
        subcommand="analyze errors",
        arguments={
            "predictions": args.predictions,
            "corpus": args.corpus,
            "kb": args.kb,
            "out": args.out,
        },
        outputs=["records.csv", "report.json"],
        summary={"total_errors": report.total_errors},
    )
    print(f"categorized {report.total_errors} rank-1 errors")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normkit",
        description="Medical concept normalization: linkers, training, and evaluation.",
    )
    groups = parser.add_subparsers(dest="group", required=True, metavar="<command>")

    kb = groups.add_parser("kb", help="build and inspect knowledge bases")
    kb_sub = kb.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")

    kb_build = kb_sub.add_parser("build", help="validate tables and write a knowledge-base directory")
    kb_build.add_argument("--concepts", required=True, help="concept name table (tsv)")
    kb_build.add_argument("--types", help="semantic type table (tsv)")
    kb_build.add_argument("--hierarchy", help="hierarchy edge table (tsv)")
    kb_build.add_argument("--groups", help="semantic group table (tsv)")
    kb_build.add_argument("--out", required=True, help="output directory")
    kb_build.set_defaults(handler=cmd_kb_build)

    kb_merge = kb_sub.add_parser("merge-lexicon", help="extend unambiguous concepts from a lexicon")
    kb_merge.add_argument("--kb", required=True, help="knowledge-base directory")
    kb_merge.add_argument("--lexicon", required=True, help="lexicon file (json lines)")
    kb_merge.add_argument(
        "--stem", action="store_true", help="match headwords with the German suffix stemmer"
    )
    kb_merge.add_argument("--out", required=True, help="output directory")
    kb_merge.set_defaults(handler=cmd_kb_merge_lexicon)

    kb_stats = kb_sub.add_parser("stats", help="print per-source name and concept counts")
    kb_stats.add_argument("--kb", required=True, help="knowledge-base directory")
    kb_stats.set_defaults(handler=cmd_kb_stats)

    bpe = groups.add_parser("bpe", help="subword tokenizer training")
    bpe_sub = bpe.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")
    bpe_train = bpe_sub.add_parser("train", help="learn byte-pair merges from text")
    bpe_source = bpe_train.add_mutually_exclusive_group(required=True)
    bpe_source.add_argument("--corpus", help="annotated corpus (json lines); post texts are used")
    bpe_source.add_argument("--text", help="plain text file")
    bpe_train.add_argument("--merges", type=int, default=200, help="number of merges to learn")
    bpe_train.add_argument("--out", required=True, help="output directory")
    bpe_train.set_defaults(handler=cmd_bpe_train)

    embed = groups.add_parser("embed", help="build embedding matrices with the built-in embedder")
    embed_sub = embed.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")

    embed_index = embed_sub.add_parser("index", help="embed every knowledge-base name")
    embed_index.add_argument("--kb", required=True, help="knowledge-base directory")
    _add_embedding_flags(embed_index)
    embed_index.add_argument("--out", required=True, help="output embedding file")
    embed_index.set_defaults(handler=cmd_embed_index)

    embed_mentions = embed_sub.add_parser("mentions", help="embed every corpus mention")
    embed_mentions.add_argument("--corpus", required=True, help="annotated corpus (json lines)")
    _add_embedding_flags(embed_mentions)
    embed_mentions.add_argument(
        "--context",
        choices=CONTEXT_MODES,
        default="none",
        help="surrounding text to include (default: none)",
    )
    embed_mentions.add_argument(
        "--window-tokens", type=int, default=64, help="token budget for --context window"
    )
    embed_mentions.add_argument(
        "--max-sentence-tokens",
        type=int,
        default=150,
        help="truncation point for --context sentence",
    )
    embed_mentions.add_argument("--out", required=True, help="output embedding file")
    embed_mentions.set_defaults(handler=cmd_embed_mentions)

    link = groups.add_parser("link", help="rank candidate concepts for mentions")
    link_sub = link.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")

    link_string = link_sub.add_parser("string", help="edit-distance linking")
    link_string.add_argument("--kb", required=True, help="knowledge-base directory")
    link_string.add_argument("--corpus", required=True, help="annotated corpus (json lines)")
    link_string.add_argument("--k", type=int, default=64, help="candidates per mention")
    link_string.add_argument(
        "--score-form",
        choices=SCORE_FORMS,
        default="neg_distance",
        help="score reported per candidate",
    )
    link_string.add_argument(
        "--no-stem",
        dest="stem",
        action="store_false",
        help="index raw normalized names instead of stems",
    )
    link_string.add_argument(
        "--threads", type=int, default=None, help="worker threads (default: NORMKIT_THREADS or 1)"
    )
    link_string.add_argument("--out", required=True, help="output prediction file")
    link_string.set_defaults(handler=cmd_link_string)

    link_embed = link_sub.add_parser("embed", help="cosine linking over embedding files")
    link_embed.add_argument("--index", required=True, help="name index embeddings")
    link_embed.add_argument("--embeddings", required=True, help="mention embeddings")
    link_embed.add_argument("--kb", help="knowledge-base directory for candidate validation")
    link_embed.add_argument("--k", type=int, default=64, help="candidates per mention")
    link_embed.add_argument(
        "--allow-mixed-configs",
        action="store_true",
        help="permit index and mentions built with different extraction configs",
    )
    link_embed.add_argument("--out", required=True, help="output prediction file")
    link_embed.set_defaults(handler=cmd_link_embed)

    rerank = groups.add_parser("rerank", help="candidate re-ranking datasets and application")
    rerank_sub = rerank.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")

    rerank_build = rerank_sub.add_parser("build-data", help="sample gold-plus-negatives examples")
    rerank_build.add_argument("--corpus", required=True, help="annotated corpus (json lines)")
    rerank_build.add_argument("--kb", required=True, help="knowledge-base directory")
    rerank_build.add_argument(
        "--max-sentence-tokens", type=int, default=150, help="drop longer sentences"
    )
    rerank_build.add_argument("--split", type=float, default=0.8, help="training fraction")
    rerank_build.add_argument("--seed", type=int, default=0, help="sampling seed")
    rerank_build.add_argument("--out", required=True, help="output directory")
    rerank_build.set_defaults(handler=cmd_rerank_build_data)

    rerank_apply = rerank_sub.add_parser("apply", help="reorder candidates by external scores")
    rerank_apply.add_argument("--data", required=True, help="rerank dataset (json lines)")
    rerank_apply.add_argument("--scores", required=True, help="score file (json lines)")
    rerank_apply.add_argument("--kb", help="knowledge-base directory for display names")
    rerank_apply.add_argument("--out", required=True, help="output prediction file")
    rerank_apply.set_defaults(handler=cmd_rerank_apply)

    align = groups.add_parser("align", help="self-alignment projection training")
    align_sub = align.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")
    align_train = align_sub.add_parser("train", help="fit a projection on a labeled name index")
    align_train.add_argument("--embeddings", required=True, help="name index embeddings")
    align_train.add_argument("--train-config", help="training configuration (json)")
    align_train.add_argument("--rate", type=float, default=None, help="override learning rate")
    align_train.add_argument("--epochs", type=int, default=None, help="override epoch count")
    align_train.add_argument("--seed", type=int, default=None, help="override shuffle/init seed")
    align_train.add_argument("--batch-size", type=int, default=64, help="vectors per batch")
    align_train.add_argument(
        "--d-out", type=int, default=None, help="projection output dimension (default: input)"
    )
    align_train.add_argument(
        "--init-noise", type=float, default=0.0, help="gaussian noise added to the identity init"
    )
    align_train.add_argument("--out", required=True, help="output directory")
    align_train.set_defaults(handler=cmd_align_train)

    eval_p = groups.add_parser("eval", help="score a prediction file against gold labels")
    eval_p.add_argument("--predictions", required=True, help="prediction file (json lines)")
    eval_source = eval_p.add_mutually_exclusive_group(required=True)
    eval_source.add_argument("--corpus", help="gold from corpus annotations")
    eval_source.add_argument("--data", help="gold from a rerank dataset (ids are line numbers)")
    eval_p.add_argument("--ns", default=",".join(str(n) for n in REPORT_NS), help="accuracy cutoffs")
    eval_p.add_argument("--out", required=True, help="output report (json)")
    eval_p.set_defaults(handler=cmd_eval)

    analyze_p = groups.add_parser("analyze", help="post-hoc analyses")
    analyze_sub = analyze_p.add_subparsers(dest="subcommand", required=True, metavar="<subcommand>")
    analyze_errors = analyze_sub.add_parser("errors", help="categorize rank-1 errors")
    analyze_errors.add_argument("--predictions", required=True, help="prediction file (json lines)")
    analyze_errors.add_argument("--corpus", required=True, help="annotated corpus (json lines)")
    analyze_errors.add_argument("--kb", required=True, help="knowledge-base directory")
    analyze_errors.add_argument("--out", required=True, help="output directory")
    analyze_errors.set_defaults(handler=cmd_analyze_errors)

    return parser


def _add_embedding_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        choices=[cfg.value for cfg in ExtractionConfig],
        default=ExtractionConfig.NOSPEC.value,
        help="token extraction configuration (default: nospec)",
    )
    parser.add_argument("--dim", type=int, default=64, help="embedding dimension")
    parser.add_argument("--seed", type=int, default=0, help="hash seed for the built-in embedder")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help; fold to 1/0
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except NormkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
