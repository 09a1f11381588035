#!/usr/bin/env python3
"""End-to-end pipeline demo on synthetic data.

Builds a small German-flavored knowledge base and an annotated corpus, then
drives every CLI stage over them: kb build, merge-lexicon, stats, both
linkers, evaluation, error analysis, rerank data + apply, and projection
training. Everything lands under --workdir; rerunning with the same seed and
workdir reproduces every artifact byte for byte.

    python3 scripts/run_synthetic_pipeline.py --workdir out/demo --seed 7
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

import numpy as np

from normkit.cli import main as cli
from normkit.embedlink import BuiltinEmbedder, ExtractionConfig, HashedEmbeddingTable, pool
from normkit.rerank import read_rerank_dataset, write_score_lines
from normkit.textprep import Mention, Post, write_corpus

ROOTS = [
    "Husten", "Fieber", "Grippe", "Schnupfen", "Migräne", "Asthma", "Ekzem",
    "Gastritis", "Anämie", "Arthrose", "Bronchitis", "Zystitis", "Dermatitis",
    "Neuralgie",
]
QUALIFIERS = ["", "chronische ", "akute ", "leichte ", "schwere "]


def build_inputs(workdir: Path, seed: int) -> None:
    rng = random.Random(seed)
    names = [f"{q}{root}" for root in ROOTS for q in QUALIFIERS]  # 70 distinct

    rows = ["cui\tsurface\tsource\tpreferred"]
    for i, name in enumerate(names, start=1):
        rows.append(f"C{i:07d}\t{name}\tSYN\t1")
        if i <= 15:
            rows.append(f"C{i:07d}\t{name}beschwerden\tSYN\t0")
    (workdir / "concepts.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    types = [f"C{i:07d}\tT047" if i % 3 else f"C{i:07d}\tT184" for i in range(1, 71)]
    (workdir / "types.tsv").write_text("\n".join(types) + "\n", encoding="utf-8")
    # each qualified form is a child of the bare root concept
    edges = []
    for i, name in enumerate(names, start=1):
        root_index = ROOTS.index(name.split(" ")[-1]) * len(QUALIFIERS) + 1
        if i != root_index:
            edges.append(f"C{i:07d}\tC{root_index:07d}")
    (workdir / "hierarchy.tsv").write_text("\n".join(edges) + "\n", encoding="utf-8")
    (workdir / "groups.tsv").write_text("T047\tDISO\nT184\tDISO\n", encoding="utf-8")

    lexicon = [
        {"headword": "Husten", "synonyms": ["Hustenreiz", "Reizhusten"]},
        {"headword": "Migräne", "synonyms": ["Kopfweh"]},
        {"headword": "Brummschädel", "synonyms": []},
    ]
    (workdir / "lexicon.jsonl").write_text(
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in lexicon), encoding="utf-8"
    )

    def typo(text: str) -> str:
        pos = rng.randrange(len(text))
        return text[:pos] + text[pos + 1 :] if rng.random() < 0.5 else text[:pos] + "x" + text[pos:]

    posts = []
    for p in range(30):
        cui_index = rng.randrange(70)
        name = names[cui_index]
        surface = name if rng.random() < 0.6 else typo(name)
        lead = rng.choice(["Seit Tagen habe ich ", "Mich plagt ", "Der Arzt vermutet "])
        text = f"{lead}{surface} und ich bin müde."
        posts.append(
            Post(
                id=f"p{p}",
                text=text,
                mentions=(
                    Mention(
                        id=f"m{p}",
                        start=len(lead),
                        end=len(lead) + len(surface),
                        kind="lay" if p % 2 else "technical",
                        gold_cui=f"C{cui_index + 1:07d}",
                    ),
                ),
            )
        )
    write_corpus(posts, workdir / "corpus.jsonl")


def run(argv: list[str]) -> None:
    print(f"$ normkit {' '.join(argv)}")
    code = cli(argv)
    if code != 0:
        sys.exit(f"step failed with exit code {code}")


def score_with_builtin(workdir: Path, seed: int) -> None:
    """Score each candidate by cosine of pooled sentence vs pooled name."""
    examples = read_rerank_dataset(workdir / "rerank" / "train.jsonl")
    embedder = BuiltinEmbedder(table=HashedEmbeddingTable(dim=32, seed=seed))
    names = {}
    for line in (workdir / "kb" / "concepts.tsv").read_text(encoding="utf-8").splitlines()[1:]:
        cui, surface = line.split("\t")[:2]
        names.setdefault(cui, surface)

    def vec(tokens: list[str]) -> np.ndarray:
        return pool(embedder.embed_tokens(tokens), ExtractionConfig.NOSPEC).astype(np.float64)

    scores = {}
    for i, example in enumerate(examples):
        s = vec(list(example.sentence_tokens))
        s /= np.linalg.norm(s)
        row = []
        for cui in example.candidate_cuis:
            c = vec(names[cui].lower().split())
            row.append(float(s @ (c / np.linalg.norm(c))))
        scores[i] = row
    write_score_lines(scores, workdir / "scores.jsonl")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="out/demo", help="where all artifacts go")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    build_inputs(workdir, args.seed)
    w = str(workdir)

    run(["kb", "build", "--concepts", f"{w}/concepts.tsv", "--types", f"{w}/types.tsv",
         "--hierarchy", f"{w}/hierarchy.tsv", "--groups", f"{w}/groups.tsv", "--out", f"{w}/kb"])
    run(["kb", "merge-lexicon", "--kb", f"{w}/kb", "--lexicon", f"{w}/lexicon.jsonl",
         "--out", f"{w}/kb-merged"])
    run(["kb", "stats", "--kb", f"{w}/kb-merged"])
    run(["bpe", "train", "--corpus", f"{w}/corpus.jsonl", "--merges", "80", "--out", f"{w}/bpe"])

    run(["link", "string", "--kb", f"{w}/kb-merged", "--corpus", f"{w}/corpus.jsonl",
         "--out", f"{w}/pred-string.jsonl"])
    run(["eval", "--predictions", f"{w}/pred-string.jsonl", "--corpus", f"{w}/corpus.jsonl",
         "--out", f"{w}/metrics-string.json"])

    seed = ["--dim", "32", "--seed", str(args.seed)]
    run(["embed", "index", "--kb", f"{w}/kb-merged", *seed, "--out", f"{w}/index.emb"])
    run(["embed", "mentions", "--corpus", f"{w}/corpus.jsonl", "--context", "sentence",
         *seed, "--out", f"{w}/mentions.emb"])
    run(["link", "embed", "--index", f"{w}/index.emb", "--embeddings", f"{w}/mentions.emb",
         "--kb", f"{w}/kb-merged", "--out", f"{w}/pred-embed.jsonl"])
    run(["eval", "--predictions", f"{w}/pred-embed.jsonl", "--corpus", f"{w}/corpus.jsonl",
         "--out", f"{w}/metrics-embed.json"])
    run(["analyze", "errors", "--predictions", f"{w}/pred-embed.jsonl",
         "--corpus", f"{w}/corpus.jsonl", "--kb", f"{w}/kb-merged", "--out", f"{w}/errors"])

    run(["rerank", "build-data", "--corpus", f"{w}/corpus.jsonl", "--kb", f"{w}/kb-merged",
         "--seed", str(args.seed), "--out", f"{w}/rerank"])
    score_with_builtin(workdir, args.seed)
    run(["rerank", "apply", "--data", f"{w}/rerank/train.jsonl", "--scores", f"{w}/scores.jsonl",
         "--kb", f"{w}/kb-merged", "--out", f"{w}/pred-rerank.jsonl"])
    run(["eval", "--predictions", f"{w}/pred-rerank.jsonl", "--data", f"{w}/rerank/train.jsonl",
         "--out", f"{w}/metrics-rerank.json"])

    run(["align", "train", "--embeddings", f"{w}/index.emb", "--epochs", "10", "--rate", "0.2",
         "--seed", str(args.seed), "--out", f"{w}/projection"])

    print("\nheadline numbers")
    for stage in ("string", "embed", "rerank"):
        payload = json.loads((workdir / f"metrics-{stage}.json").read_text(encoding="utf-8"))
        acc = payload["accuracy_at"]
        print(
            f"  {stage:>7}: acc@1 {acc['1']:.3f}  acc@5 {acc.get('5', float('nan')):.3f}  "
            f"f1 {payload['f1']:.3f}  ({payload['n_mentions']} mentions)"
        )
    print(f"\nall artifacts under {workdir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
