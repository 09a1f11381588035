"""Candidate re-ranking and construction of cross-encoder training data.

Training examples pair a mention's sentence with its gold concept plus
uniformly sampled negative concepts; over-length sentences are dropped and
counted. Re-ranking reorders an existing candidate list by an injected
scorer. Scorer processes can run out-of-band: examples travel as RRK1
JSON lines, scores come back as JSON lines keyed by example line number.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .candidates import MAX_CANDIDATES, Candidate, CandidateList
from .embedlink import BuiltinEmbedder, ExtractionConfig, cosine_similarity, pool
from .exceptions import DataError, LoadError, MissingGoldError
from .ioutil import atomic_write_lines, dump_json
from .kb import KnowledgeBase
from .textprep import Post, Tokenizer, iter_mentions, sentence_context, word_tokenize

Scorer = Callable[[Sequence[str], tuple[int, int], str], float]


@dataclass(frozen=True)
class RerankExample:
    """One mention in its sentence with a fixed candidate set."""

    sentence_tokens: tuple[str, ...]
    mention_token_span: tuple[int, int]
    gold_cui: str
    candidate_cuis: tuple[str, ...]

    def __post_init__(self) -> None:
        tokens = tuple(self.sentence_tokens)
        candidates = tuple(self.candidate_cuis)
        start, end = self.mention_token_span
        if not tokens:
            raise DataError("sentence has no tokens")
        if not (0 <= start < end <= len(tokens)):
            raise DataError(f"mention span ({start}, {end}) outside sentence of {len(tokens)} tokens")
        if len(set(candidates)) != len(candidates):
            raise DataError("candidate CUIs must be distinct")
        if self.gold_cui not in candidates:
            raise DataError(f"gold cui {self.gold_cui!r} missing from candidates")
        object.__setattr__(self, "sentence_tokens", tokens)
        object.__setattr__(self, "candidate_cuis", candidates)
        object.__setattr__(self, "mention_token_span", (start, end))

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        start, end = self.mention_token_span
        return self.sentence_tokens[start:end]


def build_rerank_dataset(
    corpus: Sequence[Post],
    kb: KnowledgeBase,
    tokenizer: Tokenizer = word_tokenize,
    negatives: int = MAX_CANDIDATES - 1,
    max_tokens: int = 150,
    split: float = 0.8,
    seed: int = 0,
) -> tuple[list[RerankExample], list[RerankExample], int]:
    """Examples with gold + sampled negatives, split into train/validation.

    Negatives are drawn uniformly without replacement from the non-retired,
    non-gold CUIs and fixed per example; the candidate order is shuffled so
    gold holds no special position. Sentences longer than ``max_tokens``
    are dropped; the drop count is the third return value. One seeded
    stream drives sampling and the split, so reruns are identical.
    """
    if negatives < 1:
        raise DataError(f"negatives must be >= 1, got {negatives}")
    if not 0.0 <= split <= 1.0:
        raise DataError(f"split must be within [0, 1], got {split}")
    pool_cuis = sorted(cui for cui, c in kb.concepts.items() if not c.retired)
    rng = random.Random(seed)
    examples: list[RerankExample] = []
    n_dropped = 0
    for post, mention in iter_mentions(corpus):
        if mention.gold_cui is None:
            raise MissingGoldError(mention.id)
        if mention.gold_cui not in kb.concepts:
            raise DataError(f"mention {mention.id!r}: gold cui {mention.gold_cui!r} not in kb")
        others = [cui for cui in pool_cuis if cui != mention.gold_cui]
        if len(others) < negatives:
            raise DataError(
                f"kb has {len(others)} non-gold concepts, cannot sample {negatives} negatives"
            )
        ctx = sentence_context(post, mention, tokenizer)
        tokens = ctx.tokens
        if len(tokens) > max_tokens:
            n_dropped += 1
            continue
        candidates = [mention.gold_cui] + rng.sample(others, negatives)
        rng.shuffle(candidates)
        examples.append(
            RerankExample(
                sentence_tokens=tuple(tokens),
                mention_token_span=ctx.mention_token_span,
                gold_cui=mention.gold_cui,
                candidate_cuis=tuple(candidates),
            )
        )
    order = list(range(len(examples)))
    rng.shuffle(order)
    n_train = int(split * len(examples))
    train = [examples[i] for i in order[:n_train]]
    validation = [examples[i] for i in order[n_train:]]
    return train, validation, n_dropped


def rerank(
    candidates: CandidateList,
    sentence_tokens: Sequence[str],
    mention_token_span: tuple[int, int],
    scorer: Scorer,
) -> CandidateList:
    """Stable sort by descending scorer output; CUIs survive as a permutation.

    A candidate whose scorer call raises keeps its original position and
    score, flagged via ``note``; the successfully scored rest sort into the
    remaining positions.
    """
    if not candidates:
        raise DataError("no candidates to rerank")
    scored: list[tuple[float, int, Candidate]] = []
    failed: dict[int, Candidate] = {}
    for position, candidate in enumerate(candidates):
        try:
            score = float(scorer(sentence_tokens, mention_token_span, candidate.matched_name))
        except Exception as exc:  # the scorer is foreign code; isolate per candidate
            failed[position] = Candidate(
                cui=candidate.cui,
                matched_name=candidate.matched_name,
                score=candidate.score,
                rank=candidate.rank,
                note=f"scorer-error: {exc}",
            )
            continue
        scored.append((score, position, candidate))
    scored.sort(key=lambda item: (-item[0], item[1]))
    slots: list[Candidate | None] = [None] * len(candidates)
    for position, candidate in failed.items():
        slots[position] = candidate
    ordered = iter(scored)
    for position in range(len(slots)):
        if slots[position] is None:
            score, _, candidate = next(ordered)
            slots[position] = Candidate(
                cui=candidate.cui,
                matched_name=candidate.matched_name,
                score=score,
                rank=candidate.rank,
            )
    return [
        Candidate(
            cui=c.cui, matched_name=c.matched_name, score=c.score, rank=position + 1, note=c.note
        )
        for position, c in enumerate(slots)
    ]


def baseline_context_scorer(
    embedder: BuiltinEmbedder, cfg: ExtractionConfig = ExtractionConfig.NOSPEC
) -> Scorer:
    """Deterministic stand-in scorer: cosine of pooled sentence vs name.

    Lets the re-ranking stage run end to end without a trained
    cross-encoder. Pooled vectors are memoized per sentence and per name.
    """
    cfg = ExtractionConfig(cfg)
    sentence_cache: dict[tuple[str, ...], object] = {}
    name_cache: dict[str, object] = {}

    def scorer(sentence_tokens: Sequence[str], span: tuple[int, int], name: str) -> float:
        key = tuple(sentence_tokens)
        if key not in sentence_cache:
            sentence_cache[key] = pool(embedder.embed_tokens(list(key)), cfg)
        if name not in name_cache:
            name_cache[name] = pool(embedder(name), cfg)
        return cosine_similarity(sentence_cache[key], name_cache[name])

    return scorer


# ---------------------------------------------------------------------------
# RRK1 dataset files and score files


def write_rerank_dataset(examples: Sequence[RerankExample], path: str | Path) -> None:
    """One JSON line per example; candidate lists must hold 64 CUIs."""
    lines = []
    for example in examples:
        if len(example.candidate_cuis) != MAX_CANDIDATES:
            raise DataError(
                f"dataset files carry exactly {MAX_CANDIDATES} candidates, "
                f"got {len(example.candidate_cuis)}"
            )
        start, end = example.mention_token_span
        lines.append(
            dump_json(
                {
                    "sentence": list(example.sentence_tokens),
                    "mention_start_token": start,
                    "mention_end_token": end,
                    "gold_cui": example.gold_cui,
                    "candidates": list(example.candidate_cuis),
                }
            )
        )
    atomic_write_lines(Path(path), lines)


_RRK1_KEYS = {"sentence", "mention_start_token", "mention_end_token", "gold_cui", "candidates"}


def read_rerank_dataset(path: str | Path) -> list[RerankExample]:
    path = Path(path)
    examples: list[RerankExample] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                if set(record) != _RRK1_KEYS:
                    raise DataError(f"expected keys {sorted(_RRK1_KEYS)}, got {sorted(record)}")
                candidates = tuple(str(c) for c in record["candidates"])
                if len(candidates) != MAX_CANDIDATES:
                    raise DataError(f"expected {MAX_CANDIDATES} candidates, got {len(candidates)}")
                examples.append(
                    RerankExample(
                        sentence_tokens=tuple(str(t) for t in record["sentence"]),
                        mention_token_span=(
                            int(record["mention_start_token"]),
                            int(record["mention_end_token"]),
                        ),
                        gold_cui=str(record["gold_cui"]),
                        candidate_cuis=candidates,
                    )
                )
            except (json.JSONDecodeError, DataError, KeyError, TypeError, ValueError) as exc:
                raise LoadError(str(path), lineno, str(exc)) from exc
    return examples


def write_score_lines(scores: Mapping[int, Sequence[float]], path: str | Path) -> None:
    """JSON lines ``{example_id, scores}``; ids are 0-based dataset lines."""
    lines = []
    for example_id in sorted(scores):
        values = [float(v) for v in scores[example_id]]
        if example_id < 0:
            raise DataError(f"example_id must be >= 0, got {example_id}")
        if len(values) != MAX_CANDIDATES:
            raise DataError(
                f"example {example_id}: expected {MAX_CANDIDATES} scores, got {len(values)}"
            )
        lines.append(dump_json({"example_id": example_id, "scores": values}))
    atomic_write_lines(Path(path), lines)


def read_score_lines(path: str | Path) -> dict[int, list[float]]:
    path = Path(path)
    scores: dict[int, list[float]] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                if set(record) != {"example_id", "scores"}:
                    raise DataError(f"expected keys example_id/scores, got {sorted(record)}")
                example_id = int(record["example_id"])
                values = [float(v) for v in record["scores"]]
                if example_id < 0:
                    raise DataError(f"example_id must be >= 0, got {example_id}")
                if example_id in scores:
                    raise DataError(f"duplicate example_id {example_id}")
                if len(values) != MAX_CANDIDATES:
                    raise DataError(f"expected {MAX_CANDIDATES} scores, got {len(values)}")
                scores[example_id] = values
            except (json.JSONDecodeError, DataError, KeyError, TypeError, ValueError) as exc:
                raise LoadError(str(path), lineno, str(exc)) from exc
    return scores


def display_name(kb: KnowledgeBase, cui: str) -> str:
    """A stable human-readable name: preferred first, else lexicographic."""
    concept = kb.concepts.get(cui)
    if concept is None or not concept.names:
        raise DataError(f"no names for cui {cui!r}")
    preferred = sorted((n.source, n.surface) for n in concept.names if n.preferred)
    if preferred:
        return preferred[0][1]
    return min((n.source, n.surface) for n in concept.names)[1]


def rerank_from_scores(
    example: RerankExample,
    scores: Sequence[float],
    kb: KnowledgeBase | None = None,
) -> CandidateList:
    """Candidate list ordered by external scores (ties keep dataset order)."""
    if len(scores) != len(example.candidate_cuis):
        raise DataError(
            f"{len(scores)} scores for {len(example.candidate_cuis)} candidates"
        )
    order = sorted(
        range(len(scores)), key=lambda position: (-float(scores[position]), position)
    )
    out: CandidateList = []
    for rank, position in enumerate(order, start=1):
        cui = example.candidate_cuis[position]
        name = display_name(kb, cui) if kb is not None else cui
        out.append(Candidate(cui=cui, matched_name=name, score=float(scores[position]), rank=rank))
    return out
