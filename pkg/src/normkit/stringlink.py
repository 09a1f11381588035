"""Edit-distance linker: the fuzzy string-matching baseline.

Names are normalized, stemmed per word, and indexed; a query runs through
the same pipeline and every index term is scored by unit-cost Levenshtein
distance. An exhaustive scan keeps ranking semantics exact at the full
~218k-name scale; the only shortcut is a sound length-difference lower
bound. Results are deduplicated to the k best distinct concepts.
"""

from __future__ import annotations

import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .candidates import Candidate, CandidateList
from .exceptions import DataError
from .kb import KnowledgeBase
from .textprep import DEFAULT_STEMMER, Stemmer, name_key

LOGGER = logging.getLogger(__name__)

SCORE_FORMS = ("neg_distance", "similarity")


def levenshtein(a: str, b: str) -> int:
    """Minimal number of unit-cost inserts, deletes, and substitutions."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, start=1):
        current = [i]
        for j, char_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (char_a != char_b),
                )
            )
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein divided by the longer length; two empty strings give 0."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


class IndexEntry(NamedTuple):
    term: str
    name: str
    cui: str


@dataclass(frozen=True)
class PipelineConfig:
    """How surfaces become index terms and how scores are reported.

    ``score_form`` is "neg_distance" (score = -distance, ranked by ascending
    distance) or "similarity" (score = 1 - normalized distance, ranked by
    descending score; equal scores fall back to ascending raw distance).
    """

    stemmer: Stemmer | None = DEFAULT_STEMMER
    score_form: str = "neg_distance"

    def __post_init__(self) -> None:
        if self.score_form not in SCORE_FORMS:
            raise DataError(f"score_form must be one of {SCORE_FORMS}, got {self.score_form!r}")


@dataclass(frozen=True)
class StringIndex:
    """Immutable list of (term, original name, cui) rows."""

    entries: tuple[IndexEntry, ...]
    config: PipelineConfig


def build_string_index(kb: KnowledgeBase, config: PipelineConfig = PipelineConfig()) -> StringIndex:
    """One entry per distinct (name, cui) pair; retired concepts excluded."""
    rows: set[tuple[str, str]] = set()
    for name in kb.iter_names(include_retired=False):
        rows.add((name.cui, name.surface))
    entries = tuple(
        IndexEntry(term=name_key(surface, config.stemmer), name=surface, cui=cui)
        for cui, surface in sorted(rows)
    )
    return StringIndex(entries=entries, config=config)


def _entry_sort_prefix(config: PipelineConfig, distance: int, query: str, term: str) -> tuple:
    if config.score_form == "neg_distance":
        return (distance,)
    longest = max(len(query), len(term))
    score = 1.0 - (distance / longest if longest else 0.0)
    return (-score, distance)


def _score_from_prefix(config: PipelineConfig, prefix: tuple) -> float:
    if config.score_form == "neg_distance":
        return float(-prefix[0])
    return -prefix[0]


def link_string(index: StringIndex, mention_surface: str, k: int = 64) -> CandidateList:
    """Rank the k best distinct concepts for a mention surface.

    The query passes the index's own normalize+stem pipeline. Each concept
    keeps its best-scoring name; ties break on (distance, cui, name)
    ascending, so the output is fully deterministic.
    """
    if not index.entries:
        raise DataError("string index is empty")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    config = index.config
    query = name_key(mention_surface, config.stemmer)

    bests: dict[str, tuple[tuple, str]] = {}
    prune = config.score_form == "neg_distance"
    threshold: int | None = None
    for term, name, cui in index.entries:
        if threshold is not None and abs(len(query) - len(term)) > threshold:
            continue
        distance = levenshtein(query, term)
        prefix = _entry_sort_prefix(config, distance, query, term)
        current = bests.get(cui)
        if current is None or (prefix, name) < current:
            bests[cui] = (prefix, name)
            if prune and len(bests) >= k:
                threshold = heapq.nsmallest(k, (p[0] for p, _ in bests.values()))[-1]

    ranked = sorted(
        ((prefix, cui, name) for cui, (prefix, name) in bests.items()),
    )[:k]
    return [
        Candidate(cui=cui, matched_name=name, score=_score_from_prefix(config, prefix), rank=i)
        for i, (prefix, cui, name) in enumerate(ranked, start=1)
    ]


def link_string_batch(
    index: StringIndex,
    surfaces: Sequence[str],
    k: int = 64,
    threads: int = 1,
) -> list[CandidateList]:
    """Link many surfaces; output order matches input order."""
    if threads <= 1 or len(surfaces) < 2:
        return [link_string(index, surface, k) for surface in surfaces]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: link_string(index, s, k), surfaces))
