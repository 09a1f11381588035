"""Rule-based categorization of linking errors plus edit-distance profiling.

Every rank-1 miss is assigned one or more categories by surface and
knowledge-base rules; ``unknown`` is the fallback when nothing else fires.
Sub-labels of the unknown class need human judgment and live in an optional
free-text field rather than a rule.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

from .candidates import CandidateList
from .exceptions import DataError, MissingGoldError
from .ioutil import atomic_write_text, dump_json
from .kb import KnowledgeBase, is_ancestor
from .stringlink import normalized_edit_distance
from .textprep import Mention, normalize


class ErrorCategory(str, Enum):
    ABBREVIATION = "abbreviation"
    COMPLEX_ENTITY = "complex_entity"
    SAME_SYNONYMS = "same_synonyms"
    PARENT_OR_CHILD = "parent_or_child"
    WRONG_SEMANTIC_TYPE = "wrong_semantic_type"
    WRONG_SEMANTIC_GROUP = "wrong_semantic_group"
    UNKNOWN = "unknown"


_ABBREVIATION_RE = re.compile(r"[A-ZÄÖÜ]{2,3}")


@dataclass(frozen=True)
class ErrorRecord:
    """One rank-1 miss with the categories that fired.

    ``manual_label`` is a human-supplied sub-category for unknown-class
    errors; it is never filled automatically.
    """

    mention_id: str
    surface: str
    predicted_cui: str
    gold_cui: str
    categories: frozenset[ErrorCategory]
    manual_label: str | None = None

    def __post_init__(self) -> None:
        if self.predicted_cui == self.gold_cui:
            raise DataError(f"mention {self.mention_id!r}: prediction equals gold")
        if not self.categories:
            raise DataError(f"mention {self.mention_id!r}: no categories")


def _normalized_names(kb: KnowledgeBase, cui: str) -> set[str]:
    return {normalize(name.surface) for name in kb.concepts[cui].names}


def _groups(kb: KnowledgeBase, cui: str) -> set[str]:
    # semantic types without a group mapping contribute nothing
    return {
        kb.group_map[tui] for tui in kb.concepts[cui].semantic_types if tui in kb.group_map
    }


def categorize(
    surface: str, predicted_cui: str, gold_cui: str, kb: KnowledgeBase
) -> set[ErrorCategory]:
    """Categories for one misprediction; ``unknown`` iff nothing else fires.

    The abbreviation rule full-matches 2-3 uppercase letters (German umlauts
    included) on the raw surface; word counting splits on whitespace only;
    synonym intersection compares normalized name sets.
    """
    if predicted_cui == gold_cui:
        raise DataError("prediction equals gold; nothing to categorize")
    for cui in (predicted_cui, gold_cui):
        if cui not in kb.concepts:
            raise DataError(f"cui {cui!r} not in the knowledge base")
    fired: set[ErrorCategory] = set()
    if _ABBREVIATION_RE.fullmatch(surface):
        fired.add(ErrorCategory.ABBREVIATION)
    if len(surface.split()) >= 3:
        fired.add(ErrorCategory.COMPLEX_ENTITY)
    if _normalized_names(kb, predicted_cui) & _normalized_names(kb, gold_cui):
        fired.add(ErrorCategory.SAME_SYNONYMS)
    if is_ancestor(kb, predicted_cui, gold_cui) or is_ancestor(kb, gold_cui, predicted_cui):
        fired.add(ErrorCategory.PARENT_OR_CHILD)
    pred_types = kb.concepts[predicted_cui].semantic_types
    gold_types = kb.concepts[gold_cui].semantic_types
    if pred_types.isdisjoint(gold_types):
        fired.add(ErrorCategory.WRONG_SEMANTIC_TYPE)
    if _groups(kb, predicted_cui).isdisjoint(_groups(kb, gold_cui)):
        fired.add(ErrorCategory.WRONG_SEMANTIC_GROUP)
    return fired or {ErrorCategory.UNKNOWN}


@dataclass(frozen=True)
class KindCorrectness:
    n_mentions: int
    n_correct: int

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_mentions


@dataclass(frozen=True)
class ErrorReport:
    total_errors: int
    category_counts: dict[ErrorCategory, int]
    records: tuple[ErrorRecord, ...]
    per_kind: dict[str, KindCorrectness]


def analyze(
    predictions: Mapping[str, CandidateList],
    gold: Mapping[str, str],
    kb: KnowledgeBase,
    mentions: Mapping[str, tuple[Mention, str]],
) -> ErrorReport:
    """Categorize every rank-1 miss; counts can exceed the error total.

    ``mentions`` maps mention_id to (mention, raw surface) as produced by
    ``collect_mentions``; the surface drives the string rules and the
    mention kind feeds the per-kind correctness table.
    """
    if not predictions:
        raise DataError("no predictions to analyze")
    counts = {category: 0 for category in ErrorCategory}
    records: list[ErrorRecord] = []
    kind_totals: dict[str, list[int]] = {}
    for mention_id, candidates in predictions.items():
        if mention_id not in gold:
            raise MissingGoldError(mention_id)
        if mention_id not in mentions:
            raise DataError(f"mention {mention_id!r} missing from the mention table")
        if not candidates:
            raise DataError(f"mention {mention_id!r} has no candidates")
        mention, surface = mentions[mention_id]
        predicted = candidates[0].cui
        correct = predicted == gold[mention_id]
        totals = kind_totals.setdefault(mention.kind, [0, 0])
        totals[0] += 1
        totals[1] += int(correct)
        if correct:
            continue
        fired = categorize(surface, predicted, gold[mention_id], kb)
        for category in fired:
            counts[category] += 1
        records.append(
            ErrorRecord(
                mention_id=mention_id,
                surface=surface,
                predicted_cui=predicted,
                gold_cui=gold[mention_id],
                categories=frozenset(fired),
            )
        )
    return ErrorReport(
        total_errors=len(records),
        category_counts=counts,
        records=tuple(records),
        per_kind={
            kind: KindCorrectness(n_mentions=n, n_correct=c)
            for kind, (n, c) in sorted(kind_totals.items())
        },
    )


def edit_distance_profile(
    predictions: Mapping[str, CandidateList],
    gold: Mapping[str, str],
    mentions: Mapping[str, tuple[Mention, str]],
    correct_only: bool = True,
) -> float:
    """Mean normalized edit distance between surfaces and matched names.

    Both sides are normalized (lowercase, NFC, collapsed whitespace) before
    measuring. ``correct_only`` restricts to rank-1 hits, mirroring
    profiling of what correct matches look like; otherwise every mention
    with a candidate is included.
    """
    distances: list[float] = []
    for mention_id, candidates in predictions.items():
        if mention_id not in gold:
            raise MissingGoldError(mention_id)
        if not candidates:
            continue
        if correct_only and candidates[0].cui != gold[mention_id]:
            continue
        if mention_id not in mentions:
            raise DataError(f"mention {mention_id!r} missing from the mention table")
        _, surface = mentions[mention_id]
        distances.append(
            normalized_edit_distance(normalize(surface), normalize(candidates[0].matched_name))
        )
    if not distances:
        raise DataError("no mentions selected for edit-distance profiling")
    return sum(distances) / len(distances)


def error_report_payload(report: ErrorReport) -> dict:
    return {
        "total_errors": report.total_errors,
        "category_counts": {
            category.value: report.category_counts[category] for category in ErrorCategory
        },
        "per_kind": {
            kind: {
                "n_mentions": kc.n_mentions,
                "n_correct": kc.n_correct,
                "accuracy": kc.accuracy,
            }
            for kind, kc in report.per_kind.items()
        },
    }


def save_error_report(report: ErrorReport, path: str | Path) -> None:
    atomic_write_text(Path(path), dump_json(error_report_payload(report)) + "\n")


def write_error_records_csv(report: ErrorReport, path: str | Path) -> None:
    """CSV dump of the individual records for manual sub-labeling."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["mention_id", "surface", "predicted_cui", "gold_cui", "categories", "manual_label"]
    )
    for record in report.records:
        writer.writerow(
            [
                record.mention_id,
                record.surface,
                record.predicted_cui,
                record.gold_cui,
                "|".join(sorted(c.value for c in record.categories)),
                record.manual_label or "",
            ]
        )
    atomic_write_text(Path(path), buffer.getvalue())
