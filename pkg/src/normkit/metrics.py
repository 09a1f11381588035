"""Evaluation: Accuracy@n, weighted one-vs-rest P/R/F1, Cohen's kappa."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .candidates import CandidateList
from .exceptions import DataError, MissingGoldError
from .ioutil import atomic_write_text, dump_json

LOGGER = logging.getLogger(__name__)

REPORT_NS = (1, 5, 10, 32, 64)


def _require_gold(predictions: Mapping[str, CandidateList], gold: Mapping[str, str]) -> None:
    if not predictions:
        raise DataError("no predictions to evaluate")
    for mention_id in predictions:
        if mention_id not in gold:
            raise MissingGoldError(mention_id)


def accuracy_at(
    predictions: Mapping[str, CandidateList], gold: Mapping[str, str], n: int
) -> float:
    """Fraction of mentions whose gold CUI is within the first n candidates."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    _require_gold(predictions, gold)
    hits = sum(
        1
        for mention_id, candidates in predictions.items()
        if gold[mention_id] in {c.cui for c in candidates[:n]}
    )
    return hits / len(predictions)


def top1_labels(predictions: Mapping[str, CandidateList]) -> dict[str, str]:
    """Rank-1 CUI per mention; mentions with no candidates are skipped."""
    return {mid: cands[0].cui for mid, cands in predictions.items() if cands}


@dataclass(frozen=True)
class PRFResult:
    precision: float
    recall: float
    f1: float
    per_class: dict[str, tuple[float, float, float]]
    zero_predicted_classes: tuple[str, ...]


def weighted_prf(predicted: Mapping[str, str], gold: Mapping[str, str]) -> PRFResult:
    """One-vs-rest P/R/F1 per gold class, averaged by gold support.

    A class that is never predicted has undefined precision; it is scored 0
    and reported in ``zero_predicted_classes``. Labels predicted but absent
    from the gold set carry no weight (they still cost other classes
    precision as false positives).
    """
    if not predicted:
        raise DataError("no predictions to evaluate")
    for mention_id in predicted:
        if mention_id not in gold:
            raise MissingGoldError(mention_id)
    classes = sorted({gold[mid] for mid in predicted})
    total = len(predicted)
    per_class: dict[str, tuple[float, float, float]] = {}
    zero_predicted: list[str] = []
    precision = recall = f1 = 0.0
    for cls in classes:
        tp = sum(1 for mid, p in predicted.items() if p == cls and gold[mid] == cls)
        fp = sum(1 for mid, p in predicted.items() if p == cls and gold[mid] != cls)
        fn = sum(1 for mid, p in predicted.items() if p != cls and gold[mid] == cls)
        support = tp + fn
        if tp + fp == 0:
            zero_predicted.append(cls)
            p_cls = 0.0
        else:
            p_cls = tp / (tp + fp)
        r_cls = tp / support
        f_cls = 0.0 if p_cls + r_cls == 0 else 2 * p_cls * r_cls / (p_cls + r_cls)
        per_class[cls] = (p_cls, r_cls, f_cls)
        weight = support / total
        precision += weight * p_cls
        recall += weight * r_cls
        f1 += weight * f_cls
    if zero_predicted:
        LOGGER.warning(
            "%d class(es) never predicted; their precision is scored 0: %s",
            len(zero_predicted),
            ", ".join(zero_predicted[:5]),
        )
    return PRFResult(
        precision=precision,
        recall=recall,
        f1=f1,
        per_class=per_class,
        zero_predicted_classes=tuple(zero_predicted),
    )


def cohens_kappa(confusion: Sequence[Sequence[float]]) -> float:
    """kappa = (p_o - p_e) / (1 - p_e) from a 2x2 agreement table.

    Degenerate tables where chance agreement p_e reaches 1 force perfect
    observed agreement too and score 1.0.
    """
    table = np.asarray(confusion, dtype=np.float64)
    if table.shape != (2, 2):
        raise DataError(f"confusion table must be 2x2, got shape {table.shape}")
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise DataError("confusion counts must be finite and non-negative")
    total = float(table.sum())
    if total == 0:
        raise DataError("confusion table is empty")
    p_o = float(np.trace(table)) / total
    rows = table.sum(axis=1) / total
    cols = table.sum(axis=0) / total
    p_e = float(rows @ cols)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy@n plus weighted P/R/F1, optionally broken down by mention kind."""

    accuracy_at: dict[int, float]
    precision: float
    recall: float
    f1: float
    support: dict[str, int]
    n_mentions: int
    per_kind: dict[str, "MetricsReport"] = field(default_factory=dict)


def evaluate(
    predictions: Mapping[str, CandidateList],
    gold: Mapping[str, str],
    ns: Sequence[int] = REPORT_NS,
    kinds: Mapping[str, str] | None = None,
) -> MetricsReport:
    """Full evaluation over a prediction set.

    P/R/F1 are computed on rank-1 candidates; mentions with empty candidate
    lists count as misses for accuracy but are excluded from the one-vs-rest
    tallies. When ``kinds`` is given, the report carries one sub-report per
    kind value.
    """
    _require_gold(predictions, gold)
    acc = {n: accuracy_at(predictions, gold, n) for n in ns}
    prf = weighted_prf(top1_labels(predictions), gold)
    support: dict[str, int] = {}
    for mention_id in predictions:
        support[gold[mention_id]] = support.get(gold[mention_id], 0) + 1
    per_kind: dict[str, MetricsReport] = {}
    if kinds is not None:
        for kind in sorted(set(kinds.values())):
            subset = {mid: c for mid, c in predictions.items() if kinds.get(mid) == kind}
            if subset:
                per_kind[kind] = evaluate(subset, gold, ns=ns, kinds=None)
    return MetricsReport(
        accuracy_at=acc,
        precision=prf.precision,
        recall=prf.recall,
        f1=prf.f1,
        support=dict(sorted(support.items())),
        n_mentions=len(predictions),
        per_kind=per_kind,
    )


def metrics_report_payload(report: MetricsReport) -> dict:
    payload: dict = {
        "accuracy_at": {str(n): v for n, v in sorted(report.accuracy_at.items())},
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "n_mentions": report.n_mentions,
    }
    if report.per_kind:
        payload["per_kind"] = {
            kind: metrics_report_payload(sub) for kind, sub in sorted(report.per_kind.items())
        }
    return payload


def save_metrics_report(report: MetricsReport, path: str | Path) -> None:
    atomic_write_text(Path(path), dump_json(metrics_report_payload(report)) + "\n")
