"""Candidate lists shared by all linkers, and the predictions file format.

A prediction is a ranked candidate list per mention. The file format (PRED1)
is JSON lines: one object per mention with keys ``mention_id`` and
``candidates``, each candidate carrying ``cui``, ``name``, ``score``,
``rank``. A list holds at most 64 candidates, ranks run 1..k, scores are
non-increasing, and no CUI repeats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .exceptions import DataError, LoadError
from .ioutil import atomic_write_lines, dump_json

MAX_CANDIDATES = 64


@dataclass(frozen=True)
class Candidate:
    """One ranked answer: a concept plus the name that earned the score."""

    cui: str
    matched_name: str
    score: float
    rank: int
    note: str | None = None


CandidateList = list[Candidate]


def check_candidate_list(candidates: Sequence[Candidate]) -> None:
    """Enforce the shared invariants; raises ``DataError`` on violation."""
    cuis = [c.cui for c in candidates]
    if len(set(cuis)) != len(cuis):
        raise DataError("candidate list repeats a CUI")
    for i, candidate in enumerate(candidates, start=1):
        if candidate.rank != i:
            raise DataError(f"rank {candidate.rank} at position {i}")
    for earlier, later in zip(candidates, candidates[1:]):
        if later.score > earlier.score:
            raise DataError("scores increase with rank")


def write_predictions(
    predictions: Mapping[str, Sequence[Candidate]] | Iterable[tuple[str, Sequence[Candidate]]],
    path: str | Path,
) -> None:
    """Write PRED1; insertion order is preserved so reruns are byte-stable."""
    items = predictions.items() if isinstance(predictions, Mapping) else predictions
    lines = []
    for mention_id, candidates in items:
        if len(candidates) > MAX_CANDIDATES:
            raise DataError(
                f"mention {mention_id!r} has {len(candidates)} candidates; the format allows {MAX_CANDIDATES}"
            )
        record = {
            "mention_id": mention_id,
            "candidates": [
                {"cui": c.cui, "name": c.matched_name, "score": c.score, "rank": c.rank}
                for c in candidates
            ],
        }
        lines.append(dump_json(record))
    atomic_write_lines(path, lines)


def read_predictions(path: str | Path) -> dict[str, CandidateList]:
    path = Path(path)
    predictions: dict[str, CandidateList] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                mention_id = str(record["mention_id"])
                candidates = [
                    Candidate(
                        cui=str(c["cui"]),
                        matched_name=str(c["name"]),
                        score=float(c["score"]),
                        rank=int(c["rank"]),
                    )
                    for c in record["candidates"]
                ]
            except (ValueError, KeyError, TypeError) as exc:
                raise LoadError(str(path), lineno, str(exc)) from exc
            if mention_id in predictions:
                raise LoadError(str(path), lineno, f"duplicate mention id {mention_id!r}")
            if len(candidates) > MAX_CANDIDATES:
                raise LoadError(str(path), lineno, f"{len(candidates)} candidates exceed {MAX_CANDIDATES}")
            predictions[mention_id] = candidates
    return predictions
