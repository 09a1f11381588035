"""File formats shared with the normalization toolkit.

The exporter talks to the toolkit only through files, so the handful of
formats it touches are implemented here against their byte and JSON layout
instead of being imported: EMB1 embedding matrices, TOK1 per-token records,
concept tables, rerank datasets, and score lines. Binary output is 32-bit
little-endian float regardless of what the model computes in.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EMB1_MAGIC = b"EMB1"
TOK1_MAGIC = b"TOK1"

# mask codes carried per token in TOK1 records
MASK_REGULAR, MASK_CLS, MASK_SEP, MASK_PAD = 0, 1, 2, 3

N_CANDIDATES = 64

CONCEPT_HEADER = ("cui", "surface", "source", "preferred")

POOLINGS = ("cls", "nospec", "all", "tokens")


class ExportError(Exception):
    """Anything that should stop an export and reach the user as a message."""


def dump_json(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    # write-then-rename so a crashed export never leaves a half file
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_embeddings(rows: np.ndarray, ids: Sequence[str], path: str | Path) -> None:
    """EMB1: magic, u32 count, u32 dim, float32 rows, ids sidecar."""
    path = Path(path)
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ExportError(f"embedding matrix must be 2-D, got shape {rows.shape}")
    n, d = rows.shape
    if n == 0 or d == 0:
        raise ExportError("refusing to write an empty embedding matrix")
    if len(ids) != n:
        raise ExportError(f"{len(ids)} ids for {n} rows")
    for line in ids:
        if "\n" in line:
            raise ExportError(f"id {line!r} contains a newline")
    _atomic_write_bytes(path, EMB1_MAGIC + struct.pack("<II", n, d) + rows.tobytes())
    _atomic_write_text(ids_path(path), "".join(f"{line}\n" for line in ids))


def write_token_records(
    records: Sequence[tuple[np.ndarray, np.ndarray]],
    ids: Sequence[str],
    path: str | Path,
) -> None:
    """TOK1 records back to back: magic, u32 tokens, u32 dim, floats, masks."""
    path = Path(path)
    if not records:
        raise ExportError("refusing to write an empty token-embedding file")
    if len(ids) != len(records):
        raise ExportError(f"{len(ids)} ids for {len(records)} records")
    chunks = []
    for tokens, mask in records:
        tokens = np.ascontiguousarray(tokens, dtype="<f4")
        mask = np.asarray(mask, dtype=np.uint8)
        t, d = tokens.shape
        if mask.shape != (t,):
            raise ExportError("mask length does not match the token count")
        chunks.append(TOK1_MAGIC + struct.pack("<II", t, d))
        chunks.append(tokens.tobytes())
        chunks.append(mask.tobytes())
    _atomic_write_bytes(path, b"".join(chunks))
    _atomic_write_text(ids_path(path), "".join(f"{line}\n" for line in ids))


def ids_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids")


def pool_rows(tokens: np.ndarray, mask: np.ndarray, pooling: str) -> np.ndarray:
    """One float32 vector per the pooling rule.

    cls is the first-token vector verbatim; nospec averages regular tokens;
    all averages everything except padding. Means accumulate in float64 and
    come back as float32, matching the toolkit's arithmetic so pooled files
    agree bit for bit with pooling the corresponding TOK1 record.
    """
    if pooling == "cls":
        if mask[0] == MASK_PAD:
            raise ExportError("first token is padding; nothing to pool")
        return tokens[0]
    if pooling == "nospec":
        include = mask == MASK_REGULAR
    elif pooling == "all":
        include = mask != MASK_PAD
    else:
        raise ExportError(f"unknown pooling {pooling!r}")
    if not include.any():
        raise ExportError(f"no tokens to pool under {pooling!r}")
    return tokens[include].astype(np.float64).mean(axis=0).astype(np.float32)


def read_input_lines(path: str | Path, what: str = "input") -> list[str]:
    path = Path(path)
    if not path.exists():
        raise ExportError(f"{what} file {path} does not exist")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def read_concept_names(path: str | Path) -> dict[str, str]:
    """Concept table -> one display name per CUI.

    The table is tab-separated with a fixed header. The preferred name wins;
    a concept with no preferred row falls back to its first listed name.
    """
    path = Path(path)
    if not path.exists():
        raise ExportError(f"concept table {path} does not exist")
    names: dict[str, str] = {}
    preferred: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if lineno == 1:
                if tuple(line.split("\t")) != CONCEPT_HEADER:
                    raise ExportError(f"{path}:1: not a concept table header: {line!r}")
                continue
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ExportError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            cui, surface, _source, flag = fields
            if flag not in ("0", "1"):
                raise ExportError(f"{path}:{lineno}: preferred flag must be 0 or 1, got {flag!r}")
            if cui not in names:
                names[cui] = surface
            if flag == "1" and cui not in preferred:
                names[cui] = surface
                preferred.add(cui)
    return names


def read_rerank_examples(path: str | Path) -> list[tuple[list[str], list[str]]]:
    """Rerank dataset -> (sentence tokens, candidate CUIs) per example.

    Only the fields the scorer needs are pulled out; the span and gold label
    stay untouched. Candidate lists must hold exactly 64 entries.
    """
    path = Path(path)
    if not path.exists():
        raise ExportError(f"dataset {path} does not exist")
    examples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                sentence = [str(t) for t in record["sentence"]]
                candidates = [str(c) for c in record["candidates"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExportError(f"{path}:{lineno}: {exc}") from exc
            if len(candidates) != N_CANDIDATES:
                raise ExportError(
                    f"{path}:{lineno}: expected {N_CANDIDATES} candidates, got {len(candidates)}"
                )
            examples.append((sentence, candidates))
    return examples


def write_score_lines(rows: Iterable[Sequence[float]], path: str | Path) -> None:
    """One ``{example_id, scores}`` JSON line per example, ids by position."""
    lines = []
    for example_id, values in enumerate(rows):
        values = [float(v) for v in values]
        if len(values) != N_CANDIDATES:
            raise ExportError(
                f"example {example_id}: expected {N_CANDIDATES} scores, got {len(values)}"
            )
        lines.append(dump_json({"example_id": example_id, "scores": values}))
    _atomic_write_text(Path(path), "".join(f"{line}\n" for line in lines))


def resolve_display_names(
    candidates: Sequence[str], names: Mapping[str, str], where: str
) -> list[str]:
    missing = sorted({c for c in candidates if c not in names})
    if missing:
        raise ExportError(f"{where}: no concept-table entry for {missing[:5]}")
    return [names[c] for c in candidates]
