"""Embedding linker: pooling configs, cosine top-k search, and EMB1/TOK1 io.

An embedding index holds one float32 row per concept name (215k×1024 at
full transformer scale; any d works). Mentions are linked by exhaustive
cosine similarity with deduplication to the k best distinct concepts.
A deterministic hash-based embedder stands in for a transformer so the
whole pipeline runs and tests offline; externally produced embeddings load
through the same file formats.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .candidates import Candidate, CandidateList
from .exceptions import DataError, ZeroVectorError
from .kb import KnowledgeBase
from .textprep import Tokenizer, word_tokenize

LOGGER = logging.getLogger(__name__)

EMB1_MAGIC = b"EMB1"
TOK1_MAGIC = b"TOK1"

MASK_REGULAR, MASK_CLS, MASK_SEP, MASK_PAD = 0, 1, 2, 3

INDEX_ID_SEPARATOR = "\t"


class ExtractionConfig(str, Enum):
    """How a token matrix becomes one vector.

    cls: the first-token vector. nospec: mean over regular tokens. all:
    mean over cls+sep+regular. Padding is always excluded.
    """

    CLS = "cls"
    NOSPEC = "nospec"
    ALL = "all"


def cosine_similarity(v: np.ndarray, w: np.ndarray) -> float:
    """Cosine of the angle between two vectors, accumulated in float64."""
    v64 = np.asarray(v, dtype=np.float64).reshape(-1)
    w64 = np.asarray(w, dtype=np.float64).reshape(-1)
    if v64.shape != w64.shape:
        raise DataError(f"dimension mismatch: {v64.shape[0]} vs {w64.shape[0]}")
    nv = float(np.linalg.norm(v64))
    nw = float(np.linalg.norm(w64))
    if nv == 0.0 or nw == 0.0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.dot(v64, w64) / (nv * nw))


@dataclass(frozen=True)
class TokenEmbeddings:
    """Per-token vectors plus special-token mask codes.

    Mask codes: 0 regular, 1 cls, 2 sep, 3 pad. A cls appears only at
    position 0 (at most once) and pads form a suffix.
    """

    tokens: np.ndarray
    special_mask: np.ndarray

    def __post_init__(self) -> None:
        tokens = np.asarray(self.tokens, dtype=np.float32)
        mask = np.asarray(self.special_mask, dtype=np.uint8)
        if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] == 0:
            raise DataError(f"token matrix must be non-empty 2-D, got shape {tokens.shape}")
        if mask.shape != (tokens.shape[0],):
            raise DataError("special_mask length does not match the token count")
        if not np.all(np.isfinite(tokens)):
            raise DataError("token matrix contains non-finite entries")
        if mask.max(initial=0) > MASK_PAD:
            raise DataError("special_mask contains an unknown code")
        cls_positions = np.flatnonzero(mask == MASK_CLS)
        if cls_positions.size > 1 or (cls_positions.size == 1 and cls_positions[0] != 0):
            raise DataError("cls must appear exactly once, at position 0")
        pad_positions = np.flatnonzero(mask == MASK_PAD)
        if pad_positions.size and not np.array_equal(
            pad_positions, np.arange(tokens.shape[0] - pad_positions.size, tokens.shape[0])
        ):
            raise DataError("pad positions must form a suffix")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "special_mask", mask)

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])


def pool(te: TokenEmbeddings, cfg: ExtractionConfig) -> np.ndarray:
    """Reduce a token matrix to one float32 vector per the config."""
    cfg = ExtractionConfig(cfg)
    mask = te.special_mask
    if cfg is ExtractionConfig.CLS:
        if mask[0] == MASK_PAD:
            raise DataError("cannot take the first-token vector of an all-pad sequence")
        return te.tokens[0]
    if cfg is ExtractionConfig.NOSPEC:
        include = mask == MASK_REGULAR
    else:
        include = mask != MASK_PAD
    if not include.any():
        raise DataError(f"no tokens to pool under config {cfg.value!r}")
    return te.tokens[include].astype(np.float64).mean(axis=0).astype(np.float32)


# ---------------------------------------------------------------------------
# Built-in deterministic embedder


@dataclass
class HashedEmbeddingTable:
    """Seeded token-embedding table with hashed character-trigram features.

    Vectors are materialized lazily from a keyed hash, so any token has a
    reproducible embedding without training. A one-character edit changes
    the trigram set and therefore the row.
    """

    dim: int = 64
    seed: int = 0
    _cache: dict[tuple[str, str], np.ndarray] = field(default_factory=dict, repr=False)

    def _vector(self, namespace: str, key: str) -> np.ndarray:
        cached = self._cache.get((namespace, key))
        if cached is None:
            digest = hashlib.blake2b(
                f"{self.seed}:{namespace}:{key}".encode("utf-8"), digest_size=16
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            cached = rng.standard_normal(self.dim).astype(np.float32)
            self._cache[(namespace, key)] = cached
        return cached

    def token_vector(self, token: str) -> np.ndarray:
        return self._vector("token", token)

    def trigram_vector(self, trigram: str) -> np.ndarray:
        return self._vector("trigram", trigram)

    @staticmethod
    def trigrams(token: str) -> list[str]:
        padded = f"#{token}#"
        return [padded[i : i + 3] for i in range(len(padded) - 2)]

    def token_row(self, token: str) -> np.ndarray:
        row = self.token_vector(token).astype(np.float64)
        for trigram in self.trigrams(token):
            row += self.trigram_vector(trigram)
        return row.astype(np.float32)


def embed_tokens_builtin(tokens: Sequence[str], table: HashedEmbeddingTable) -> TokenEmbeddings:
    """Token matrix for a pre-tokenized sequence, wrapped in [CLS]/[SEP]."""
    rows = [table.token_vector("[CLS]")]
    rows += [table.token_row(token) for token in tokens]
    rows.append(table.token_vector("[SEP]"))
    mask = [MASK_CLS] + [MASK_REGULAR] * len(tokens) + [MASK_SEP]
    return TokenEmbeddings(tokens=np.stack(rows), special_mask=np.asarray(mask, dtype=np.uint8))


def embed_name_builtin(
    name: str,
    tokenizer: Tokenizer,
    table: HashedEmbeddingTable,
) -> TokenEmbeddings:
    """Deterministic token embeddings for a name string."""
    return embed_tokens_builtin(tokenizer(name), table)


@dataclass
class BuiltinEmbedder:
    """Bundles the hash table with a tokenizer; callable on raw text."""

    table: HashedEmbeddingTable = field(default_factory=HashedEmbeddingTable)
    tokenizer: Tokenizer = word_tokenize

    def __call__(self, text: str) -> TokenEmbeddings:
        return embed_name_builtin(text, self.tokenizer, self.table)

    def embed_tokens(self, tokens: Sequence[str]) -> TokenEmbeddings:
        return embed_tokens_builtin(tokens, self.table)


# ---------------------------------------------------------------------------
# Embedding matrix and index construction


class EmbeddingMatrix:
    """n×d float32 matrix with one id string per row.

    Name-index rows use the id convention "cui<TAB>surface"; mention
    matrices carry mention ids. float64 views and row norms are cached for
    search.
    """

    def __init__(self, data: np.ndarray, ids: Sequence[str]):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] == 0:
            raise DataError(f"embedding matrix must be 2-D with d > 0, got shape {data.shape}")
        if len(ids) != data.shape[0]:
            raise DataError(f"{len(ids)} ids for {data.shape[0]} rows")
        if not np.all(np.isfinite(data)):
            raise DataError("embedding matrix contains non-finite entries")
        self.data = data
        self.ids = tuple(str(i) for i in ids)
        self._data64: np.ndarray | None = None
        self._norms: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    @property
    def data64(self) -> np.ndarray:
        if self._data64 is None:
            self._data64 = self.data.astype(np.float64)
        return self._data64

    @property
    def norms64(self) -> np.ndarray:
        if self._norms is None:
            self._norms = np.linalg.norm(self.data64, axis=1)
        return self._norms

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.data, other.data)


Embedder = Callable[[str], TokenEmbeddings]


def build_embedding_index(
    source: KnowledgeBase | Iterable[tuple[str, str]],
    embedder: Embedder,
    cfg: ExtractionConfig,
) -> EmbeddingMatrix:
    """Embed one row per name.

    From a knowledge base: one row per distinct (cui, surface) pair in
    sorted order, retired concepts excluded, ids "cui<TAB>surface"; the row
    count is at least the concept count. From (id, text) pairs: rows in
    input order with the given ids.
    """
    cfg = ExtractionConfig(cfg)
    if isinstance(source, KnowledgeBase):
        pairs = sorted({(name.cui, name.surface) for name in source.iter_names(include_retired=False)})
        items = [(f"{cui}{INDEX_ID_SEPARATOR}{surface}", surface) for cui, surface in pairs]
    else:
        items = [(str(row_id), text) for row_id, text in source]
    if not items:
        raise DataError("nothing to embed")
    rows = np.stack([pool(embedder(text), cfg) for _, text in items])
    return EmbeddingMatrix(data=rows, ids=[row_id for row_id, _ in items])


def _split_index_id(row_id: str) -> tuple[str, str]:
    cui, sep, name = row_id.partition(INDEX_ID_SEPARATOR)
    if not sep:
        raise DataError(
            f"index id {row_id!r} is not in 'cui<TAB>name' form; was this index built over names?"
        )
    return cui, name


def _rank_rows(
    index: EmbeddingMatrix,
    scores: np.ndarray,
    kb: KnowledgeBase | None,
    k: int,
) -> CandidateList:
    """Walk rows in (-score, cui, name) order, keep the best name per CUI."""
    order = np.argsort(-scores, kind="stable")
    selected: list[Candidate] = []
    chosen: set[str] = set()
    i = 0
    n = order.size
    while i < n and len(selected) < k:
        j = i
        score = scores[order[i]]
        while j < n and scores[order[j]] == score:
            j += 1
        group = sorted(_split_index_id(index.ids[row]) for row in order[i:j])
        for cui, name in group:
            if cui in chosen:
                continue
            if kb is not None and cui not in kb.concepts:
                raise DataError(f"index row references unknown cui {cui!r}")
            chosen.add(cui)
            selected.append(
                Candidate(cui=cui, matched_name=name, score=float(score), rank=len(selected) + 1)
            )
            if len(selected) == k:
                break
        i = j
    return selected


def link_embedding(
    index: EmbeddingMatrix,
    mention_vec: np.ndarray,
    kb: KnowledgeBase | None = None,
    k: int = 64,
) -> CandidateList:
    """Rank the k best distinct concepts by cosine similarity.

    Ties break on (-score, cui, name) ascending. When a knowledge base is
    supplied, candidate CUIs are checked against it.
    """
    if index.n == 0:
        raise DataError("embedding index is empty")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    v = np.asarray(mention_vec, dtype=np.float64).reshape(-1)
    if v.shape[0] != index.dim:
        raise DataError(f"dimension mismatch: query {v.shape[0]}, index {index.dim}")
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ZeroVectorError("cannot link a zero mention vector")
    norms = index.norms64
    if np.any(norms == 0.0):
        bad = index.ids[int(np.flatnonzero(norms == 0.0)[0])]
        raise ZeroVectorError(f"index row {bad!r} is a zero vector")
    scores = (index.data64 @ v) / (norms * nv)
    return _rank_rows(index, scores, kb, k)


def link_embedding_batch(
    index: EmbeddingMatrix,
    mentions: EmbeddingMatrix,
    kb: KnowledgeBase | None = None,
    k: int = 64,
) -> list[CandidateList]:
    """Link every row of a mention matrix; one matmul, then per-query walks."""
    if mentions.dim != index.dim:
        raise DataError(f"dimension mismatch: mentions {mentions.dim}, index {index.dim}")
    if index.n == 0:
        raise DataError("embedding index is empty")
    norms = index.norms64
    if np.any(norms == 0.0):
        raise ZeroVectorError("index contains a zero row")
    query = mentions.data64
    query_norms = np.linalg.norm(query, axis=1)
    if np.any(query_norms == 0.0):
        bad = mentions.ids[int(np.flatnonzero(query_norms == 0.0)[0])]
        raise ZeroVectorError(f"mention {bad!r} has a zero vector")
    all_scores = (query @ index.data64.T) / np.outer(query_norms, norms)
    return [_rank_rows(index, all_scores[i], kb, k) for i in range(mentions.n)]


# ---------------------------------------------------------------------------
# EMB1 / IDS1 / TOK1 file formats (little-endian, float32)


def _ids_path(path: Path) -> Path:
    return path.with_name(path.name + ".ids")


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write EMB1 plus the IDS1 sidecar (same path with '.ids' appended)."""
    from .ioutil import atomic_write_bytes, atomic_write_lines

    path = Path(path)
    for row_id in matrix.ids:
        if "\n" in row_id:
            raise DataError(f"id {row_id!r} contains a newline")
    payload = EMB1_MAGIC + struct.pack("<II", matrix.n, matrix.dim)
    payload += np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, payload)
    atomic_write_lines(_ids_path(path), list(matrix.ids))


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != EMB1_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {EMB1_MAGIC!r}")
    if len(blob) < 12:
        raise DataError(f"{path}: truncated header")
    n, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n * d
    if len(blob) != expected:
        raise DataError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(n, d).copy()
    ids_file = _ids_path(path)
    if not ids_file.exists():
        raise DataError(f"missing ids sidecar {ids_file}")
    raw = ids_file.read_text(encoding="utf-8")
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != n:
        raise DataError(f"{ids_file}: {len(lines)} ids for {n} rows")
    return EmbeddingMatrix(data=data, ids=lines)


def save_token_embeddings(
    records: TokenEmbeddings | Sequence[TokenEmbeddings],
    path: str | Path,
) -> None:
    """Write one or more TOK1 records back to back."""
    from .ioutil import atomic_write_bytes

    if isinstance(records, TokenEmbeddings):
        records = [records]
    if not records:
        raise DataError("no token-embedding records to write")
    chunks = []
    for te in records:
        t, d = te.tokens.shape
        chunks.append(TOK1_MAGIC + struct.pack("<II", t, d))
        chunks.append(np.ascontiguousarray(te.tokens, dtype="<f4").tobytes())
        chunks.append(te.special_mask.astype(np.uint8).tobytes())
    atomic_write_bytes(Path(path), b"".join(chunks))


def load_token_embeddings(path: str | Path) -> list[TokenEmbeddings]:
    """Read every TOK1 record in the file."""
    path = Path(path)
    blob = path.read_bytes()
    records: list[TokenEmbeddings] = []
    offset = 0
    while offset < len(blob):
        if blob[offset : offset + 4] != TOK1_MAGIC:
            raise DataError(f"{path}: bad magic at offset {offset}")
        if offset + 12 > len(blob):
            raise DataError(f"{path}: truncated record header at offset {offset}")
        t, d = struct.unpack("<II", blob[offset + 4 : offset + 12])
        body = 4 * t * d
        end = offset + 12 + body + t
        if end > len(blob):
            raise DataError(f"{path}: truncated record at offset {offset}")
        tokens = np.frombuffer(blob, dtype="<f4", count=t * d, offset=offset + 12).reshape(t, d).copy()
        mask = np.frombuffer(blob, dtype=np.uint8, count=t, offset=offset + 12 + body).copy()
        records.append(TokenEmbeddings(tokens=tokens, special_mask=mask))
        offset = end
    if not records:
        raise DataError(f"{path}: no records")
    return records
