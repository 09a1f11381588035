"""Byte-pair encoding: training, encoding, decoding, and the file formats.

Words are split on whitespace/punctuation boundaries, suffixed with the
end-of-word symbol, and the most frequent adjacent symbol pair is merged
iteratively. Frequency ties break lexicographically on (left, right) so
training is reproducible. The vocabulary reserves [PAD]=0, [CLS]=1, [SEP]=2,
[UNK]=3 and grows monotonically with the merge count.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .exceptions import DataError, LoadError
from .ioutil import atomic_write_lines
from .textprep import word_tokenize

LOGGER = logging.getLogger(__name__)

END_OF_WORD = "</w>"
SPECIALS = ("[PAD]", "[CLS]", "[SEP]", "[UNK]")
PAD_ID, CLS_ID, SEP_ID, UNK_ID = 0, 1, 2, 3

MergePair = tuple[str, str]


def word_counts(text: str) -> list[tuple[str, int]]:
    """Pre-split text into (word, count) pairs for training."""
    counts = Counter(word_tokenize(text))
    return sorted(counts.items())


def _apply_merge(symbols: tuple[str, ...], pair: MergePair) -> tuple[str, ...]:
    left, right = pair
    merged = left + right
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def train_bpe(
    corpus: Sequence[tuple[str, int]],
    num_merges: int,
) -> tuple[list[MergePair], dict[str, int]]:
    """Learn merges from (word, count) pairs.

    Returns the ordered merge list and the vocabulary. Fewer than
    ``num_merges`` merges are recorded when no adjacent pair is left.
    """
    if not corpus:
        raise DataError("empty training corpus")
    if num_merges < 0:
        raise DataError(f"num_merges must be >= 0, got {num_merges}")
    words: dict[tuple[str, ...], int] = {}
    alphabet: set[str] = {END_OF_WORD}
    for word, count in corpus:
        if count <= 0:
            raise DataError(f"non-positive count for word {word!r}")
        symbols = tuple(word) + (END_OF_WORD,)
        words[symbols] = words.get(symbols, 0) + count
        alphabet.update(word)

    merges: list[MergePair] = []
    for _ in range(num_merges):
        pair_counts: Counter[MergePair] = Counter()
        for symbols, count in words.items():
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] += count
        if not pair_counts:
            break
        top = max(pair_counts.values())
        best = min(pair for pair, n in pair_counts.items() if n == top)
        merges.append(best)
        words = {_apply_merge(symbols, best): count for symbols, count in words.items()}

    vocab = build_vocab(alphabet, merges)
    return merges, vocab


def build_vocab(alphabet: Iterable[str], merges: Sequence[MergePair]) -> dict[str, int]:
    """Dense ids: specials, then sorted base symbols, then merge products."""
    vocab: dict[str, int] = {token: i for i, token in enumerate(SPECIALS)}
    for symbol in sorted(set(alphabet) | {END_OF_WORD}):
        if symbol not in vocab:
            vocab[symbol] = len(vocab)
    for left, right in merges:
        token = left + right
        if token not in vocab:
            vocab[token] = len(vocab)
    return vocab


def segment_word(word: str, merges: Sequence[MergePair]) -> tuple[str, ...]:
    """Symbols of one word after replaying all merges in training order."""
    symbols = tuple(word) + (END_OF_WORD,)
    for pair in merges:
        if len(symbols) == 1:
            break
        symbols = _apply_merge(symbols, pair)
    return symbols


def encode(text: str, merges: Sequence[MergePair], vocab: dict[str, int]) -> list[int]:
    """Ids for the text; symbols outside the vocabulary become [UNK]."""
    ids: list[int] = []
    for word in word_tokenize(text):
        for symbol in segment_word(word, merges):
            ids.append(vocab.get(symbol, UNK_ID))
    return ids


def decode(ids: Sequence[int], vocab: dict[str, int]) -> str:
    """Inverse of encode for single-space-separated text over the training
    alphabet: specials are stripped and the end-of-word symbol becomes a
    space."""
    inverse = {i: token for token, i in vocab.items()}
    parts: list[str] = []
    for token_id in ids:
        token = inverse.get(token_id)
        if token is None:
            raise DataError(f"id {token_id} is not in the vocabulary")
        if token in SPECIALS:
            continue
        parts.append(token)
    return "".join(parts).replace(END_OF_WORD, " ").rstrip(" ")


@dataclass(frozen=True)
class BpeTokenizer:
    """Trained merges plus vocabulary, bundled for convenience."""

    merges: tuple[MergePair, ...]
    vocab: dict[str, int]

    @classmethod
    def train(cls, corpus: Sequence[tuple[str, int]], num_merges: int) -> "BpeTokenizer":
        merges, vocab = train_bpe(corpus, num_merges)
        return cls(merges=tuple(merges), vocab=vocab)

    def tokenize(self, text: str) -> list[str]:
        """Subword symbol strings; plugs in wherever a tokenizer is needed."""
        out: list[str] = []
        for word in word_tokenize(text):
            out.extend(segment_word(word, self.merges))
        return out

    def encode(self, text: str) -> list[int]:
        return encode(text, self.merges, self.vocab)

    def decode(self, ids: Sequence[int]) -> str:
        return decode(ids, self.vocab)


# ---------------------------------------------------------------------------
# File formats: one merge per line (left<SPACE>right), vocab as token<TAB>id


def save_merges(merges: Sequence[MergePair], path: str | Path) -> None:
    atomic_write_lines(path, [f"{left} {right}" for left, right in merges])


def load_merges(path: str | Path) -> list[MergePair]:
    path = Path(path)
    merges: list[MergePair] = []
    seen: set[MergePair] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise LoadError(str(path), lineno, f"expected 'left right', got {line!r}")
            pair = (parts[0], parts[1])
            if pair in seen:
                raise LoadError(str(path), lineno, f"duplicate merge {pair!r}")
            seen.add(pair)
            merges.append(pair)
    return merges


def save_vocab(vocab: dict[str, int], path: str | Path) -> None:
    rows = sorted(vocab.items(), key=lambda item: item[1])
    atomic_write_lines(path, [f"{token}\t{token_id}" for token, token_id in rows])


def load_vocab(path: str | Path) -> dict[str, int]:
    path = Path(path)
    vocab: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LoadError(str(path), lineno, f"expected 'token<TAB>id', got {line!r}")
            token, raw_id = parts
            try:
                token_id = int(raw_id)
            except ValueError:
                raise LoadError(str(path), lineno, f"bad id {raw_id!r}") from None
            if token in vocab or token_id in set(vocab.values()):
                raise LoadError(str(path), lineno, f"duplicate token or id in {line!r}")
            vocab[token] = token_id
    for i, token in enumerate(SPECIALS):
        if vocab.get(token) != i:
            raise DataError(f"vocabulary is missing special {token} at id {i}")
    if sorted(vocab.values()) != list(range(len(vocab))):
        raise DataError("vocabulary ids are not dense")
    return vocab
