"""Text preparation for mention linking.

Covers the lexical plumbing shared by every linker: string normalization, a
German suffix stemmer, sentence splitting, token-context assembly around
mentions, duplicate-mention grouping, and the annotated-post corpus format
(JSON lines, one post per line, code-point offsets).
"""

from __future__ import annotations

import json
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .exceptions import DataError, LoadError
from .ioutil import atomic_write_lines, dump_json

LOGGER = logging.getLogger(__name__)

Tokenizer = Callable[[str], list[str]]
Stemmer = Callable[[str], str]

MENTION_KINDS = ("lay", "technical")

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def normalize(text: str) -> str:
    """Lowercased NFC with whitespace runs collapsed to single spaces."""
    # lower(), not casefold(): eszett must survive so "groß" != "gross".
    # Lowercasing happens before NFC because a few full case mappings
    # decompose (e.g. dotted capital I), which would un-normalize the text.
    text = unicodedata.normalize("NFC", text.lower())
    return " ".join(text.split())


def word_tokenize(text: str) -> list[str]:
    """Words and single punctuation marks; the default token unit."""
    return _WORD_RE.findall(text)


# ---------------------------------------------------------------------------
# Stemming


_DEFAULT_SUFFIXES = ("ungen", "nden", "itis", "ung", "es", "en", "e", "s")


@dataclass(frozen=True)
class GermanSuffixStemmer:
    """Table-driven German suffix stripper.

    Suffixes are stripped repeatedly, longest match first, until none
    applies, so the map is idempotent by construction. A strip only happens
    when the remaining stem keeps at least ``min_stem_length`` characters.
    Multi-word input is stemmed per word. "Pyelonitis" stems to "pyelon",
    "stein" is left alone, and "entzündungen" meets "entzündung" at
    "entzünd".
    """

    suffixes: tuple[str, ...] = _DEFAULT_SUFFIXES
    min_stem_length: int = 4

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.suffixes, key=len, reverse=True))
        object.__setattr__(self, "suffixes", ordered)

    def _strip(self, word: str) -> str:
        while True:
            for suffix in self.suffixes:
                if word.endswith(suffix) and len(word) - len(suffix) >= self.min_stem_length:
                    word = word[: len(word) - len(suffix)]
                    break
            else:
                return word

    def __call__(self, word: str) -> str:
        parts = normalize(word).split(" ")
        return " ".join(self._strip(part) for part in parts)


DEFAULT_STEMMER = GermanSuffixStemmer()


def stem(word: str) -> str:
    """Stem with the default German suffix table."""
    return DEFAULT_STEMMER(word)


def name_key(text: str, stemmer: Stemmer | None = None) -> str:
    """Comparison key for names and mentions: normalized, optionally stemmed."""
    return stemmer(text) if stemmer is not None else normalize(text)


# ---------------------------------------------------------------------------
# Sentence splitting


# Periods ending these tokens do not terminate a sentence.
_ABBREVIATIONS = frozenset(
    {
        "z.b.", "bzw.", "ca.", "dr.", "prof.", "med.", "evtl.", "ggf.",
        "u.a.", "o.ä.", "u.ä.", "d.h.", "usw.", "etc.", "nr.", "inkl.",
        "abs.", "vgl.", "sog.", "bspw.", "u.u.", "z.t.", "mind.", "max.",
    }
)

_TERMINALS = ".!?"

# Single-letter tokens like "A." are treated as initials, not terminators.
_INITIAL_RE = re.compile(r"^\w\.$", re.UNICODE)


def _is_sentence_end(text: str, i: int) -> bool:
    """True when the terminal run containing position i ends a sentence."""
    j = i
    while j + 1 < len(text) and text[j + 1] in _TERMINALS:
        j += 1
    if j + 1 < len(text) and not text[j + 1].isspace():
        return False
    if text[i] != ".":
        return True
    start = i
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start : i + 1].lower()
    if token in _ABBREVIATIONS or _INITIAL_RE.match(token):
        return False
    return True


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, in order.

    Rule-based: a run of ``.!?`` followed by whitespace or end of text closes
    a sentence, except when the period belongs to a known abbreviation
    ("z.B.", "bzw.", ...) or a single-letter initial. Spans partition the
    text up to the whitespace between sentences, and each span contains at
    least one non-space character.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in _TERMINALS and _is_sentence_end(text, i):
            while i + 1 < n and text[i + 1] in _TERMINALS:
                i += 1
            end = i + 1
            if text[start:end].strip():
                spans.append((start, end))
            start = end
            while start < n and text[start].isspace():
                start = start + 1
            i = start
            continue
        i += 1
    if start < n and text[start:].strip():
        spans.append((start, n))
    return spans


# ---------------------------------------------------------------------------
# Corpus types


@dataclass(frozen=True)
class Mention:
    """An annotated mention inside a post; offsets are code points."""

    id: str
    start: int
    end: int
    kind: str
    gold_cui: str | None = None
    synonyms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in MENTION_KINDS:
            raise DataError(f"mention {self.id!r}: kind must be one of {MENTION_KINDS}, got {self.kind!r}")
        if not (0 <= self.start < self.end):
            raise DataError(f"mention {self.id!r}: invalid span ({self.start}, {self.end})")
        object.__setattr__(self, "synonyms", tuple(self.synonyms))


@dataclass(frozen=True)
class Post:
    """One forum post with its annotated mentions."""

    id: str
    text: str
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "mentions", tuple(self.mentions))
        for mention in self.mentions:
            if mention.end > len(self.text):
                raise DataError(
                    f"mention {mention.id!r} ends at {mention.end}, past the text ({len(self.text)} chars)"
                )

    def surface(self, mention: Mention) -> str:
        return self.text[mention.start : mention.end]


def iter_mentions(corpus: Iterable[Post]) -> Iterator[tuple[Post, Mention]]:
    for post in corpus:
        for mention in post.mentions:
            yield post, mention


def collect_mentions(corpus: Iterable[Post]) -> dict[str, tuple[Mention, str]]:
    """Index mentions by id, each with its raw surface string."""
    return {m.id: (m, post.surface(m)) for post, m in iter_mentions(corpus)}


# ---------------------------------------------------------------------------
# Corpus file format: JSON lines, one post per line


def read_corpus(path: str | Path) -> list[Post]:
    """Load posts; raises ``LoadError`` with a line number on bad input."""
    path = Path(path)
    posts: list[Post] = []
    seen_mention_ids: set[str] = set()
    seen_post_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(str(path), lineno, f"invalid JSON: {exc}") from exc
            try:
                mentions = [
                    Mention(
                        id=str(m["id"]),
                        start=int(m["start"]),
                        end=int(m["end"]),
                        kind=m["kind"],
                        gold_cui=m.get("gold_cui"),
                        synonyms=tuple(m.get("synonyms", ())),
                    )
                    for m in record.get("mentions", ())
                ]
                post = Post(id=str(record["id"]), text=record["text"], mentions=tuple(mentions))
            except (KeyError, TypeError, ValueError, DataError) as exc:
                raise LoadError(str(path), lineno, str(exc)) from exc
            if post.id in seen_post_ids:
                raise LoadError(str(path), lineno, f"duplicate post id {post.id!r}")
            seen_post_ids.add(post.id)
            for mention in post.mentions:
                if mention.id in seen_mention_ids:
                    raise LoadError(str(path), lineno, f"duplicate mention id {mention.id!r}")
                seen_mention_ids.add(mention.id)
            posts.append(post)
    return posts


def write_corpus(posts: Sequence[Post], path: str | Path) -> None:
    lines = []
    for post in posts:
        record = {
            "id": post.id,
            "text": post.text,
            "mentions": [
                {
                    "id": m.id,
                    "start": m.start,
                    "end": m.end,
                    "kind": m.kind,
                    "gold_cui": m.gold_cui,
                    "synonyms": list(m.synonyms),
                }
                for m in post.mentions
            ],
        }
        lines.append(dump_json(record))
    atomic_write_lines(path, lines)


# ---------------------------------------------------------------------------
# Context assembly


@dataclass(frozen=True)
class ContextualMention:
    """A mention plus its surrounding tokens, ready for an encoder.

    ``tokens`` is always the concatenation ctx_a + mention_tokens + ctx_b,
    and ``mention_token_span`` points at the mention inside it.
    """

    mention_id: str
    ctx_a: tuple[str, ...]
    mention_tokens: tuple[str, ...]
    ctx_b: tuple[str, ...]

    @property
    def tokens(self) -> list[str]:
        return list(self.ctx_a) + list(self.mention_tokens) + list(self.ctx_b)

    @property
    def mention_token_span(self) -> tuple[int, int]:
        a = len(self.ctx_a)
        return (a, a + len(self.mention_tokens))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def context_window(
    post: Post,
    mention: Mention,
    tokenizer: Tokenizer = word_tokenize,
    total_tokens: int = 64,
) -> ContextualMention:
    """Symmetric token window around a mention.

    The budget left after the mention is split with the larger half going to
    the left context: ``len(ctx_a) = ceil((total - len(m)) / 2)`` and
    ``len(ctx_b) = floor((total - len(m)) / 2)``. At document boundaries the
    window is simply shorter; no budget moves to the other side.
    """
    surface = post.surface(mention)
    mention_tokens = tokenizer(surface)
    if not mention_tokens:
        raise DataError(f"mention {mention.id!r}: surface {surface!r} produced no tokens")
    if len(mention_tokens) > total_tokens:
        raise DataError(
            f"mention {mention.id!r}: {len(mention_tokens)} tokens exceed the window budget {total_tokens}"
        )
    budget = total_tokens - len(mention_tokens)
    a_budget = math.ceil(budget / 2)
    b_budget = budget // 2
    before = tokenizer(post.text[: mention.start])
    after = tokenizer(post.text[mention.end :])
    ctx_a = before[len(before) - a_budget :] if a_budget > 0 else []
    ctx_b = after[:b_budget]
    return ContextualMention(
        mention_id=mention.id,
        ctx_a=tuple(ctx_a),
        mention_tokens=tuple(mention_tokens),
        ctx_b=tuple(ctx_b),
    )


def sentence_context(
    post: Post,
    mention: Mention,
    tokenizer: Tokenizer = word_tokenize,
) -> ContextualMention:
    """The sentence containing the mention, tokenized around it.

    When the mention straddles a sentence boundary, adjacent sentence spans
    are merged until the mention fits inside one.
    """
    spans = split_sentences(post.text)
    if not spans:
        raise DataError(f"post {post.id!r} has no sentences")
    first = None
    last = None
    for idx, (s, e) in enumerate(spans):
        if e > mention.start and first is None:
            first = idx
        if s < mention.end:
            last = idx
    if first is None or last is None or first > last:
        raise DataError(f"mention {mention.id!r} lies outside every sentence of post {post.id!r}")
    span_start = min(spans[first][0], mention.start)
    span_end = max(spans[last][1], mention.end)
    before = tokenizer(post.text[span_start : mention.start])
    after = tokenizer(post.text[mention.end : span_end])
    mention_tokens = tokenizer(post.surface(mention))
    if not mention_tokens:
        raise DataError(f"mention {mention.id!r}: surface produced no tokens")
    return ContextualMention(
        mention_id=mention.id,
        ctx_a=tuple(before),
        mention_tokens=tuple(mention_tokens),
        ctx_b=tuple(after),
    )


# ---------------------------------------------------------------------------
# Duplicate-mention grouping


def unique_mentions(
    mentions: Sequence[tuple[Mention, str]],
    stemmer: Stemmer | None = None,
) -> list[list[Mention]]:
    """Group duplicate mentions; returns groups in first-seen order.

    Input items are (mention, raw surface) pairs. Two mentions match when a
    comparison key is shared: a technical mention offers its surface as the
    probe against the other side's surface and synonyms, while a lay mention
    offers and accepts only its synonyms. Keys are normalized and, when a
    stemmer is given, stemmed per word. Groups are the transitive closure of
    the pairwise relation, so a lay mention with no synonyms always forms a
    singleton.
    """
    n = len(mentions)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    material_buckets: dict[str, list[int]] = {}
    probes: list[set[str]] = []
    for i, (mention, surface) in enumerate(mentions):
        synonym_keys = {name_key(s, stemmer) for s in mention.synonyms}
        if mention.kind == "technical":
            probe = {name_key(surface, stemmer)}
            material = probe | synonym_keys
        else:
            probe = set(synonym_keys)
            material = synonym_keys
        probes.append(probe)
        for key in material:
            material_buckets.setdefault(key, []).append(i)
    for i, probe in enumerate(probes):
        for key in probe:
            for j in material_buckets.get(key, ()):
                union(i, j)

    groups: dict[int, list[Mention]] = {}
    for i, (mention, _) in enumerate(mentions):
        groups.setdefault(find(i), []).append(mention)
    return [groups[root] for root in sorted(groups)]
