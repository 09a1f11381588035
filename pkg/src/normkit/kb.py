"""UMLS-style knowledge base: concepts, names, types, hierarchy, groups.

A knowledge base maps concept identifiers (CUIs) to concepts carrying one or
more names; the German subset this toolkit targets has roughly 215k names
over 110k concepts at full scale. Four tab-separated tables feed it (concept
names, semantic types, hierarchy edges, semantic groups) plus an optional
JSON-lines auxiliary lexicon merged in under an unambiguity rule.
"""

from __future__ import annotations

import json
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .exceptions import DataError, LoadError
from .ioutil import atomic_write_lines
from .textprep import name_key, normalize

LOGGER = logging.getLogger(__name__)

CUI_PATTERN = r"C\d{7}"
TUI_PATTERN = r"T\d{3}"
LEXICON_SOURCE = "LEXICON"

CONCEPT_TABLE_HEADER = "cui\tsurface\tsource\tpreferred"


@dataclass(frozen=True)
class ConceptName:
    """One surface form of a concept, tagged with its source vocabulary."""

    surface: str
    cui: str
    source: str
    preferred: bool = False


@dataclass
class Concept:
    cui: str
    names: list[ConceptName] = field(default_factory=list)
    semantic_types: set[str] = field(default_factory=set)
    retired: bool = False


@dataclass(frozen=True)
class LexiconEntry:
    headword: str
    synonyms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.headword.strip():
            raise DataError("lexicon entry with empty headword")
        object.__setattr__(self, "synonyms", tuple(self.synonyms))


@dataclass(frozen=True)
class MergeReport:
    """Outcome of a lexicon merge; skips are counts, not errors."""

    cuis_extended: int
    names_added: int
    skipped_ambiguous: int
    skipped_unmatched: int


class KnowledgeBase:
    """Concept store with a normalized-surface index and a hierarchy.

    Mutation happens through ``add_name``/``add_hierarchy_edge`` during
    loading and merging; afterwards the store is treated as immutable and is
    safe for concurrent readers.
    """

    def __init__(self, cui_pattern: str = CUI_PATTERN):
        self.cui_pattern = cui_pattern
        self._cui_re = re.compile(cui_pattern)
        self.concepts: dict[str, Concept] = {}
        self.name_index: dict[str, set[str]] = {}
        self.hierarchy: set[tuple[str, str]] = set()
        self.group_map: dict[str, str] = {}
        self.duplicates_dropped = 0
        self._parents: dict[str, set[str]] = {}
        self._name_triples: set[tuple[str, str, str]] = set()

    # -- construction -------------------------------------------------

    def add_name(self, surface: str, cui: str, source: str, preferred: bool = False) -> bool:
        """Add one name; returns False for a duplicate (cui, surface, source)."""
        if not surface.strip():
            raise DataError(f"empty surface for cui {cui!r}")
        if not self._cui_re.fullmatch(cui):
            raise DataError(f"cui {cui!r} does not match pattern {self.cui_pattern!r}")
        triple = (cui, surface, source)
        if triple in self._name_triples:
            self.duplicates_dropped += 1
            return False
        concept = self.concepts.get(cui)
        if concept is None:
            concept = self.concepts[cui] = Concept(cui=cui)
        if preferred and any(n.preferred and n.source == source for n in concept.names):
            raise DataError(f"cui {cui!r} already has a preferred name for source {source!r}")
        concept.names.append(ConceptName(surface=surface, cui=cui, source=source, preferred=preferred))
        self._name_triples.add(triple)
        self.name_index.setdefault(normalize(surface), set()).add(cui)
        return True

    def add_hierarchy_edge(self, child_cui: str, parent_cui: str) -> None:
        if child_cui == parent_cui:
            raise DataError(f"self-loop on {child_cui!r}")
        for cui in (child_cui, parent_cui):
            if cui not in self.concepts:
                raise DataError(f"hierarchy edge references unknown cui {cui!r}")
        self.hierarchy.add((child_cui, parent_cui))
        self._parents.setdefault(child_cui, set()).add(parent_cui)

    def mark_retired(self, cui: str, retired: bool = True) -> None:
        if cui not in self.concepts:
            raise DataError(f"unknown cui {cui!r}")
        self.concepts[cui].retired = retired

    # -- access --------------------------------------------------------

    def parents_of(self, cui: str) -> frozenset[str]:
        return frozenset(self._parents.get(cui, ()))

    def iter_names(self, include_retired: bool = True) -> Iterator[ConceptName]:
        for cui in self.concepts:
            concept = self.concepts[cui]
            if concept.retired and not include_retired:
                continue
            yield from concept.names

    @property
    def n_concepts(self) -> int:
        return len(self.concepts)

    @property
    def n_names(self) -> int:
        return len(self._name_triples)

    def check_acyclic(self) -> None:
        """Raises when the hierarchy contains a directed cycle."""
        out_degree = {cui: len(parents) for cui, parents in self._parents.items()}
        children: dict[str, list[str]] = {}
        for child, parent in self.hierarchy:
            children.setdefault(parent, []).append(child)
        queue = deque(cui for cui in self.concepts if out_degree.get(cui, 0) == 0)
        seen = 0
        while queue:
            cui = queue.popleft()
            seen += 1
            for child in children.get(cui, ()):
                out_degree[child] -= 1
                if out_degree[child] == 0:
                    queue.append(child)
        if seen != len(self.concepts):
            remaining = sorted(cui for cui, deg in out_degree.items() if deg > 0)
            raise DataError(f"hierarchy contains a cycle involving {remaining[:5]}")


# ---------------------------------------------------------------------------
# Table loading


def _read_tsv_rows(path: Path, n_columns: int) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            columns = line.split("\t")
            if len(columns) != n_columns:
                raise LoadError(str(path), lineno, f"expected {n_columns} columns, got {len(columns)}")
            yield lineno, columns


def load_concept_table(path: str | Path, cui_pattern: str = CUI_PATTERN) -> KnowledgeBase:
    """Build a knowledge base from a CONC1 concept table."""
    path = Path(path)
    kb = KnowledgeBase(cui_pattern=cui_pattern)
    rows = _read_tsv_rows(path, 4)
    try:
        _, header = next(rows)
    except StopIteration:
        raise LoadError(str(path), 1, "missing header") from None
    if "\t".join(header) != CONCEPT_TABLE_HEADER:
        raise LoadError(str(path), 1, f"bad header; expected {CONCEPT_TABLE_HEADER!r}")
    for lineno, (cui, surface, source, preferred) in rows:
        if preferred not in ("0", "1"):
            raise LoadError(str(path), lineno, f"preferred must be 0 or 1, got {preferred!r}")
        try:
            kb.add_name(surface=surface, cui=cui, source=source, preferred=preferred == "1")
        except DataError as exc:
            raise LoadError(str(path), lineno, str(exc)) from exc
    if kb.duplicates_dropped:
        LOGGER.warning("%s: dropped %d duplicate name rows", path, kb.duplicates_dropped)
    return kb


def save_concept_table(kb: KnowledgeBase, path: str | Path) -> None:
    """Write CONC1 rows in canonical (cui, surface, source) order."""
    names = sorted(kb.iter_names(), key=lambda n: (n.cui, n.surface, n.source))
    lines = [CONCEPT_TABLE_HEADER]
    lines += [f"{n.cui}\t{n.surface}\t{n.source}\t{1 if n.preferred else 0}" for n in names]
    atomic_write_lines(path, lines)


def load_semantic_types(path: str | Path, kb: KnowledgeBase) -> KnowledgeBase:
    """Attach TUIs from a TYPE1 table; unknown CUIs are reported together."""
    path = Path(path)
    tui_re = re.compile(TUI_PATTERN)
    rows: list[tuple[str, str]] = []
    unknown: list[str] = []
    for lineno, (cui, tui) in _read_tsv_rows(path, 2):
        if not tui_re.fullmatch(tui):
            raise LoadError(str(path), lineno, f"malformed TUI {tui!r}")
        if cui not in kb.concepts:
            unknown.append(cui)
        rows.append((cui, tui))
    if unknown:
        raise DataError(f"semantic type rows reference unknown CUIs: {sorted(set(unknown))}")
    for cui, tui in rows:
        kb.concepts[cui].semantic_types.add(tui)
    return kb


def load_hierarchy(path: str | Path, kb: KnowledgeBase) -> KnowledgeBase:
    """Attach child→parent edges from a HIER1 table; cycles are rejected."""
    path = Path(path)
    for lineno, (child, parent) in _read_tsv_rows(path, 2):
        try:
            kb.add_hierarchy_edge(child, parent)
        except DataError as exc:
            raise LoadError(str(path), lineno, str(exc)) from exc
    kb.check_acyclic()
    return kb


def load_semantic_groups(path: str | Path, kb: KnowledgeBase) -> KnowledgeBase:
    """Populate the TUI→group map from a GRP1 table."""
    path = Path(path)
    tui_re = re.compile(TUI_PATTERN)
    for lineno, (tui, group) in _read_tsv_rows(path, 2):
        if not tui_re.fullmatch(tui):
            raise LoadError(str(path), lineno, f"malformed TUI {tui!r}")
        if not group.strip():
            raise LoadError(str(path), lineno, "empty group name")
        kb.group_map[tui] = group
    return kb


# ---------------------------------------------------------------------------
# Directory layout: one knowledge base as a directory of canonical tables


def save_kb_dir(kb: KnowledgeBase, directory: str | Path) -> list[str]:
    """Write a knowledge base as a directory of tables.

    concepts.tsv is always written; types.tsv, hierarchy.tsv, groups.tsv and
    retired.tsv appear only when they would be non-empty. All rows are sorted,
    so saving the same knowledge base twice produces identical files. Returns
    the names of the files written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = ["concepts.tsv"]
    save_concept_table(kb, directory / "concepts.tsv")
    type_rows = sorted((cui, tui) for cui, c in kb.concepts.items() for tui in c.semantic_types)
    if type_rows:
        atomic_write_lines(directory / "types.tsv", [f"{cui}\t{tui}" for cui, tui in type_rows])
        written.append("types.tsv")
    edges = sorted(kb.hierarchy)
    if edges:
        atomic_write_lines(directory / "hierarchy.tsv", [f"{c}\t{p}" for c, p in edges])
        written.append("hierarchy.tsv")
    groups = sorted(kb.group_map.items())
    if groups:
        atomic_write_lines(directory / "groups.tsv", [f"{tui}\t{g}" for tui, g in groups])
        written.append("groups.tsv")
    retired = sorted(cui for cui, c in kb.concepts.items() if c.retired)
    if retired:
        atomic_write_lines(directory / "retired.tsv", retired)
        written.append("retired.tsv")
    return written


def load_kb_dir(directory: str | Path, cui_pattern: str = CUI_PATTERN) -> KnowledgeBase:
    """Load the directory layout written by ``save_kb_dir``.

    Only concepts.tsv is required; the other tables are attached when
    present.
    """
    directory = Path(directory)
    concepts = directory / "concepts.tsv"
    if not concepts.is_file():
        raise DataError(f"{directory}: no concepts.tsv (not a knowledge-base directory?)")
    kb = load_concept_table(concepts, cui_pattern)
    if (directory / "types.tsv").is_file():
        load_semantic_types(directory / "types.tsv", kb)
    if (directory / "hierarchy.tsv").is_file():
        load_hierarchy(directory / "hierarchy.tsv", kb)
    if (directory / "groups.tsv").is_file():
        load_semantic_groups(directory / "groups.tsv", kb)
    retired = directory / "retired.tsv"
    if retired.is_file():
        for lineno, (cui,) in _read_tsv_rows(retired, 1):
            try:
                kb.mark_retired(cui)
            except DataError as exc:
                raise LoadError(str(retired), lineno, str(exc)) from exc
    return kb


def read_lexicon(path: str | Path) -> list[LexiconEntry]:
    """Parse a LEX1 JSON-lines lexicon."""
    path = Path(path)
    entries: list[LexiconEntry] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                entries.append(
                    LexiconEntry(headword=record["headword"], synonyms=tuple(record.get("synonyms", ())))
                )
            except (ValueError, KeyError, TypeError, DataError) as exc:
                raise LoadError(str(path), lineno, str(exc)) from exc
    return entries


# ---------------------------------------------------------------------------
# Lexicon merge


def merge_lexicon(
    kb: KnowledgeBase,
    entries: Sequence[LexiconEntry],
    stemmer: Callable[[str], str] | None = None,
) -> MergeReport:
    """Merge lexicon entries whose headword matches exactly one concept.

    An entry whose headword (normalized, stemmed when a stemmer is given)
    equals a name of exactly one CUI extends that CUI with the headword and
    every synonym, tagged with source "LEXICON". Headwords matching zero or
    two-plus CUIs are skipped and counted. Matching runs against a snapshot
    of the names present before the merge, so entry order cannot change the
    outcome. At full scale this rule extends 768 CUIs with 3,082 names.
    """
    table: dict[str, set[str]] = {}
    for name in kb.iter_names():
        table.setdefault(name_key(name.surface, stemmer), set()).add(name.cui)

    extended: set[str] = set()
    names_added = 0
    skipped_ambiguous = 0
    skipped_unmatched = 0
    for entry in entries:
        matches = table.get(name_key(entry.headword, stemmer), set())
        if len(matches) == 1:
            (cui,) = matches
            extended.add(cui)
            for surface in (entry.headword, *entry.synonyms):
                if kb.add_name(surface=surface, cui=cui, source=LEXICON_SOURCE):
                    names_added += 1
        elif not matches:
            skipped_unmatched += 1
        else:
            skipped_ambiguous += 1
    return MergeReport(
        cuis_extended=len(extended),
        names_added=names_added,
        skipped_ambiguous=skipped_ambiguous,
        skipped_unmatched=skipped_unmatched,
    )


# ---------------------------------------------------------------------------
# Stats and hierarchy queries


@dataclass(frozen=True)
class KBStats:
    """Per-source name/concept counts; totals are whole-KB counts, so the
    concept column does not sum to the total (a concept may have names in
    several sources and is counted once per source)."""

    per_source: dict[str, tuple[int, int]]
    total_names: int
    total_concepts: int

    def format_table(self) -> str:
        width = max([len("source"), len("TOTAL")] + [len(s) for s in self.per_source])
        lines = [f"{'source':<{width}}  {'names':>8}  {'concepts':>8}"]
        for source in sorted(self.per_source):
            names, concepts = self.per_source[source]
            lines.append(f"{source:<{width}}  {names:>8}  {concepts:>8}")
        lines.append(f"{'TOTAL':<{width}}  {self.total_names:>8}  {self.total_concepts:>8}")
        return "\n".join(lines)


def stats(kb: KnowledgeBase) -> KBStats:
    names_by_source: dict[str, int] = {}
    concepts_by_source: dict[str, set[str]] = {}
    for name in kb.iter_names():
        names_by_source[name.source] = names_by_source.get(name.source, 0) + 1
        concepts_by_source.setdefault(name.source, set()).add(name.cui)
    per_source = {
        source: (names_by_source[source], len(concepts_by_source[source]))
        for source in names_by_source
    }
    return KBStats(per_source=per_source, total_names=kb.n_names, total_concepts=kb.n_concepts)


def is_ancestor(kb: KnowledgeBase, ancestor_cui: str, descendant_cui: str) -> bool:
    """True iff a child→parent path leads from descendant to ancestor.

    The reflexive case is false by definition: a concept is not its own
    ancestor.
    """
    for cui in (ancestor_cui, descendant_cui):
        if cui not in kb.concepts:
            raise DataError(f"unknown cui {cui!r}")
    if ancestor_cui == descendant_cui:
        return False
    frontier = deque([descendant_cui])
    visited = {descendant_cui}
    while frontier:
        cui = frontier.popleft()
        for parent in kb.parents_of(cui):
            if parent == ancestor_cui:
                return True
            if parent not in visited:
                visited.add(parent)
                frontier.append(parent)
    return False
