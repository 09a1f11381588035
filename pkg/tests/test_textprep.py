"""Text preparation: normalization, stemming, sentences, contexts, grouping."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normkit.exceptions import DataError, LoadError
from normkit.textprep import (
    ContextualMention,
    GermanSuffixStemmer,
    Mention,
    Post,
    context_window,
    normalize,
    read_corpus,
    sentence_context,
    split_sentences,
    stem,
    unique_mentions,
    word_tokenize,
    write_corpus,
)

german_words = st.text(alphabet="abcdefghijklmnopqrstuvwxyzäöüß", min_size=0, max_size=16)


class TestNormalize:
    def test_collapses_whitespace(self):
        assert normalize("Nieren  Stein") == "nieren stein"
        assert normalize("  Nieren\tStein \n") == "nieren stein"

    def test_lowercases_umlauts(self):
        assert normalize("ÄRZTIN") == "ärztin"

    def test_eszett_survives(self):
        assert normalize("groß") == "groß"

    def test_nfc_unifies_composed_and_decomposed(self):
        composed = "ärztin"
        decomposed = "ärztin"
        assert normalize(composed) == normalize(decomposed)

    @given(st.text(max_size=50))
    @settings(max_examples=300)
    def test_idempotent(self, text):
        once = normalize(text)
        assert normalize(once) == once


class TestStem:
    def test_medical_suffix(self):
        assert stem("Pyelonitis") == "pyelon"

    def test_short_word_untouched(self):
        assert stem("stein") == "stein"

    def test_singular_and_plural_meet(self):
        assert stem("entzündungen") == stem("entzündung") == "entzünd"

    def test_genitive(self):
        assert stem("Hauses") == "haus"

    def test_multiword_stems_per_word(self):
        assert stem("starke Entzündungen") == "stark entzünd"

    def test_custom_table(self):
        tiny = GermanSuffixStemmer(suffixes=("xx",), min_stem_length=2)
        assert tiny("helloxx") == "hello"
        assert tiny("axx") == "axx"

    @given(german_words)
    @settings(max_examples=300)
    def test_idempotent(self, word):
        once = stem(word)
        assert stem(once) == once

    @given(german_words)
    @settings(max_examples=300)
    def test_stem_is_a_prefix_of_the_normalized_word(self, word):
        assert normalize(word).startswith(stem(word))


class TestSplitSentences:
    def test_two_sentences(self):
        text = "Ich habe Schmerzen. Der Arzt sagt nichts."
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == [
            "Ich habe Schmerzen.",
            "Der Arzt sagt nichts.",
        ]

    def test_abbreviation_does_not_split(self):
        text = "Ich nehme z.B. Ibuprofen. Es hilft."
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == ["Ich nehme z.B. Ibuprofen.", "Es hilft."]

    def test_terminal_run_stays_in_one_sentence(self):
        text = "Wirklich?! Ja."
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == ["Wirklich?!", "Ja."]

    def test_tail_without_terminator(self):
        text = "Erster Satz. Und dann"
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == ["Erster Satz.", "Und dann"]

    def test_decimal_number_does_not_split(self):
        text = "Ich nehme 2.5 mg davon. Täglich."
        spans = split_sentences(text)
        assert [text[s:e] for s, e in spans] == ["Ich nehme 2.5 mg davon.", "Täglich."]

    def test_initial_does_not_split(self):
        text = "Dr. A. Müller hat es gesagt."
        spans = split_sentences(text)
        assert len(spans) == 1

    @given(
        st.lists(
            st.sampled_from(["Kopf tut weh", "z.B. hier", "Nieren schmerzen", "es geht"]),
            min_size=1,
            max_size=6,
        ),
        st.lists(st.sampled_from([". ", "! ", "? ", "?! ", ".\n"]), min_size=6, max_size=6),
    )
    @settings(max_examples=200)
    def test_spans_partition_the_text(self, chunks, seps):
        text = "".join(c + s for c, s in zip(chunks, seps))
        spans = split_sentences(text)
        # Given: spans are ascending and disjoint.
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert s1 < e1 <= s2 < e2
        # Then: everything outside a span is whitespace, nothing inside is lost.
        covered = set()
        for s, e in spans:
            assert text[s:e].strip()
            covered.update(range(s, e))
        for i, ch in enumerate(text):
            if i not in covered:
                assert ch.isspace()


def _post(text: str, start: int, end: int, kind: str = "lay", **kw) -> tuple[Post, Mention]:
    mention = Mention(id="m1", start=start, end=end, kind=kind, **kw)
    return Post(id="p1", text=text, mentions=(mention,)), mention


class TestContextWindow:
    def test_budget_split_even_mention(self):
        # 10 mention tokens leave 54: ceil(54/2)=27 left, floor(54/2)=27 right.
        words = " ".join(f"w{i}" for i in range(40))
        mention_text = " ".join(f"m{i}" for i in range(10))
        text = words + " " + mention_text + " " + " ".join(f"v{i}" for i in range(40))
        start = len(words) + 1
        post, mention = _post(text, start, start + len(mention_text))
        ctx = context_window(post, mention, total_tokens=64)
        assert (len(ctx.ctx_a), len(ctx.ctx_b)) == (27, 27)
        assert ctx.mention_token_span == (27, 37)

    def test_budget_split_odd_mention(self):
        # 9 mention tokens leave 55: ceil gives the left side 28, right 27.
        words = " ".join(f"w{i}" for i in range(40))
        mention_text = " ".join(f"m{i}" for i in range(9))
        text = words + " " + mention_text + " " + " ".join(f"v{i}" for i in range(40))
        start = len(words) + 1
        post, mention = _post(text, start, start + len(mention_text))
        ctx = context_window(post, mention, total_tokens=64)
        assert (len(ctx.ctx_a), len(ctx.ctx_b)) == (28, 27)

    def test_document_start_truncates_without_redistribution(self):
        text = "kopf tut " + " ".join(f"v{i}" for i in range(80))
        post, mention = _post(text, 0, 4)
        ctx = context_window(post, mention, total_tokens=64)
        assert ctx.ctx_a == ()
        # The right side keeps its own budget, it does not absorb the left's.
        assert len(ctx.ctx_b) == (64 - 1) // 2

    def test_mention_over_budget_is_an_error(self):
        text = " ".join(f"m{i}" for i in range(10))
        post, mention = _post(text, 0, len(text))
        with pytest.raises(DataError):
            context_window(post, mention, total_tokens=8)

    def test_tokens_concatenate(self):
        text = "a b c kopf weh d e f"
        post, mention = _post(text, 6, 14)
        ctx = context_window(post, mention, total_tokens=6)
        assert ctx.tokens == list(ctx.ctx_a) + list(ctx.mention_tokens) + list(ctx.ctx_b)
        assert ctx.mention_tokens == ("kopf", "weh")


class TestSentenceContext:
    def test_only_the_containing_sentence(self):
        text = "Erster Satz hier. Mein Kopf tut weh. Letzter Satz."
        start = text.index("Kopf")
        post, mention = _post(text, start, start + 4)
        ctx = sentence_context(post, mention)
        assert ctx.tokens == ["Mein", "Kopf", "tut", "weh", "."]
        assert ctx.mention_token_span == (1, 2)

    def test_mention_across_boundary_merges_sentences(self):
        text = "Weh am Kopf. Und Hals auch."
        start = text.index("Kopf")
        end = text.index("Hals") + 4
        post, mention = _post(text, start, end)
        ctx = sentence_context(post, mention)
        assert "Weh" in ctx.ctx_a and "auch" in ctx.ctx_b

    def test_no_context_outside_the_sentence(self):
        text = "Alpha beta. Kopf weh. Gamma delta."
        start = text.index("Kopf")
        post, mention = _post(text, start, start + 8)
        ctx = sentence_context(post, mention)
        assert "Alpha" not in ctx.tokens and "Gamma" not in ctx.tokens


def _mention(mid, kind, synonyms=()):
    return Mention(id=mid, start=0, end=1, kind=kind, synonyms=tuple(synonyms))


class TestUniqueMentions:
    def test_lay_mentions_group_via_shared_synonym(self):
        pairs = [
            (_mention("a", "lay", ["Cephalgie"]), "Brummschädel"),
            (_mention("b", "lay", ["Cephalgie"]), "Schädelbrummen"),
        ]
        groups = unique_mentions(pairs)
        assert len(groups) == 1 and len(groups[0]) == 2

    def test_lay_surface_never_matches(self):
        # Identical surfaces, one lay and one technical: lay offers only
        # synonyms, so they stay apart.
        pairs = [
            (_mention("a", "lay", []), "Migräne"),
            (_mention("b", "technical", []), "Migräne"),
        ]
        assert len(unique_mentions(pairs)) == 2

    def test_technical_surfaces_group(self):
        pairs = [
            (_mention("a", "technical", []), "Migräne"),
            (_mention("b", "technical", []), "MIGRÄNE"),
        ]
        assert len(unique_mentions(pairs)) == 1

    def test_technical_surface_matches_other_synonym(self):
        pairs = [
            (_mention("a", "technical", []), "Cephalgie"),
            (_mention("b", "technical", ["Cephalgie"]), "Kopfschmerz"),
        ]
        assert len(unique_mentions(pairs)) == 1

    def test_lay_mention_without_synonyms_is_singleton(self):
        pairs = [
            (_mention("a", "lay", []), "Aua"),
            (_mention("b", "lay", []), "Aua"),
        ]
        assert len(unique_mentions(pairs)) == 2

    def test_stemmer_widens_groups(self):
        pairs = [
            (_mention("a", "technical", []), "Entzündung"),
            (_mention("b", "technical", []), "Entzündungen"),
        ]
        assert len(unique_mentions(pairs)) == 2
        assert len(unique_mentions(pairs, stemmer=stem)) == 1

    def test_transitive_closure_chains(self):
        pairs = [
            (_mention("a", "lay", ["x"]), "s1"),
            (_mention("b", "lay", ["x", "y"]), "s2"),
            (_mention("c", "lay", ["y"]), "s3"),
        ]
        groups = unique_mentions(pairs)
        assert len(groups) == 1 and len(groups[0]) == 3

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["lay", "technical"]),
                st.sampled_from(["kopf", "hals", "bein", "arm"]),
                st.lists(st.sampled_from(["s1", "s2", "s3"]), max_size=2),
            ),
            max_size=12,
        )
    )
    @settings(max_examples=200)
    def test_matches_brute_force_closure(self, rows):
        pairs = [
            (_mention(f"m{i}", kind, syns), surface)
            for i, (kind, surface, syns) in enumerate(rows)
        ]
        groups = unique_mentions(pairs)

        # Oracle: direct pairwise rule plus Floyd-Warshall style closure.
        n = len(pairs)

        def keys(i):
            mention, surface = pairs[i]
            syn = {normalize(s) for s in mention.synonyms}
            if mention.kind == "technical":
                return {normalize(surface)}, {normalize(surface)} | syn
            return syn, syn

        adj = [[False] * n for _ in range(n)]
        for i in range(n):
            adj[i][i] = True
            for j in range(n):
                pi, mi = keys(i)
                pj, mj = keys(j)
                if pi & mj or pj & mi:
                    adj[i][j] = True
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    if adj[i][k] and adj[k][j]:
                        adj[i][j] = True

        expected = set()
        for i in range(n):
            expected.add(frozenset(j for j in range(n) if adj[i][j]))
        got = set()
        index = {pairs[i][0].id: i for i in range(n)}
        for group in groups:
            got.add(frozenset(index[m.id] for m in group))
        assert got == (expected if n else set())


class TestCorpusFormat:
    def test_round_trip(self, tmp_path):
        posts = [
            Post(
                id="p1",
                text="Mein Kopf tut weh.",
                mentions=(
                    Mention(id="m1", start=5, end=9, kind="lay", gold_cui="C0018681", synonyms=("Cephalgie",)),
                ),
            ),
            Post(id="p2", text="Nichts."),
        ]
        path = tmp_path / "corpus.jsonl"
        write_corpus(posts, path)
        assert read_corpus(path) == posts

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "p1", "text": "ok", "mentions": []}\n{broken\n', encoding="utf-8")
        with pytest.raises(LoadError) as err:
            read_corpus(path)
        assert err.value.line == 2

    def test_span_past_text_end_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            '{"id": "p1", "text": "abc", "mentions": [{"id": "m1", "start": 1, "end": 9, "kind": "lay"}]}\n',
            encoding="utf-8",
        )
        with pytest.raises(LoadError):
            read_corpus(path)

    def test_duplicate_mention_ids_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        line = '{"id": "%s", "text": "abc", "mentions": [{"id": "m1", "start": 0, "end": 1, "kind": "lay"}]}'
        path.write_text(line % "p1" + "\n" + line % "p2" + "\n", encoding="utf-8")
        with pytest.raises(LoadError):
            read_corpus(path)

    def test_bad_kind_rejected(self):
        with pytest.raises(DataError):
            Mention(id="m1", start=0, end=1, kind="slang")

    def test_offsets_are_code_points(self):
        post = Post(id="p1", text="Ärztin sagt ja")
        mention = Mention(id="m1", start=0, end=6, kind="technical")
        assert Post(id="p1", text=post.text, mentions=(mention,)).surface(mention) == "Ärztin"


class TestWordTokenize:
    def test_words_and_punctuation(self):
        assert word_tokenize("Kopf, und weh!") == ["Kopf", ",", "und", "weh", "!"]

    def test_empty(self):
        assert word_tokenize("   ") == []
