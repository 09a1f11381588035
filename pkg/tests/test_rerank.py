"""Rerank dataset builder, reordering semantics, baseline scorer, file io."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normkit.candidates import Candidate
from normkit.embedlink import BuiltinEmbedder, ExtractionConfig
from normkit.exceptions import DataError, LoadError, MissingGoldError
from normkit.kb import KnowledgeBase
from normkit.metrics import accuracy_at
from normkit.rerank import (
    RerankExample,
    baseline_context_scorer,
    build_rerank_dataset,
    display_name,
    read_rerank_dataset,
    read_score_lines,
    rerank,
    rerank_from_scores,
    write_rerank_dataset,
    write_score_lines,
)
from normkit.textprep import Mention, Post


def big_kb(n=70) -> KnowledgeBase:
    kb = KnowledgeBase()
    for i in range(1, n + 1):
        kb.add_name(f"Konzept {i}", f"C{i:07d}", "SRC", preferred=True)
    return kb


def small_corpus(n_mentions=10, words_per_sentence=6):
    posts = []
    for i in range(n_mentions):
        filler = " ".join(["Wort"] * (words_per_sentence - 1))
        text = f"Konzept {filler}."
        posts.append(
            Post(
                id=f"p{i}",
                text=text,
                mentions=(
                    Mention(id=f"m{i}", start=0, end=7, kind="lay", gold_cui=f"C{i + 1:07d}"),
                ),
            )
        )
    return posts


def make_candidates(*cuis):
    return [
        Candidate(cui=cui, matched_name=f"name {cui}", score=-float(i), rank=i + 1)
        for i, cui in enumerate(cuis)
    ]


class TestRerankExample:
    def test_valid(self):
        ex = RerankExample(("a", "b", "c"), (1, 2), "C0000001", ("C0000001", "C0000002"))
        assert ex.mention_tokens == ("b",)

    def test_gold_must_be_candidate(self):
        with pytest.raises(DataError, match="missing from candidates"):
            RerankExample(("a",), (0, 1), "C0000009", ("C0000001", "C0000002"))

    def test_duplicate_candidates_rejected(self):
        with pytest.raises(DataError, match="distinct"):
            RerankExample(("a",), (0, 1), "C0000001", ("C0000001", "C0000001"))

    def test_span_bounds(self):
        with pytest.raises(DataError, match="span"):
            RerankExample(("a", "b"), (1, 3), "C0000001", ("C0000001",))


class TestBuildDataset:
    def test_sixty_four_distinct_with_gold(self):
        train, val, dropped = build_rerank_dataset(small_corpus(), big_kb(), seed=3)
        examples = train + val
        assert dropped == 0
        assert len(examples) == 10
        for ex in examples:
            assert len(ex.candidate_cuis) == 64
            assert len(set(ex.candidate_cuis)) == 64
            assert ex.gold_cui in ex.candidate_cuis

    def test_split_sizes(self):
        train, val, _ = build_rerank_dataset(small_corpus(), big_kb(), seed=3)
        assert len(train) == 8
        assert len(val) == 2

    def test_kb_of_exactly_64_forces_full_candidate_set(self):
        kb = big_kb(64)
        train, val, _ = build_rerank_dataset(small_corpus(), kb, seed=0)
        all_cuis = set(kb.concepts)
        for ex in train + val:
            assert set(ex.candidate_cuis) == all_cuis

    def test_fixed_seed_reproduces_split(self):
        a = build_rerank_dataset(small_corpus(), big_kb(), seed=11)
        b = build_rerank_dataset(small_corpus(), big_kb(), seed=11)
        assert a == b

    def test_seed_changes_sampling(self):
        a, _, _ = build_rerank_dataset(small_corpus(), big_kb(), seed=1)
        b, _, _ = build_rerank_dataset(small_corpus(), big_kb(), seed=2)
        assert [ex.candidate_cuis for ex in a] != [ex.candidate_cuis for ex in b]

    def test_overlength_sentence_dropped_and_counted(self):
        posts = small_corpus(3)
        long_text = "Konzept " + " ".join(["Wort"] * 150) + "."
        posts.append(
            Post(
                id="plong",
                text=long_text,
                mentions=(
                    Mention(id="mlong", start=0, end=7, kind="lay", gold_cui="C0000005"),
                ),
            )
        )
        train, val, dropped = build_rerank_dataset(posts, big_kb(), seed=0)
        assert dropped == 1
        assert len(train) + len(val) == 3
        assert all("mlong" not in "".join(ex.sentence_tokens) for ex in train + val)

    def test_sentence_within_budget_kept(self):
        posts = small_corpus(1, words_per_sentence=100)
        train, val, dropped = build_rerank_dataset(posts, big_kb(), max_tokens=150, seed=0)
        assert dropped == 0
        assert len(train) + len(val) == 1

    def test_kb_too_small(self):
        with pytest.raises(DataError, match="cannot sample"):
            build_rerank_dataset(small_corpus(2), big_kb(10), seed=0)

    def test_gold_missing_from_kb(self):
        posts = small_corpus(1)
        kb = big_kb()
        del kb.concepts["C0000001"]
        with pytest.raises(DataError, match="not in kb"):
            build_rerank_dataset(posts, kb, seed=0)

    def test_mention_without_gold(self):
        posts = [
            Post(
                id="p",
                text="Konzept hier.",
                mentions=(Mention(id="m", start=0, end=7, kind="lay", gold_cui=None),),
            )
        ]
        with pytest.raises(MissingGoldError):
            build_rerank_dataset(posts, big_kb(), seed=0)

    def test_retired_concepts_not_sampled(self):
        kb = big_kb(80)
        for i in range(65, 81):
            kb.mark_retired(f"C{i:07d}")
        train, val, _ = build_rerank_dataset(small_corpus(), kb, seed=5)
        retired = {f"C{i:07d}" for i in range(65, 81)}
        for ex in train + val:
            assert not retired & set(ex.candidate_cuis)


class TestRerankOperation:
    def test_negated_rank_scorer_is_identity(self):
        candidates = make_candidates("C0000001", "C0000002", "C0000003")
        calls = iter([-1.0, -2.0, -3.0])
        got = rerank(candidates, ("t",), (0, 1), lambda *_: next(calls))
        assert [c.cui for c in got] == [c.cui for c in candidates]
        assert [c.rank for c in got] == [1, 2, 3]
        assert [c.score for c in got] == [-1.0, -2.0, -3.0]

    def test_positive_rank_scorer_reverses(self):
        candidates = make_candidates("C0000001", "C0000002", "C0000003")
        calls = iter([1.0, 2.0, 3.0])
        got = rerank(candidates, ("t",), (0, 1), lambda *_: next(calls))
        assert [c.cui for c in got] == ["C0000003", "C0000002", "C0000001"]

    def test_explicit_table_matches_manual_sort(self):
        candidates = make_candidates("C0000001", "C0000002", "C0000003", "C0000004", "C0000005")
        table = {"name C0000001": 0.2, "name C0000002": 0.9, "name C0000003": 0.5,
                 "name C0000004": 0.9, "name C0000005": 0.1}
        got = rerank(candidates, ("t",), (0, 1), lambda _s, _m, name: table[name])
        assert [c.cui for c in got] == [
            "C0000002",  # 0.9, earlier position wins the tie
            "C0000004",  # 0.9
            "C0000003",  # 0.5
            "C0000001",  # 0.2
            "C0000005",  # 0.1
        ]

    def test_constant_scorer_preserves_order(self):
        candidates = make_candidates(*[f"C{i:07d}" for i in range(1, 11)])
        got = rerank(candidates, ("t",), (0, 1), lambda *_: 0.5)
        assert [c.cui for c in got] == [c.cui for c in candidates]

    def test_failed_candidate_keeps_position_and_score(self):
        candidates = make_candidates("C0000001", "C0000002", "C0000003")

        def scorer(_tokens, _span, name):
            if name == "name C0000002":
                raise RuntimeError("backend down")
            return {"name C0000001": 0.1, "name C0000003": 0.9}[name]

        got = rerank(candidates, ("t",), (0, 1), scorer)
        assert [c.cui for c in got] == ["C0000003", "C0000002", "C0000001"]
        failed = got[1]
        assert failed.score == candidates[1].score
        assert failed.note == "scorer-error: backend down"
        assert got[0].note is None
        assert [c.rank for c in got] == [1, 2, 3]

    def test_empty_candidates_rejected(self):
        with pytest.raises(DataError, match="no candidates"):
            rerank([], ("t",), (0, 1), lambda *_: 0.0)

    @given(st.integers(min_value=0, max_value=999))
    @settings(max_examples=40)
    def test_output_is_permutation(self, seed):
        import random as stdlib_random

        rng = stdlib_random.Random(seed)
        n = rng.randint(1, 12)
        candidates = make_candidates(*[f"C{i:07d}" for i in range(1, n + 1)])
        got = rerank(candidates, ("t",), (0, 1), lambda *_: rng.random())
        assert sorted(c.cui for c in got) == sorted(c.cui for c in candidates)
        assert [c.rank for c in got] == list(range(1, n + 1))
        scores = [c.score for c in got]
        assert scores == sorted(scores, reverse=True)

    def test_accuracy_at_64_invariant(self):
        import random as stdlib_random

        rng = stdlib_random.Random(7)
        gold, before, after = {}, {}, {}
        for i in range(20):
            cuis = [f"C{j:07d}" for j in rng.sample(range(1, 200), 64)]
            gold_cui = rng.choice(cuis) if rng.random() < 0.7 else "C0009999"
            gold[f"m{i}"] = gold_cui
            candidates = make_candidates(*cuis)
            before[f"m{i}"] = candidates
            after[f"m{i}"] = rerank(candidates, ("t",), (0, 1), lambda *_: rng.random())
        assert accuracy_at(after, gold, 64) == accuracy_at(before, gold, 64)


class TestBaselineScorer:
    def test_gold_with_identical_tokens_ranked_first(self):
        kb = KnowledgeBase()
        kb.add_name("starker Husten", "C0000001", "SRC", preferred=True)
        kb.add_name("Migräne", "C0000002", "SRC", preferred=True)
        kb.add_name("Nierenstein", "C0000003", "SRC", preferred=True)
        scorer = baseline_context_scorer(BuiltinEmbedder(), ExtractionConfig.NOSPEC)
        candidates = [
            Candidate(cui="C0000002", matched_name="Migräne", score=0.0, rank=1),
            Candidate(cui="C0000001", matched_name="starker Husten", score=0.0, rank=2),
            Candidate(cui="C0000003", matched_name="Nierenstein", score=0.0, rank=3),
        ]
        got = rerank(candidates, ("starker", "Husten"), (0, 2), scorer)
        assert got[0].cui == "C0000001"
        assert got[0].score == pytest.approx(1.0)

    def test_deterministic(self):
        scorer = baseline_context_scorer(BuiltinEmbedder(), ExtractionConfig.NOSPEC)
        a = scorer(("Husten", "seit", "Tagen"), (0, 1), "Hustenreiz")
        b = scorer(("Husten", "seit", "Tagen"), (0, 1), "Hustenreiz")
        assert a == b


class TestDatasetFiles:
    def test_round_trip(self, tmp_path):
        train, val, _ = build_rerank_dataset(small_corpus(), big_kb(), seed=4)
        path = tmp_path / "train.rrk"
        write_rerank_dataset(train, path)
        assert read_rerank_dataset(path) == train

    def test_write_rejects_wrong_candidate_count(self, tmp_path):
        ex = RerankExample(("a",), (0, 1), "C0000001", ("C0000001", "C0000002"))
        with pytest.raises(DataError, match="exactly 64"):
            write_rerank_dataset([ex], tmp_path / "x.rrk")

    def test_read_error_carries_line_number(self, tmp_path):
        train, _, _ = build_rerank_dataset(small_corpus(2), big_kb(), seed=4)
        path = tmp_path / "bad.rrk"
        write_rerank_dataset(train, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines.append('{"sentence": ["a"]}')
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(LoadError) as err:
            read_rerank_dataset(path)
        assert err.value.line == len(lines)

    def test_scores_round_trip(self, tmp_path):
        scores = {0: [float(i) for i in range(64)], 2: [0.5] * 64}
        path = tmp_path / "scores.jsonl"
        write_score_lines(scores, path)
        assert read_score_lines(path) == scores

    def test_scores_wrong_count_rejected(self, tmp_path):
        with pytest.raises(DataError, match="expected 64 scores"):
            write_score_lines({0: [1.0, 2.0]}, tmp_path / "s.jsonl")

    def test_scores_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "s.jsonl"
        line = '{"example_id": 0, "scores": [' + ",".join(["0.0"] * 64) + "]}"
        path.write_text(line + "\n" + line + "\n", encoding="utf-8")
        with pytest.raises(LoadError, match="duplicate"):
            read_score_lines(path)


class TestRerankFromScores:
    def test_orders_by_score_with_stable_ties(self):
        ex = RerankExample(
            ("tok",), (0, 1), "C0000002", ("C0000001", "C0000002", "C0000003")
        )
        got = rerank_from_scores(ex, [0.5, 0.9, 0.5])
        assert [c.cui for c in got] == ["C0000002", "C0000001", "C0000003"]
        assert [c.rank for c in got] == [1, 2, 3]
        assert got[0].matched_name == "C0000002"  # no kb: cui stands in

    def test_resolves_names_from_kb(self):
        kb = KnowledgeBase()
        kb.add_name("Husten", "C0000001", "SRC", preferred=True)
        kb.add_name("Hustenreiz", "C0000001", "SRC")
        kb.add_name("Migräne", "C0000002", "SRC", preferred=True)
        ex = RerankExample(("tok",), (0, 1), "C0000001", ("C0000001", "C0000002"))
        got = rerank_from_scores(ex, [1.0, 0.0], kb=kb)
        assert got[0].matched_name == "Husten"
        assert display_name(kb, "C0000001") == "Husten"

    def test_score_count_mismatch(self):
        ex = RerankExample(("tok",), (0, 1), "C0000001", ("C0000001", "C0000002"))
        with pytest.raises(DataError, match="scores for"):
            rerank_from_scores(ex, [1.0])
