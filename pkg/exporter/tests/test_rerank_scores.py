"""Scoring rerank candidates with the transformer, end to end via files."""

from __future__ import annotations

import itertools
from pathlib import Path

from normkit.rerank import RerankExample, read_score_lines, write_rerank_dataset

from normkit_export.cli import main

N = 64
SURFACE_POSITION = 7  # the candidate whose name equals the mention surface


def build_fixture(tmp_path: Path) -> tuple[Path, Path]:
    """64 concepts; one candidate's name is exactly the mention surface.

    The dataset holds two examples over the same candidate list; the first
    mention is the single word "husten", which is also the name of the
    concept planted at SURFACE_POSITION.
    """
    words = ["fieber", "grippe", "schnupfen", "kopf", "ich", "habe", "seit", "tagen"]
    names = [f"{a} {b}" for a, b in itertools.product(words, words)][: N - 1]
    names.insert(SURFACE_POSITION, "husten")
    cuis = [f"C{i + 1:07d}" for i in range(N)]

    concepts = tmp_path / "concepts.tsv"
    rows = ["cui\tsurface\tsource\tpreferred"]
    rows += [f"{cui}\t{name}\tSRC\t1" for cui, name in zip(cuis, names)]
    concepts.write_text("".join(f"{r}\n" for r in rows), encoding="utf-8")

    examples = [
        RerankExample(
            sentence_tokens=("husten",),
            mention_token_span=(0, 1),
            gold_cui=cuis[SURFACE_POSITION],
            candidate_cuis=tuple(cuis),
        ),
        RerankExample(
            sentence_tokens=("fieber", "und", "grippe", "seit", "tagen"),
            mention_token_span=(0, 1),
            gold_cui=cuis[0],
            candidate_cuis=tuple(cuis),
        ),
    ]
    data = tmp_path / "data.jsonl"
    write_rerank_dataset(examples, data)
    return data, concepts


def run_scores(model_dir, data, concepts, out) -> int:
    return main(
        ["rerank-scores", "--model", model_dir, "--data", str(data),
         "--concepts", str(concepts), "--batch-size", "16", "--out", str(out)]
    )


class TestScoring:
    def test_one_line_of_64_scores_per_example(self, model_dir, tmp_path):
        data, concepts = build_fixture(tmp_path)
        out = tmp_path / "scores.jsonl"
        assert run_scores(model_dir, data, concepts, out) == 0
        scores = read_score_lines(out)
        assert sorted(scores) == [0, 1]
        assert all(len(v) == N for v in scores.values())

    def test_surface_equal_candidate_beats_unrelated_ones(self, model_dir, tmp_path):
        data, concepts = build_fixture(tmp_path)
        out = tmp_path / "scores.jsonl"
        assert run_scores(model_dir, data, concepts, out) == 0
        row = read_score_lines(out)[0]
        planted = row[SURFACE_POSITION]
        assert planted > 0.99
        assert all(planted > s for i, s in enumerate(row) if i != SURFACE_POSITION)

    def test_reruns_are_byte_identical(self, model_dir, tmp_path):
        data, concepts = build_fixture(tmp_path)
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run_scores(model_dir, data, concepts, first) == 0
        assert run_scores(model_dir, data, concepts, second) == 0
        assert first.read_bytes() == second.read_bytes()


class TestEdges:
    def test_empty_dataset_writes_empty_scores_and_exits_0(self, model_dir, tmp_path):
        data = tmp_path / "empty.jsonl"
        data.write_text("", encoding="utf-8")
        concepts = tmp_path / "concepts.tsv"
        concepts.write_text("cui\tsurface\tsource\tpreferred\n", encoding="utf-8")
        out = tmp_path / "scores.jsonl"
        assert run_scores(model_dir, data, concepts, out) == 0
        assert out.read_text(encoding="utf-8") == ""
        assert read_score_lines(out) == {}

    def test_missing_checkpoint_exits_2(self, tmp_path, capsys):
        data, concepts = build_fixture(tmp_path)
        code = run_scores(str(tmp_path / "no-model"), data, concepts, tmp_path / "s.jsonl")
        assert code == 2
        assert "cannot load model" in capsys.readouterr().err

    def test_candidate_without_concept_entry_exits_2(self, model_dir, tmp_path, capsys):
        data, concepts = build_fixture(tmp_path)
        lines = concepts.read_text(encoding="utf-8").splitlines()
        concepts.write_text("".join(f"{line}\n" for line in lines[:-1]), encoding="utf-8")
        code = run_scores(model_dir, data, concepts, tmp_path / "s.jsonl")
        assert code == 2
        assert "no concept-table entry" in capsys.readouterr().err

    def test_short_candidate_list_exits_2(self, model_dir, tmp_path, capsys):
        data, concepts = build_fixture(tmp_path)
        bad = tmp_path / "bad.jsonl"
        bad.write_text(
            '{"sentence":["husten"],"mention_start_token":0,"mention_end_token":1,'
            '"gold_cui":"C0000001","candidates":["C0000001"]}\n',
            encoding="utf-8",
        )
        code = run_scores(model_dir, bad, concepts, tmp_path / "s.jsonl")
        assert code == 2
        assert "expected 64 candidates" in capsys.readouterr().err
