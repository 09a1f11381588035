"""Transformer inference behind the export commands.

Texts go through the model's own tokenizer with right padding to a fixed
max_length and truncation on overflow, then one forward pass per batch in
inference mode. The last hidden state becomes the per-token matrix; mask
codes are derived from the tokenizer's special ids so downstream pooling
can tell CLS, SEP, and padding apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .formats import (
    MASK_CLS,
    MASK_PAD,
    MASK_REGULAR,
    MASK_SEP,
    ExportError,
    pool_rows,
    write_embeddings,
    write_token_records,
)

# conventional max_length per input kind; callers may pass anything positive
DEFAULT_MAX_LENGTH = {"mentions": 20, "names": 60, "windows": 64, "sentences": 150}


@dataclass(frozen=True)
class ExportJob:
    model: str
    texts: Sequence[str]
    ids: Sequence[str]
    max_length: int
    batch_size: int
    pooling: str

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.texts):
            raise ExportError(f"{len(self.ids)} ids for {len(self.texts)} texts")
        if not self.texts:
            raise ExportError("no texts to export")
        if self.max_length < 2:
            raise ExportError(f"max_length must be >= 2, got {self.max_length}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")
        for text in self.texts:
            if not text.strip():
                raise ExportError("blank input text")


@dataclass(frozen=True)
class ExportReport:
    n: int
    dim: int
    n_truncated: int
    files: tuple[str, ...]


class Encoder:
    """A loaded tokenizer/model pair in deterministic inference mode."""

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise ExportError(f"cannot load model {model_id!r}: {exc}") from exc
        self.tokenizer.padding_side = "right"
        self.model.eval()
        self._torch = torch

    @property
    def hidden_size(self) -> int:
        return int(self.model.config.hidden_size)

    def count_overflowing(self, texts: Sequence[str], max_length: int) -> int:
        encoded = self.tokenizer(list(texts), padding=False, truncation=False)
        return sum(1 for ids in encoded["input_ids"] if len(ids) > max_length)

    def _mask_codes(self, input_ids: np.ndarray, attention: np.ndarray) -> np.ndarray:
        codes = np.full(input_ids.shape, MASK_REGULAR, dtype=np.uint8)
        codes[attention == 0] = MASK_PAD
        tok = self.tokenizer
        if tok.cls_token_id is not None:
            codes[(input_ids == tok.cls_token_id) & (attention == 1)] = MASK_CLS
        if tok.sep_token_id is not None:
            codes[(input_ids == tok.sep_token_id) & (attention == 1)] = MASK_SEP
        return codes

    def encode(
        self, texts: Sequence[str], max_length: int, batch_size: int
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        """One (token matrix, mask codes) pair per text, in input order."""
        records: list[tuple[np.ndarray, np.ndarray]] = []
        for start in range(0, len(texts), batch_size):
            batch = list(texts[start : start + batch_size])
            encoded = self.tokenizer(
                batch,
                padding="max_length",
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
            )
            with self._torch.inference_mode():
                output = self.model(
                    input_ids=encoded["input_ids"],
                    attention_mask=encoded["attention_mask"],
                )
            hidden = output.last_hidden_state.to(self._torch.float32).cpu().numpy()
            ids = encoded["input_ids"].cpu().numpy()
            attention = encoded["attention_mask"].cpu().numpy()
            codes = self._mask_codes(ids, attention)
            for row in range(hidden.shape[0]):
                records.append((hidden[row], codes[row]))
        return records


def run_export(job: ExportJob, out: str, encoder: Encoder | None = None) -> ExportReport:
    encoder = encoder or Encoder(job.model)
    n_truncated = encoder.count_overflowing(job.texts, job.max_length)
    records = encoder.encode(job.texts, job.max_length, job.batch_size)
    if job.pooling == "tokens":
        write_token_records(records, job.ids, out)
    else:
        rows = np.stack([pool_rows(tokens, mask, job.pooling) for tokens, mask in records])
        write_embeddings(rows, job.ids, out)
    return ExportReport(
        n=len(records),
        dim=encoder.hidden_size,
        n_truncated=n_truncated,
        files=(out, out + ".ids"),
    )


def score_rerank_examples(
    encoder: Encoder,
    examples: Sequence[tuple[list[str], list[str]]],
    names: dict[str, str],
    max_sentence_length: int,
    max_name_length: int,
    batch_size: int,
) -> list[list[float]]:
    """Cosine of mean-pooled sentence vs mean-pooled candidate name.

    Mean pooling covers every non-padding token. Every distinct candidate
    name is embedded once, however many examples share it.
    """
    from .formats import resolve_display_names

    per_example_names = [
        resolve_display_names(candidates, names, f"example {i}")
        for i, (_tokens, candidates) in enumerate(examples)
    ]
    unique_names = sorted({name for row in per_example_names for name in row})
    name_vectors = _pooled(encoder, unique_names, max_name_length, batch_size)
    by_name = dict(zip(unique_names, name_vectors))

    sentences = [" ".join(tokens) for tokens, _candidates in examples]
    sentence_vectors = _pooled(encoder, sentences, max_sentence_length, batch_size)

    scores = []
    for vector, row in zip(sentence_vectors, per_example_names):
        candidate_matrix = np.stack([by_name[name] for name in row])
        scores.append(_cosine_against(vector, candidate_matrix))
    return scores


def _pooled(
    encoder: Encoder, texts: Sequence[str], max_length: int, batch_size: int
) -> list[np.ndarray]:
    records = encoder.encode(texts, max_length, batch_size)
    return [pool_rows(tokens, mask, "all").astype(np.float64) for tokens, mask in records]


def _cosine_against(vector: np.ndarray, matrix: np.ndarray) -> list[float]:
    vn = np.linalg.norm(vector)
    mn = np.linalg.norm(matrix, axis=1)
    if vn == 0.0 or np.any(mn == 0.0):
        raise ExportError("zero vector in cosine scoring")
    return [float(v) for v in (matrix @ vector) / (mn * vn)]
