"""A tiny randomly initialized BERT saved locally, so tests run offline.

The model identifier is a configuration value throughout the exporter, and
a local path is a valid identifier, which is exactly what these tests use.
"""

from __future__ import annotations

import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

WORDS = [
    "husten", "fieber", "grippe", "schnupfen", "kopf", "##schmerz",
    "ich", "habe", "seit", "tagen", "und", "stark", "##e", "qq", "##qq",
]

HIDDEN_SIZE = 16


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    vocab = {t: i for i, t in enumerate(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS)}
    backend = Tokenizer(models.WordPiece(vocab, unk_token="[UNK]"))
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=192,
    )
    model = BertModel(config)
    path = tmp_path_factory.mktemp("tinybert")
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return str(path)
