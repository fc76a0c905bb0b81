"""Shared fixtures: one small trained checkpoint reused across test modules."""

from __future__ import annotations

import numpy as np
import pytest

from vegagen.corpus import generate_pairs
from vegagen.datasets import rdataset
from vegagen.neural.params import ModelHyper, init_params
from vegagen.tokenizer import build_vocab
from vegagen.trainer import Checkpoint, TrainConfig, default_conventions, save_checkpoint, train

TINY_SPEC = {
    "mark": "point",
    "encoding": {
        "x": {"field": "height", "type": "quantitative"},
        "y": {"field": "weight", "type": "quantitative"},
    },
}


def train_tiny_model():
    """Overfit a small model on one chart template for one dataset."""
    women = rdataset("women")
    corpus = [(women, TINY_SPEC)]
    pairs = generate_pairs(corpus, samples_per_example=15, max_len=160,
                           rng=np.random.default_rng(7))
    vocabs = (build_vocab([p.source for p in pairs]),
              build_vocab([p.target for p in pairs]))
    config = TrainConfig(steps=2200, learning_rate=2e-3, batch_size=8,
                         dropout=0.0, max_len=160, seed=7, d_cell=48,
                         eval_every=1000)
    params, _ = train(pairs, vocabs, config)
    return params, vocabs


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """(path, Checkpoint) for a model that reliably emits valid specs."""
    params, vocabs = train_tiny_model()
    path = tmp_path_factory.mktemp("ckpt") / "tiny.bin"
    meta = {"model_tag": "tiny", "seed": 7}
    save_checkpoint(params, vocabs, default_conventions(), path, meta=meta)
    model = Checkpoint(params, vocabs[0], vocabs[1], default_conventions(), meta)
    return path, model


@pytest.fixture(scope="session")
def random_checkpoint(tmp_path_factory):
    """(path, Checkpoint) with untrained weights; decodes are garbage."""
    src_vocab = build_vocab(['{"str0":"a","num0":1.5}'])
    tgt_vocab = build_vocab(['{"mark":"point","encoding":{"x":2}}'])
    hyper = ModelHyper(src_vocab=src_vocab.size, tgt_vocab=tgt_vocab.size,
                       d_cell=12, max_len=80)
    params = init_params(hyper, seed=3)
    path = tmp_path_factory.mktemp("ckpt") / "random.bin"
    save_checkpoint(params, (src_vocab, tgt_vocab), default_conventions(), path)
    model = Checkpoint(params, src_vocab, tgt_vocab, default_conventions(), {})
    return path, model
