"""Mini-batch training with Adam, plus checkpoint save/load.

Batches group pairs of similar target length to limit padding waste: pairs
are sorted by length once, cut into contiguous batches, and the batch order
is reshuffled every epoch. Padding never contributes to the loss. Training
is deterministic for a fixed config and seed.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import tokenizer
from .corpus import NUMERIC_PREFIX, STRING_PREFIX
from .neural import model
from .neural.params import ModelHyper, ModelParams, init_params

logger = logging.getLogger(__name__)

__all__ = [
    "Checkpoint",
    "CorruptCheckpoint",
    "HistoryPoint",
    "NoTrainableData",
    "TrainConfig",
    "TrainHistory",
    "load_checkpoint",
    "log_perplexity",
    "save_checkpoint",
    "train",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
GRAD_CLIP = 5.0

MAGIC = b"VGCKPT\x00\x01"
FORMAT_VERSION = 1


class NoTrainableData(ValueError):
    """Every supplied pair exceeds the configured maximum length."""


class CorruptCheckpoint(Exception):
    """Checkpoint file fails framing, version, or shape validation."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    learning_rate: float = 1e-4
    batch_size: int = 32
    dropout: float = 0.5
    max_len: int = 500
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    eval_every: int = 100
    d_cell: int = 512
    d_emb: int = 0  # 0 means d_cell
    d_attn: int = 0  # 0 means d_cell
    enc_layers: int = 2
    dec_layers: int = 2
    grad_clip: float = GRAD_CLIP
    dtype: str = "float32"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


class HistoryPoint(NamedTuple):
    step: int
    train_nll: float  # per-token NLL of the step's batch
    heldout_log_perplexity: float | None


@dataclass(frozen=True)
class TrainHistory:
    points: tuple[HistoryPoint, ...]

    def __post_init__(self):
        steps = [p.step for p in self.points]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("history steps must be strictly increasing")


def _encode_pairs(pairs, src_vocab, tgt_vocab, max_len):
    """Encode texts to id lists, dropping pairs that exceed max_len."""
    encoded = []
    skipped = 0
    for p in pairs:
        try:
            s = tokenizer.encode(p.source, src_vocab, max_len)
            t = tokenizer.encode(p.target, tgt_vocab, max_len)
        except tokenizer.TooLong:
            skipped += 1
            continue
        encoded.append((s, t))
    if skipped:
        logger.warning("skipped %d of %d pairs longer than max_len=%d",
                       skipped, len(pairs), max_len)
    return encoded


def log_perplexity(params: ModelParams, pairs, vocabs, max_len: int = 500,
                   batch_size: int = 32) -> float:
    """Mean over pairs of per-token NLL (total NLL / target token count)."""
    src_vocab, tgt_vocab = vocabs
    encoded = _encode_pairs(pairs, src_vocab, tgt_vocab, max_len)
    if not encoded:
        raise NoTrainableData("no pair fits within max_len")
    ratios = []
    for i in range(0, len(encoded), batch_size):
        chunk = encoded[i:i + batch_size]
        fw = model.forward_batch([s for s, _ in chunk], [t for _, t in chunk], params)
        ratios.extend(fw.pair_nll / fw.token_counts)
    return float(np.mean(ratios))


def _global_norm(grads) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.dot(g.reshape(-1), g.reshape(-1)))
    return math.sqrt(total)


class _Adam:
    def __init__(self, params: ModelParams, lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: ModelParams, grads):
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            params.tensors[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)


def train(pairs, vocabs, config: TrainConfig, eval_pairs=None,
          checkpoint_dir=None, log_path=None):
    """Run config.steps Adam updates over shuffled similar-length batches.

    vocabs is the (source, target) Vocabulary pair. Returns the final
    ModelParams and a TrainHistory with one point per eval_every steps.
    When eval_pairs is given, each point carries its log perplexity;
    otherwise that column is None.
    """
    src_vocab, tgt_vocab = vocabs
    if not pairs:
        raise NoTrainableData("no training pairs supplied")
    encoded = _encode_pairs(pairs, src_vocab, tgt_vocab, config.max_len)
    if not encoded:
        raise NoTrainableData("every pair exceeds max_len")

    hyper = ModelHyper(
        src_vocab=src_vocab.size, tgt_vocab=tgt_vocab.size,
        d_cell=config.d_cell, d_emb=config.d_emb, d_attn=config.d_attn,
        enc_layers=config.enc_layers, dec_layers=config.dec_layers,
        dropout=config.dropout, max_len=config.max_len, dtype=config.dtype,
    )
    params = init_params(hyper, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    adam = _Adam(params, config.learning_rate)

    # similar-length contiguous batches; the seeded shuffle decorrelates
    # corpus layout (stable sort keeps it as the length tie-break), and the
    # epoch schedule below reshuffles batch order
    perm = rng.permutation(len(encoded)).tolist()
    order = sorted(perm, key=lambda i: len(encoded[i][1]))
    batches = [order[i:i + config.batch_size]
               for i in range(0, len(order), config.batch_size)]

    conventions = default_conventions()
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    points = []
    try:
        schedule = []
        step = 0
        while step < config.steps:
            if not schedule:
                schedule = list(rng.permutation(len(batches)))
            batch = batches[schedule.pop()]
            step += 1
            srcs = [encoded[i][0] for i in batch]
            tgts = [encoded[i][1] for i in batch]
            total, count, grads = model.loss_and_gradients(
                srcs, tgts, params, train_mode=config.dropout > 0.0, rng=rng)
            if config.grad_clip > 0:
                norm = _global_norm(grads)
                if norm > config.grad_clip:
                    scale = config.grad_clip / norm
                    for g in grads.values():
                        g *= scale
            adam.step(params, grads)
            params.check_finite()

            if step % config.eval_every == 0 or step == config.steps:
                train_nll = total / count
                heldout = None
                if eval_pairs:
                    heldout = log_perplexity(params, eval_pairs, vocabs,
                                             config.max_len, config.batch_size)
                if not points or points[-1].step != step:
                    points.append(HistoryPoint(step, float(train_nll), heldout))
                if log_file:
                    log_file.write(json.dumps({
                        "step": step,
                        "train_nll": float(train_nll),
                        "heldout_log_perplexity": heldout,
                    }) + "\n")
                    log_file.flush()
            if checkpoint_dir and config.checkpoint_every > 0 and (
                    step % config.checkpoint_every == 0 or step == config.steps):
                path = Path(checkpoint_dir) / f"ckpt-{step:06d}.bin"
                save_checkpoint(params, vocabs, conventions, path,
                                meta={"step": step, "seed": config.seed})
    finally:
        if log_file:
            log_file.close()
    return params, TrainHistory(tuple(points))


# ---------------------------------------------------------------------------
# Checkpoint container: magic, little-endian framing, JSON manifest, raw
# tensor bytes. Layout documented in docs/FORMATS.md.


@dataclass
class Checkpoint:
    params: ModelParams
    src_vocab: tokenizer.Vocabulary
    tgt_vocab: tokenizer.Vocabulary
    conventions: dict
    meta: dict = field(default_factory=dict)


def default_conventions() -> dict:
    return {
        "string_prefix": STRING_PREFIX,
        "numeric_prefix": NUMERIC_PREFIX,
        "specials": list(tokenizer.SPECIAL_SYMBOLS),
    }


_DTYPE_TAGS = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(params: ModelParams, vocabs, conventions, path, meta=None):
    """Serialize params and both vocabularies; atomic write-then-rename."""
    src_vocab, tgt_vocab = vocabs
    hyper = params.hyper
    tensors = []
    offset = 0
    payload = []
    for name, arr in params.tensors.items():
        raw = np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[hyper.dtype]).tobytes()
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": hyper.dtype,
            "offset": offset,
            "nbytes": len(raw),
        })
        payload.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "hyper": hyper.to_dict(),
        "src_vocab": list(src_vocab.symbols),
        "tgt_vocab": list(tgt_vocab.symbols),
        "conventions": conventions or default_conventions(),
        "tensors": tensors,
        "meta": meta or {},
    }
    blob = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(len(blob).to_bytes(4, "little"))
            f.write(blob)
            for raw in payload:
                f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint back; raises CorruptCheckpoint on any framing,
    version, or shape inconsistency."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CorruptCheckpoint(f"cannot read {path}: {e}") from e
    if len(data) < len(MAGIC) + 4:
        raise CorruptCheckpoint("file shorter than header")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint("bad magic bytes")
    blob_len = int.from_bytes(data[len(MAGIC): len(MAGIC) + 4], "little")
    start = len(MAGIC) + 4
    if len(data) < start + blob_len:
        raise CorruptCheckpoint("truncated manifest")
    try:
        manifest = json.loads(data[start: start + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"manifest does not parse: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported format_version {manifest.get('format_version')}")

    try:
        hyper = ModelHyper.from_dict(manifest["hyper"])
        src_vocab = tokenizer.Vocabulary(tuple(manifest["src_vocab"]))
        tgt_vocab = tokenizer.Vocabulary(tuple(manifest["tgt_vocab"]))
        entries = manifest["tensors"]
    except (KeyError, TypeError) as e:
        raise CorruptCheckpoint(f"manifest missing fields: {e}") from e

    from .neural.params import tensor_specs
    expected = dict(tensor_specs(hyper))
    if hyper.src_vocab != src_vocab.size or hyper.tgt_vocab != tgt_vocab.size:
        raise CorruptCheckpoint(
            f"vocab sizes {src_vocab.size}/{tgt_vocab.size} disagree with "
            f"hyper {hyper.src_vocab}/{hyper.tgt_vocab}")

    base = start + blob_len
    tensors = {}
    for e in entries:
        name = e.get("name")
        shape = tuple(e.get("shape", ()))
        if name not in expected:
            raise CorruptCheckpoint(f"unexpected tensor {name!r}")
        if shape != expected[name]:
            raise CorruptCheckpoint(
                f"tensor {name!r} shape {shape} != expected {expected[name]}")
        tag = _DTYPE_TAGS.get(e.get("dtype"))
        if tag is None:
            raise CorruptCheckpoint(f"tensor {name!r} has unknown dtype {e.get('dtype')}")
        nbytes = int(np.prod(shape)) * np.dtype(tag).itemsize if shape else np.dtype(tag).itemsize
        if e.get("nbytes") != nbytes:
            raise CorruptCheckpoint(f"tensor {name!r} nbytes {e.get('nbytes')} != {nbytes}")
        lo = base + int(e["offset"])
        hi = lo + nbytes
        if hi > len(data):
            raise CorruptCheckpoint(f"tensor {name!r} payload truncated")
        arr = np.frombuffer(data[lo:hi], dtype=tag).reshape(shape)
        tensors[name] = arr.astype(hyper.np_dtype)
    missing = set(expected) - set(tensors)
    if missing:
        raise CorruptCheckpoint(f"missing tensors: {sorted(missing)}")

    params = ModelParams(hyper, tensors)
    return Checkpoint(params, src_vocab, tgt_vocab,
                      manifest.get("conventions", default_conventions()),
                      manifest.get("meta", {}))
