"""Learnable tensors for the encoder-decoder translation model.

Tensors live in a flat name->array dict so the optimizer, the gradient
checker, and the checkpoint writer can treat the model uniformly. Gate
blocks are laid out in i, f, g, o order along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GATE_ORDER = "ifgo"
ENC_DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class ModelHyper:
    src_vocab: int
    tgt_vocab: int
    d_cell: int = 512
    d_emb: int = 0       # 0 means "same as d_cell"
    d_attn: int = 0      # 0 means "same as d_cell"
    enc_layers: int = 2
    dec_layers: int = 2
    dropout: float = 0.5
    max_len: int = 500
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_emb == 0:
            object.__setattr__(self, "d_emb", self.d_cell)
        if self.d_attn == 0:
            object.__setattr__(self, "d_attn", self.d_cell)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {
            "src_vocab": self.src_vocab,
            "tgt_vocab": self.tgt_vocab,
            "d_cell": self.d_cell,
            "d_emb": self.d_emb,
            "d_attn": self.d_attn,
            "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers,
            "dropout": self.dropout,
            "max_len": self.max_len,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelHyper":
        return cls(**d)


def tensor_specs(hyper: ModelHyper) -> list[tuple[str, tuple[int, ...]]]:
    """Name and shape of every learnable tensor, in a fixed order."""
    H, E, A = hyper.d_cell, hyper.d_emb, hyper.d_attn
    specs = [
        ("src_emb", (hyper.src_vocab, E)),
        ("tgt_emb", (hyper.tgt_vocab, E)),
    ]
    d_in = E
    for layer in range(hyper.enc_layers):
        for direction in ENC_DIRECTIONS:
            prefix = f"enc{layer}_{direction}"
            specs += [
                (f"{prefix}_Wx", (d_in, 4 * H)),
                (f"{prefix}_Wh", (H, 4 * H)),
                (f"{prefix}_b", (4 * H,)),
            ]
        d_in = 2 * H
    d_in = E + 2 * H  # previous context vector is fed back into the first layer
    for layer in range(hyper.dec_layers):
        prefix = f"dec{layer}"
        specs += [
            (f"{prefix}_Wx", (d_in, 4 * H)),
            (f"{prefix}_Wh", (H, 4 * H)),
            (f"{prefix}_b", (4 * H,)),
        ]
        d_in = H
    specs += [
        ("attn_Wq", (H, A)),
        ("attn_Uk", (2 * H, A)),
        ("attn_v", (A,)),
    ]
    for layer in range(hyper.dec_layers):
        specs += [
            (f"bridge{layer}_Wh", (2 * H, H)),
            (f"bridge{layer}_bh", (H,)),
            (f"bridge{layer}_Wc", (2 * H, H)),
            (f"bridge{layer}_bc", (H,)),
        ]
    specs += [
        ("out_W", (3 * H, hyper.tgt_vocab)),
        ("out_b", (hyper.tgt_vocab,)),
    ]
    return specs


@dataclass
class ModelParams:
    hyper: ModelHyper
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray):
        self.tensors[name] = value

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype: str) -> "ModelParams":
        hyper = replace(self.hyper, dtype=dtype)
        return ModelParams(hyper, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def check_finite(self):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise FloatingPointError(f"non-finite values in tensor {name!r}")


INIT_SCALE = 0.08
FORGET_BIAS = 1.0


def init_params(hyper: ModelHyper, seed: int = 0) -> ModelParams:
    """Uniform(-0.08, 0.08) weights, zero biases, +1 forget-gate bias."""
    rng = np.random.default_rng(seed)
    dtype = hyper.np_dtype
    H = hyper.d_cell
    tensors = {}
    for name, shape in tensor_specs(hyper):
        if name.endswith("_b") or name.endswith("_bh") or name.endswith("_bc"):
            t = np.zeros(shape, dtype=dtype)
            is_lstm_bias = name.endswith("_b") and (name.startswith("enc") or name.startswith("dec"))
            if is_lstm_bias:
                t[H:2 * H] = FORGET_BIAS
        else:
            t = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(dtype)
        tensors[name] = t
    return ModelParams(hyper, tensors)


def zero_params(hyper: ModelHyper) -> ModelParams:
    return ModelParams(
        hyper, {name: np.zeros(shape, dtype=hyper.np_dtype) for name, shape in tensor_specs(hyper)}
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.tensors.items()}
