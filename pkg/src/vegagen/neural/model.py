"""Encoder-decoder forward and backward passes.

Architecture: a stacked bidirectional LSTM encoder reads the source
characters; per-position annotations are the concatenation of the top-layer
forward and backward hidden states (dimension 2*d_cell). A stacked LSTM
decoder starts from a learned tanh bridge off the final encoder states,
consumes the previous target character plus the previous attention context
(input feeding), attends over the annotations with an additive scorer
e_j = v . tanh(W_q q + U_k h_j), and projects [top hidden ; context] to
target-vocabulary logits followed by log-softmax.

Internals are batched and time-major: sequences are right-padded, encoder
states at padded positions are forced to zero after every step, and padded
target steps are masked out of the loss. The backward pass is exact for this
masked forward function, so finite-difference checks hold on ragged batches.

Dropout (train mode) is inverted and applied to every LSTM layer input, one
independent mask per layer and direction, sampled from the caller's
generator in a fixed order so a reseeded generator replays the same masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tokenizer import EOS, PAD, SOS
from . import kernels
from .params import ModelParams

__all__ = [
    "Alignment",
    "BatchDecoderState",
    "DecoderState",
    "DimensionMismatch",
    "EncoderStates",
    "attend",
    "backward",
    "decode_step",
    "decode_step_batch",
    "encode_source",
    "forward_batch",
    "init_decoder_state",
    "init_decoder_state_batch",
    "loss_and_gradients",
    "lstm_step",
    "model_forward",
]


class DimensionMismatch(ValueError):
    """An input's shape disagrees with the model's parameter shapes."""


@dataclass(frozen=True)
class EncoderStates:
    """Source annotations for one sequence.

    h: (m, 2*d_cell) per-position annotations.
    keys: (m, d_attn) precomputed attention key projections U_k h_j.
    bridge_src: (2*d_cell,) concatenated final forward / final backward
        top-layer states, the input to the decoder-init bridge.
    """

    h: np.ndarray
    keys: np.ndarray
    bridge_src: np.ndarray

    @property
    def length(self) -> int:
        return self.h.shape[0]


@dataclass
class DecoderState:
    """Decoder recurrent state: per-layer (c, h) plus the previous context."""

    c: np.ndarray  # (dec_layers, d_cell)
    h: np.ndarray  # (dec_layers, d_cell)
    context: np.ndarray  # (2*d_cell,)


@dataclass
class BatchDecoderState:
    """Decoder state for n hypotheses advanced in lockstep."""

    c: np.ndarray  # (dec_layers, n, d_cell)
    h: np.ndarray  # (dec_layers, n, d_cell)
    context: np.ndarray  # (n, 2*d_cell)

    def select(self, idx: np.ndarray) -> "BatchDecoderState":
        """Reorder hypotheses by index (beam-search parent selection)."""
        return BatchDecoderState(self.c[:, idx], self.h[:, idx], self.context[idx])


@dataclass(frozen=True)
class Alignment:
    """Attention weights: one row per emitted target token, one column per
    source position. Rows are softmax outputs and sum to 1."""

    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("alignment matrix must be 2-D")


def lstm_step(x, state, weights):
    """One LSTM cell step. state = (c, h); weights = (Wx, Wh, b).

    Gate preactivations are x@Wx + h@Wh + b split into quarters i, f, g, o;
    c' = sigmoid(f)*c + sigmoid(i)*tanh(g); h' = sigmoid(o)*tanh(c').
    Returns (c', h'). Pure; accepts a single vector x of size Wx.shape[0].
    """
    c, h = state
    Wx, Wh, b = weights
    x = np.asarray(x)
    c = np.asarray(c)
    h = np.asarray(h)
    if x.shape != (Wx.shape[0],):
        raise DimensionMismatch(f"input shape {x.shape} vs Wx rows {Wx.shape[0]}")
    hd = Wh.shape[0]
    if h.shape != (hd,) or c.shape != (hd,):
        raise DimensionMismatch(f"state shape {h.shape}/{c.shape} vs d_cell {hd}")
    if Wx.shape[1] != 4 * hd or b.shape != (4 * hd,):
        raise DimensionMismatch("weight shapes disagree")
    pre = (x @ Wx + h @ Wh + b)[None, :]
    c_new, h_new, _, _ = kernels.lstm_cell_forward(pre, c[None, :])
    return c_new[0], h_new[0]


def _dropout_mask(rng, keep: float, shape, dtype):
    # inverted dropout: scale at train time so inference needs none
    return (rng.random(shape) < keep).astype(dtype) * (1.0 / keep)


def _pack(seqs, dtype=np.int64):
    """Right-pad integer sequences into (B, T) plus a length vector."""
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lens.max())), PAD, dtype=dtype)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lens


@dataclass
class _DirCache:
    xd: np.ndarray  # layer input after dropout, (T, B, d_in)
    dm: np.ndarray | None  # dropout mask, same shape, or None in eval mode
    h: np.ndarray  # masked hidden outputs (T, B, H)
    c: np.ndarray  # masked cell outputs (T, B, H)
    acts: np.ndarray  # gate activations (T, B, 4H)
    tanh_c: np.ndarray  # (T, B, H)


@dataclass
class _EncCache:
    src: np.ndarray  # (B, T) ids
    lens: np.ndarray  # (B,)
    mask: np.ndarray  # (B, T) bool
    m_t: np.ndarray  # (T, B, 1) float mask, time-major
    layers: list  # list over layers of {"fwd": _DirCache, "bwd": _DirCache}
    enc_bt: np.ndarray  # (B, T, 2H) top annotations, zero at pads
    keys: np.ndarray  # (B, T, A)
    bridge_src: np.ndarray  # (B, 2H)


def _encode_batch(src, lens, params: ModelParams, train_mode: bool, rng) -> _EncCache:
    hp = params.hyper
    H = hp.d_cell
    dtype = hp.np_dtype
    B, T = src.shape
    mask = np.arange(T)[None, :] < lens[:, None]
    m_t = np.ascontiguousarray(mask.T).astype(dtype)[:, :, None]
    keep = 1.0 - hp.dropout

    if src.min() < 0 or src.max() >= hp.src_vocab:
        raise DimensionMismatch("source token id outside vocabulary")
    layer_input = np.ascontiguousarray(params["src_emb"][src].transpose(1, 0, 2))

    layers = []
    for layer in range(hp.enc_layers):
        dirs = {}
        for d in ("fwd", "bwd"):
            if train_mode and hp.dropout > 0.0:
                dm = _dropout_mask(rng, keep, layer_input.shape, dtype)
                xd = layer_input * dm
            else:
                dm = None
                xd = layer_input
            Wx = params[f"enc{layer}_{d}_Wx"]
            Wh = params[f"enc{layer}_{d}_Wh"]
            b = params[f"enc{layer}_{d}_b"]
            if xd.shape[2] != Wx.shape[0]:
                raise DimensionMismatch(
                    f"encoder layer {layer} input dim {xd.shape[2]} vs {Wx.shape[0]}"
                )
            pre_in = xd @ Wx + b
            h_seq = np.empty((T, B, H), dtype)
            c_seq = np.empty((T, B, H), dtype)
            acts = np.empty((T, B, 4 * H), dtype)
            tanh_c = np.empty((T, B, H), dtype)
            h_prev = np.zeros((B, H), dtype)
            c_prev = np.zeros((B, H), dtype)
            steps = range(T) if d == "fwd" else range(T - 1, -1, -1)
            for t in steps:
                pre = pre_in[t] + h_prev @ Wh
                c_cell, h_cell, a, tc = kernels.lstm_cell_forward(pre, c_prev)
                # zero the state at padded positions so the reverse pass can
                # start on pads and still enter real data with a zero state
                h_prev = h_cell * m_t[t]
                c_prev = c_cell * m_t[t]
                h_seq[t] = h_prev
                c_seq[t] = c_prev
                acts[t] = a
                tanh_c[t] = tc
            dirs[d] = _DirCache(xd, dm, h_seq, c_seq, acts, tanh_c)
        layers.append(dirs)
        layer_input = np.concatenate([dirs["fwd"].h, dirs["bwd"].h], axis=2)

    top = layers[-1]
    enc_bt = np.ascontiguousarray(layer_input.transpose(1, 0, 2))
    fwd_final = top["fwd"].h[lens - 1, np.arange(B)]
    bwd_final = top["bwd"].h[0]
    bridge_src = np.concatenate([fwd_final, bwd_final], axis=1)
    keys = enc_bt @ params["attn_Uk"]
    return _EncCache(src, lens, mask, m_t, layers, enc_bt, keys, bridge_src)


def _bridge_init(bridge_src, params: ModelParams):
    """Decoder initial (c, h) per layer from the final encoder states."""
    hp = params.hyper
    h0 = []
    c0 = []
    for layer in range(hp.dec_layers):
        h0.append(np.tanh(bridge_src @ params[f"bridge{layer}_Wh"] + params[f"bridge{layer}_bh"]))
        c0.append(np.tanh(bridge_src @ params[f"bridge{layer}_Wc"] + params[f"bridge{layer}_bc"]))
    return np.stack(c0), np.stack(h0)


def _attend_batch(h_top, enc_bt, keys, params: ModelParams, mask=None):
    """Additive attention for a batch of queries against one key set each.

    h_top: (B, H); enc_bt: (B, T, 2H); keys: (B, T, A); mask: (B, T) bool
    or None. Returns (context (B, 2H), alpha (B, T), qa (B, A)).
    """
    qa = h_top @ params["attn_Wq"]
    scores = np.tanh(qa[:, None, :] + keys) @ params["attn_v"]
    alpha = kernels.masked_softmax(scores, mask)
    context = np.einsum("bt,btd->bd", alpha, enc_bt)
    return context, alpha, qa


@dataclass
class _DecCache:
    enc: _EncCache
    tgt_in: np.ndarray  # (B, S)
    tgt_out: np.ndarray  # (B, S)
    tgt_mask: np.ndarray  # (B, S) bool
    x_dropped: list  # per layer (S, B, d_in) inputs after dropout
    dms: list  # per layer dropout mask (S, B, d_in) or None
    h_states: np.ndarray  # (L, S+1, B, H); [:, 0] is the bridge init
    c_states: np.ndarray  # (L, S+1, B, H)
    acts: np.ndarray  # (L, S, B, 4H)
    tanh_c: np.ndarray  # (L, S, B, H)
    ctxs: np.ndarray  # (S+1, B, 2H); [0] is zeros
    alphas: np.ndarray  # (S, B, T)
    qas: np.ndarray  # (S, B, A)
    concat_out: np.ndarray  # (S, B, 3H)
    logp: np.ndarray  # (S, B, Vt)
    params: ModelParams


def _decode_teacher_batch(enc: _EncCache, tgt_in, tgt_out, tgt_mask,
                          params: ModelParams, train_mode: bool, rng) -> _DecCache:
    hp = params.hyper
    H, L = hp.d_cell, hp.dec_layers
    A = params["attn_v"].shape[0]
    dtype = hp.np_dtype
    B, S = tgt_in.shape
    T = enc.src.shape[1]
    keep = 1.0 - hp.dropout

    if tgt_in.min() < 0 or tgt_in.max() >= hp.tgt_vocab:
        raise DimensionMismatch("target token id outside vocabulary")
    emb = np.ascontiguousarray(params["tgt_emb"][tgt_in].transpose(1, 0, 2))
    E = emb.shape[2]

    dms = []
    for layer in range(L):
        d_in = E + 2 * H if layer == 0 else H
        if train_mode and hp.dropout > 0.0:
            dms.append(_dropout_mask(rng, keep, (S, B, d_in), dtype))
        else:
            dms.append(None)

    c0, h0 = _bridge_init(enc.bridge_src, params)
    h_states = np.empty((L, S + 1, B, H), dtype)
    c_states = np.empty((L, S + 1, B, H), dtype)
    h_states[:, 0] = h0
    c_states[:, 0] = c0
    acts = np.empty((L, S, B, 4 * H), dtype)
    tanh_c = np.empty((L, S, B, H), dtype)
    ctxs = np.zeros((S + 1, B, 2 * H), dtype)
    alphas = np.empty((S, B, T), dtype)
    qas = np.empty((S, B, A), dtype)
    x_dropped = [np.empty((S, B, E + 2 * H), dtype)] + [
        np.empty((S, B, H), dtype) for _ in range(L - 1)
    ]
    concat_out = np.empty((S, B, 3 * H), dtype)

    for t in range(S):
        x = np.concatenate([emb[t], ctxs[t]], axis=1)
        for layer in range(L):
            if dms[layer] is not None:
                x = x * dms[layer][t]
            x_dropped[layer][t] = x
            pre = (x @ params[f"dec{layer}_Wx"] + params[f"dec{layer}_b"]
                   + h_states[layer, t] @ params[f"dec{layer}_Wh"])
            c_new, h_new, a, tc = kernels.lstm_cell_forward(pre, c_states[layer, t])
            c_states[layer, t + 1] = c_new
            h_states[layer, t + 1] = h_new
            acts[layer, t] = a
            tanh_c[layer, t] = tc
            x = h_new
        ctx, alpha, qa = _attend_batch(h_states[L - 1, t + 1], enc.enc_bt, enc.keys,
                                       params, enc.mask)
        ctxs[t + 1] = ctx
        alphas[t] = alpha
        qas[t] = qa
        concat_out[t] = np.concatenate([h_states[L - 1, t + 1], ctx], axis=1)

    logits = concat_out @ params["out_W"] + params["out_b"]
    peak = logits.max(axis=2, keepdims=True)
    logp = logits - (peak + np.log(np.exp(logits - peak).sum(axis=2, keepdims=True)))
    return _DecCache(enc, tgt_in, tgt_out, tgt_mask, x_dropped, dms, h_states,
                     c_states, acts, tanh_c, ctxs, alphas, qas, concat_out, logp, params)


@dataclass
class BatchForward:
    """Forward results for a padded batch, with everything backward() needs."""

    total_nll: float
    step_nll: np.ndarray  # (S, B), zero at padded steps
    pair_nll: np.ndarray  # (B,) per-pair totals
    token_counts: np.ndarray  # (B,) target lengths
    cache: _DecCache = field(repr=False)

    def alignment(self, i: int) -> Alignment:
        c = self.cache
        rows = int(c.tgt_mask[i].sum())
        cols = int(c.enc.lens[i])
        return Alignment(c.alphas[:rows, i, :cols].copy())


def forward_batch(sources, targets, params: ModelParams, train_mode: bool = False,
                  rng=None) -> BatchForward:
    """Teacher-forced forward over a list of (source ids, target ids) pairs.

    Targets already end with EOS; the decoder input is SOS followed by the
    target shifted right. Returns summed NLL over all non-pad target steps.
    """
    if len(sources) == 0 or len(sources) != len(targets):
        raise DimensionMismatch("need equal nonzero numbers of sources and targets")
    for s, t in zip(sources, targets):
        if len(s) == 0 or len(t) == 0:
            raise DimensionMismatch("empty sequence in batch")
    if train_mode and rng is None:
        raise ValueError("train_mode requires an rng for dropout masks")
    dtype = params.hyper.np_dtype

    src, src_lens = _pack(sources)
    tgt_out, tgt_lens = _pack(targets)
    S = tgt_out.shape[1]
    tgt_in = np.full_like(tgt_out, PAD)
    tgt_in[:, 0] = SOS
    tgt_in[:, 1:] = tgt_out[:, :-1]
    tgt_mask = np.arange(S)[None, :] < tgt_lens[:, None]

    enc = _encode_batch(src, src_lens, params, train_mode, rng)
    dec = _decode_teacher_batch(enc, tgt_in, tgt_out, tgt_mask, params, train_mode, rng)

    picked = np.take_along_axis(dec.logp, tgt_out.T[:, :, None], axis=2)[:, :, 0]
    step_nll = np.where(tgt_mask.T, -picked, dtype.type(0.0))
    pair_nll = step_nll.sum(axis=0)
    return BatchForward(float(step_nll.sum()), step_nll, pair_nll, tgt_lens, dec)


def model_forward(source, target, params: ModelParams, train_mode: bool = False,
                  rng=None):
    """Forward one pair. Returns (total NLL, per-step NLLs, Alignment)."""
    out = forward_batch([source], [target], params, train_mode, rng)
    return out.pair_nll[0].item(), out.step_nll[:, 0].copy(), out.alignment(0)


def _recurrence_backward(cache: _DirCache, dH, m_t, Wx, Wh, reverse: bool):
    """Backprop one encoder direction. dH: (T, B, H) grads w.r.t. the masked
    hidden outputs. Returns (dPre (T, B, 4H), dX (T, B, d_in))."""
    T, B, H = dH.shape
    dtype = dH.dtype
    dPre = np.empty((T, B, 4 * H), dtype)
    dh_carry = np.zeros((B, H), dtype)
    dc_carry = np.zeros((B, H), dtype)
    zeros = np.zeros((B, H), dtype)
    order = range(T - 1, -1, -1) if not reverse else range(T)
    for t in order:
        if not reverse:
            c_prev = cache.c[t - 1] if t > 0 else zeros
        else:
            c_prev = cache.c[t + 1] if t < T - 1 else zeros
        dh_cell = (dH[t] + dh_carry) * m_t[t]
        dc_cell = dc_carry * m_t[t]
        dpre, dc_prev = kernels.lstm_cell_backward(cache.acts[t], cache.tanh_c[t],
                                                   c_prev, dh_cell, dc_cell)
        dPre[t] = dpre
        dh_carry = dpre @ Wh.T
        dc_carry = dc_prev
    dX = dPre.reshape(T * B, 4 * H) @ Wx.T
    return dPre, dX.reshape(T, B, -1)


def _encoder_backward(enc: _EncCache, d_enc_bt, d_bridge_src, grads, params: ModelParams):
    hp = params.hyper
    H = hp.d_cell
    B, T = enc.src.shape
    lens = enc.lens

    d_top = np.ascontiguousarray(d_enc_bt.transpose(1, 0, 2))
    dH = {"fwd": np.ascontiguousarray(d_top[:, :, :H]),
          "bwd": np.ascontiguousarray(d_top[:, :, H:])}
    dH["fwd"][lens - 1, np.arange(B)] += d_bridge_src[:, :H]
    dH["bwd"][0] += d_bridge_src[:, H:]

    for layer in range(hp.enc_layers - 1, -1, -1):
        d_input = None
        for d in ("fwd", "bwd"):
            cache = enc.layers[layer][d]
            Wx = params[f"enc{layer}_{d}_Wx"]
            Wh = params[f"enc{layer}_{d}_Wh"]
            dPre, dX = _recurrence_backward(cache, dH[d], enc.m_t, Wx, Wh,
                                            reverse=(d == "bwd"))
            flat = dPre.reshape(T * B, 4 * H)
            grads[f"enc{layer}_{d}_Wx"] += cache.xd.reshape(T * B, -1).T @ flat
            if d == "fwd":
                h_prev = np.concatenate([np.zeros((1, B, H), dPre.dtype), cache.h[:-1]])
            else:
                h_prev = np.concatenate([cache.h[1:], np.zeros((1, B, H), dPre.dtype)])
            grads[f"enc{layer}_{d}_Wh"] += h_prev.reshape(T * B, H).T @ flat
            grads[f"enc{layer}_{d}_b"] += flat.sum(axis=0)
            if cache.dm is not None:
                dX = dX * cache.dm
            d_input = dX if d_input is None else d_input + dX
        if layer > 0:
            dH = {"fwd": np.ascontiguousarray(d_input[:, :, :H]),
                  "bwd": np.ascontiguousarray(d_input[:, :, H:])}
        else:
            np.add.at(grads["src_emb"], enc.src.T, d_input)


def backward(fw: BatchForward) -> dict:
    """Exact gradients of the batch's total NLL for every parameter tensor."""
    cache = fw.cache
    params = cache.params
    hp = params.hyper
    H, L = hp.d_cell, hp.dec_layers
    dtype = hp.np_dtype
    enc = cache.enc
    B, S = cache.tgt_in.shape
    T = enc.src.shape[1]
    A = params["attn_v"].shape[0]
    E = params["tgt_emb"].shape[1]

    grads = {name: np.zeros_like(v) for name, v in params.tensors.items()}

    # d(total NLL)/d logits = softmax - onehot(target), zero at padded steps
    dlogits = np.exp(cache.logp)
    np.subtract.at(dlogits, (np.arange(S)[:, None], np.arange(B)[None, :],
                             cache.tgt_out.T), 1.0)
    dlogits *= cache.tgt_mask.T[:, :, None].astype(dtype)

    flat_dlog = dlogits.reshape(S * B, -1)
    grads["out_W"] += cache.concat_out.reshape(S * B, -1).T @ flat_dlog
    grads["out_b"] += flat_dlog.sum(axis=0)
    dconcat = dlogits @ params["out_W"].T  # (S, B, 3H)

    Wq, Uk, v = params["attn_Wq"], params["attn_Uk"], params["attn_v"]
    d_enc_bt = np.zeros((B, T, 2 * H), dtype)
    dKeys = np.zeros((B, T, A), dtype)
    dqas = np.empty((S, B, A), dtype)
    dPre = [np.empty((S, B, 4 * H), dtype) for _ in range(L)]
    d_raw0 = np.empty((S, B, E + 2 * H), dtype)

    dh_carry = [np.zeros((B, H), dtype) for _ in range(L)]
    dc_carry = [np.zeros((B, H), dtype) for _ in range(L)]
    dctx_carry = np.zeros((B, 2 * H), dtype)

    for t in range(S - 1, -1, -1):
        dctx = dconcat[t, :, H:] + dctx_carry

        # attention backward; tanh scores recomputed from qa + keys
        tanh_term = np.tanh(cache.qas[t][:, None, :] + enc.keys)
        alpha = cache.alphas[t]
        dalpha = np.einsum("btd,bd->bt", enc.enc_bt, dctx)
        d_enc_bt += alpha[:, :, None] * dctx[:, None, :]
        de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dtanh = de[:, :, None] * v
        grads["attn_v"] += np.einsum("bta,bt->a", tanh_term, de)
        dpre_attn = dtanh * (1.0 - tanh_term * tanh_term)
        dKeys += dpre_attn
        dqas[t] = dpre_attn.sum(axis=1)
        dq = dqas[t] @ Wq.T

        d_from_above = dconcat[t, :, :H] + dq
        for layer in range(L - 1, -1, -1):
            dh_cell = d_from_above + dh_carry[layer]
            dpre, dc_prev = kernels.lstm_cell_backward(
                cache.acts[layer, t], cache.tanh_c[layer, t],
                cache.c_states[layer, t], dh_cell, dc_carry[layer])
            dPre[layer][t] = dpre
            dh_carry[layer] = dpre @ params[f"dec{layer}_Wh"].T
            dc_carry[layer] = dc_prev
            dX = dpre @ params[f"dec{layer}_Wx"].T
            if cache.dms[layer] is not None:
                dX = dX * cache.dms[layer][t]
            if layer > 0:
                d_from_above = dX
            else:
                d_raw0[t] = dX
        dctx_carry = d_raw0[t, :, E:]

    # bridge backward from the gradients that reached the initial states
    d_bridge_src = np.zeros((B, 2 * H), dtype)
    for layer in range(L):
        h0 = cache.h_states[layer, 0]
        c0 = cache.c_states[layer, 0]
        dph = dh_carry[layer] * (1.0 - h0 * h0)
        dpc = dc_carry[layer] * (1.0 - c0 * c0)
        grads[f"bridge{layer}_Wh"] += enc.bridge_src.T @ dph
        grads[f"bridge{layer}_bh"] += dph.sum(axis=0)
        grads[f"bridge{layer}_Wc"] += enc.bridge_src.T @ dpc
        grads[f"bridge{layer}_bc"] += dpc.sum(axis=0)
        d_bridge_src += dph @ params[f"bridge{layer}_Wh"].T
        d_bridge_src += dpc @ params[f"bridge{layer}_Wc"].T

    # attention parameter/key closures over all steps at once
    grads["attn_Wq"] += np.einsum("sbh,sba->ha", cache.h_states[L - 1, 1:], dqas)
    grads["attn_Uk"] += np.einsum("btd,bta->da", enc.enc_bt, dKeys)
    d_enc_bt += dKeys @ Uk.T

    # decoder weight gradients as stacked GEMMs
    for layer in range(L):
        flat = dPre[layer].reshape(S * B, 4 * H)
        grads[f"dec{layer}_Wx"] += cache.x_dropped[layer].reshape(S * B, -1).T @ flat
        grads[f"dec{layer}_Wh"] += cache.h_states[layer, :S].reshape(S * B, H).T @ flat
        grads[f"dec{layer}_b"] += flat.sum(axis=0)

    demb = d_raw0[:, :, :E]
    np.add.at(grads["tgt_emb"], cache.tgt_in.T, demb)

    _encoder_backward(enc, d_enc_bt, d_bridge_src, grads, params)
    return grads


def loss_and_gradients(sources, targets, params: ModelParams,
                       train_mode: bool = False, rng=None):
    """Forward plus backward. Returns (total NLL, token count, grads dict)."""
    fw = forward_batch(sources, targets, params, train_mode, rng)
    grads = backward(fw)
    return fw.total_nll, int(fw.token_counts.sum()), grads


# ---------------------------------------------------------------------------
# Single-sequence and stepwise inference paths (used by the search decoders)


def encode_source(ids, params: ModelParams, train_mode: bool = False,
                  rng=None) -> EncoderStates:
    """Encode one source sequence into per-position annotations."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise DimensionMismatch("source must be a non-empty 1-D id sequence")
    enc = _encode_batch(ids[None, :], np.array([ids.size]), params, train_mode, rng)
    return EncoderStates(h=enc.enc_bt[0], keys=enc.keys[0], bridge_src=enc.bridge_src[0])


def attend(query, enc: EncoderStates, params: ModelParams):
    """Additive attention for one query. Returns (context, weight row)."""
    query = np.asarray(query)
    ctx, alpha, _ = _attend_batch(query[None, :], enc.h[None, :, :],
                                  enc.keys[None, :, :], params, None)
    return ctx[0], alpha[0]


def init_decoder_state(enc: EncoderStates, params: ModelParams) -> DecoderState:
    c0, h0 = _bridge_init(enc.bridge_src[None, :], params)
    ctx = np.zeros(enc.h.shape[1], dtype=params.hyper.np_dtype)
    return DecoderState(c=c0[:, 0], h=h0[:, 0], context=ctx)


def init_decoder_state_batch(enc: EncoderStates, n: int,
                             params: ModelParams) -> BatchDecoderState:
    c0, h0 = _bridge_init(np.repeat(enc.bridge_src[None, :], n, axis=0), params)
    ctx = np.zeros((n, enc.h.shape[1]), dtype=params.hyper.np_dtype)
    return BatchDecoderState(c=c0, h=h0, context=ctx)


def decode_step_batch(tokens, state: BatchDecoderState, enc: EncoderStates,
                      params: ModelParams):
    """Advance n hypotheses one step.

    tokens: (n,) previous token ids. Returns (logp (n, Vt), new state,
    alpha (n, m)).
    """
    hp = params.hyper
    L = hp.dec_layers
    tokens = np.asarray(tokens, dtype=np.int64)
    n = tokens.shape[0]
    if tokens.min() < 0 or tokens.max() >= hp.tgt_vocab:
        raise DimensionMismatch("target token id outside vocabulary")
    if state.h.shape[0] != L:
        raise DimensionMismatch(f"state has {state.h.shape[0]} layers, model has {L}")

    x = np.concatenate([params["tgt_emb"][tokens], state.context], axis=1)
    new_c = np.empty_like(state.c)
    new_h = np.empty_like(state.h)
    for layer in range(L):
        pre = (x @ params[f"dec{layer}_Wx"] + params[f"dec{layer}_b"]
               + state.h[layer] @ params[f"dec{layer}_Wh"])
        c_new, h_new, _, _ = kernels.lstm_cell_forward(pre, state.c[layer])
        new_c[layer] = c_new
        new_h[layer] = h_new
        x = h_new
    enc_b = np.broadcast_to(enc.h, (n,) + enc.h.shape)
    keys_b = np.broadcast_to(enc.keys, (n,) + enc.keys.shape)
    ctx, alpha, _ = _attend_batch(new_h[L - 1], enc_b, keys_b, params, None)
    logits = np.concatenate([new_h[L - 1], ctx], axis=1) @ params["out_W"] + params["out_b"]
    peak = logits.max(axis=1, keepdims=True)
    logp = logits - (peak + np.log(np.exp(logits - peak).sum(axis=1, keepdims=True)))
    return logp, BatchDecoderState(new_c, new_h, ctx), alpha


def decode_step(prev_token: int, state: DecoderState, enc: EncoderStates,
                params: ModelParams):
    """One decoder step for a single hypothesis.

    Returns (log-probability vector over the target vocabulary, new state).
    """
    bstate = BatchDecoderState(c=state.c[:, None, :], h=state.h[:, None, :],
                               context=state.context[None, :])
    logp, new_b, _ = decode_step_batch(np.array([prev_token]), bstate, enc, params)
    new = DecoderState(c=new_b.c[:, 0], h=new_b.h[:, 0], context=new_b.context[0])
    return logp[0], new
