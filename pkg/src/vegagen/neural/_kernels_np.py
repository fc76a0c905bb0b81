"""Pure-numpy reference implementations of the hot elementwise kernels.

These are the import-time fallback when the compiled extension is missing,
and the ground truth the compiled kernels are tested against.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp may overflow to inf for large |x|; 1/(1+inf) -> 0 is the right limit.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(pre: np.ndarray, c_prev: np.ndarray):
    """Gate math for one step: pre (B, 4H) in i,f,g,o order, c_prev (B, H).

    Returns (c_new, h_new, acts, tanh_c) where acts holds the activated
    gates in the same layout as pre; acts and tanh_c are the backward cache.
    """
    H = c_prev.shape[-1]
    acts = np.empty_like(pre)
    acts[..., : 2 * H] = sigmoid(pre[..., : 2 * H])          # i, f
    acts[..., 2 * H : 3 * H] = np.tanh(pre[..., 2 * H : 3 * H])  # g
    acts[..., 3 * H :] = sigmoid(pre[..., 3 * H :])          # o
    i = acts[..., :H]
    f = acts[..., H : 2 * H]
    g = acts[..., 2 * H : 3 * H]
    o = acts[..., 3 * H :]
    c_new = f * c_prev + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return c_new, h_new, acts, tanh_c


def lstm_cell_backward(acts: np.ndarray, tanh_c: np.ndarray, c_prev: np.ndarray,
                       dh: np.ndarray, dc: np.ndarray):
    """Adjoint of lstm_cell_forward.

    dh and dc are gradients w.r.t. h_new and c_new; returns (dpre, dc_prev).
    """
    H = c_prev.shape[-1]
    i = acts[..., :H]
    f = acts[..., H : 2 * H]
    g = acts[..., 2 * H : 3 * H]
    o = acts[..., 3 * H :]
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dpre = np.empty_like(acts)
    dpre[..., :H] = di * i * (1.0 - i)
    dpre[..., H : 2 * H] = df * f * (1.0 - f)
    dpre[..., 2 * H : 3 * H] = dg * (1.0 - g * g)
    dpre[..., 3 * H :] = do * o * (1.0 - o)
    return dpre, dc_prev


MASK_FILL = -1e30


def masked_softmax(scores: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row softmax over the last axis; masked-out entries get weight 0.

    At least one entry per row must be unmasked.
    """
    if mask is not None:
        scores = np.where(mask, scores, scores.dtype.type(MASK_FILL))
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return e / total
