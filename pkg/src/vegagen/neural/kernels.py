"""Backend dispatch for the recurrent-cell and softmax kernels.

Two interchangeable implementations: a Cython extension with fused scalar
loops and a pure numpy one. They expose identical signatures and agree to
within a few ulps of the working dtype (libm and numpy round their
transcendentals slightly differently). Any single backend is bitwise
deterministic given the same inputs.

numpy is the default: its SIMD-vectorized exp/tanh make the gate forward
substantially faster at training shapes, while the compiled backend wins
only the transcendental-free fused backward (see benchmarks/kernel_bench.py
for current numbers on your machine).

Selection order:
    1. ``VEGAGEN_KERNELS`` environment variable, if set to ``py`` or ``c``.
    2. The numpy implementation.

Forcing ``c`` when the extension is missing raises at import time rather than
silently degrading, since the caller asked for a specific backend.
"""

from __future__ import annotations

import os

from . import _kernels_np

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

_BACKENDS = {"py": _kernels_np}
if _kernels_cy is not None:
    _BACKENDS["c"] = _kernels_cy


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _pick_default() -> str:
    forced = os.environ.get("VEGAGEN_KERNELS", "").strip().lower()
    if forced:
        if forced not in ("py", "c"):
            raise ValueError(f"VEGAGEN_KERNELS must be 'py' or 'c', got {forced!r}")
        if forced not in _BACKENDS:
            raise ImportError(
                "VEGAGEN_KERNELS=c but the compiled extension is not available"
            )
        return forced
    return "py"


BACKEND = _pick_default()
_impl = _BACKENDS[BACKEND]


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous one.

    Intended for tests and benchmarks that need to compare implementations
    within one process.
    """
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    previous = BACKEND
    BACKEND = name
    _impl = _BACKENDS[name]
    return previous


def lstm_cell_forward(pre, c_prev):
    return _impl.lstm_cell_forward(pre, c_prev)


def lstm_cell_backward(acts, tanh_c, c_prev, dh, dc):
    return _impl.lstm_cell_backward(acts, tanh_c, c_prev, dh, dc)


def masked_softmax(scores, mask=None):
    return _impl.masked_softmax(scores, mask)
