"""Greedy and beam-search decoding over a trained model.

Beam semantics: k live slots are reserved for unfinished hypotheses. At each
step every live hypothesis is expanded over the full vocabulary; children are
ranked by cumulative log probability (stable ties: parent-major, then lowest
token id, which reduces to argmax behavior at k=1). A child ending in EOS
retires immediately into a result pool without occupying a live slot. The
search stops once the pool holds k finished hypotheses or every live beam has
reached max_len; survivors and pool are merged, ranked by normalized score
(cumulative log probability / token count), and the top k are returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural.model import (
    Alignment,
    decode_step_batch,
    encode_source,
    init_decoder_state_batch,
)
from .tokenizer import EOS, SOS, SPECIAL_SYMBOLS

__all__ = [
    "Hypothesis",
    "LabeledAlignment",
    "MissingAlignment",
    "beam_search",
    "export_attention",
    "greedy_decode",
]


class MissingAlignment(ValueError):
    """The hypothesis was decoded with attention recording disabled."""


@dataclass(frozen=True)
class Hypothesis:
    """One decoded candidate.

    tokens: emitted target ids, ending with EOS iff finished.
    cum_logp: sum of the chosen per-step log probabilities.
    score: cum_logp / len(tokens).
    alignment: one attention row per emitted token, or None if not recorded.
    """

    tokens: tuple[int, ...]
    cum_logp: float
    score: float
    alignment: Alignment | None
    finished: bool

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("hypothesis must contain at least one token")
        if self.finished != (self.tokens[-1] == EOS):
            raise ValueError("finished flag must mirror a terminal EOS")


def _make_hyp(tokens, cum, rows, finished):
    align = Alignment(np.stack(rows)) if rows is not None else None
    return Hypothesis(tuple(tokens), float(cum), float(cum) / len(tokens),
                      align, finished)


def greedy_decode(source_ids, params, max_len: int,
                  record_alignment: bool = True) -> Hypothesis:
    """Follow the argmax token at every step until EOS or max_len."""
    enc = encode_source(source_ids, params)
    state = init_decoder_state_batch(enc, 1, params)
    prev = np.array([SOS])
    tokens = []
    rows = [] if record_alignment else None
    cum = 0.0
    for _ in range(max_len):
        logp, state, alpha = decode_step_batch(prev, state, enc, params)
        tok = int(np.argmax(logp[0]))  # ties resolve to the lowest id
        cum += float(logp[0, tok])
        tokens.append(tok)
        if rows is not None:
            rows.append(alpha[0])
        if tok == EOS:
            break
        prev = np.array([tok])
    return _make_hyp(tokens, cum, rows, tokens[-1] == EOS)


def beam_search(source_ids, params, k: int, max_len: int,
                record_alignment: bool = True) -> list[Hypothesis]:
    """Beam search returning up to k candidates sorted by normalized score."""
    if k < 1:
        raise ValueError("beam width must be >= 1")
    enc = encode_source(source_ids, params)
    vocab = params.hyper.tgt_vocab

    state = init_decoder_state_batch(enc, 1, params)
    live_tokens = [()]
    live_rows = [[] if record_alignment else None]
    live_cum = np.zeros(1)
    prev = np.array([SOS])
    pool: list[Hypothesis] = []
    stop = False

    for _ in range(max_len):
        logp, state, alpha = decode_step_batch(prev, state, enc, params)
        flat = (live_cum[:, None] + logp).ravel()
        order = np.argsort(-flat, kind="stable")

        parents, next_tokens, next_cum, next_rows, next_toklists = [], [], [], [], []
        for pos in order:
            parent, tok = divmod(int(pos), vocab)
            rows = live_rows[parent]
            child_rows = None if rows is None else rows + [alpha[parent]]
            if tok == EOS:
                pool.append(_make_hyp(live_tokens[parent] + (EOS,), flat[pos],
                                      child_rows, True))
                if len(pool) >= k:
                    stop = True
                    break
            else:
                parents.append(parent)
                next_tokens.append(tok)
                next_cum.append(flat[pos])
                next_rows.append(child_rows)
                next_toklists.append(live_tokens[parent] + (tok,))
                if len(parents) == k:
                    break
        if stop or not parents:
            live_tokens, live_rows, live_cum = [], [], np.zeros(0)
            break
        state = state.select(np.array(parents))
        live_tokens = next_toklists
        live_rows = next_rows
        live_cum = np.array(next_cum)
        prev = np.array(next_tokens)

    survivors = [_make_hyp(t, c, r, False)
                 for t, c, r in zip(live_tokens, live_cum, live_rows)]
    merged = pool + survivors
    ranked = sorted(range(len(merged)), key=lambda i: (-merged[i].score, i))
    return [merged[i] for i in ranked[:k]]


@dataclass(frozen=True)
class LabeledAlignment:
    """Attention matrix with per-character row and column labels."""

    matrix: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def to_tsv(self) -> str:
        lines = ["\t".join([""] + [_escape(c) for c in self.col_labels])]
        for label, row in zip(self.row_labels, self.matrix):
            cells = [f"{w:.6f}" for w in row]
            lines.append("\t".join([_escape(label)] + cells))
        return "\n".join(lines) + "\n"


def _escape(label: str) -> str:
    # cell-safe labels: escape the separator characters and backslash
    return (label.replace("\\", "\\\\").replace("\t", "\\t")
            .replace("\n", "\\n").replace("\r", "\\r"))


def export_attention(hyp: Hypothesis, source_text: str,
                     target_text: str) -> LabeledAlignment:
    """Label a hypothesis's attention matrix with source/target characters.

    Columns cover every encoded source position (the characters plus the
    terminal EOS marker); rows cover every emitted token, the final one
    labeled with the EOS marker when the hypothesis finished.
    """
    if hyp.alignment is None:
        raise MissingAlignment("decode ran with attention recording disabled")
    matrix = hyp.alignment.matrix
    eos_symbol = SPECIAL_SYMBOLS[EOS]
    cols = tuple(source_text) + (eos_symbol,)
    rows = tuple(target_text) + ((eos_symbol,) if hyp.finished else ())
    if matrix.shape != (len(rows), len(cols)):
        raise ValueError(
            f"texts imply shape {(len(rows), len(cols))}, matrix is {matrix.shape}")
    return LabeledAlignment(matrix, rows, cols)
