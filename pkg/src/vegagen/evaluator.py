"""Held-out evaluation: decode datasets at several beam widths, tabulate validity.

Accounting is per-candidate: a width-k decode of one row contributes up to k
samples to that width's row. Every counted candidate appears in the report's
diagnostics list, so all rates can be recomputed from it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Dataset, backward_transform, forward_transform, infer_schema
from .decoding import beam_search
from .neural.params import ModelParams
from .tokenizer import TooLong, decode as decode_ids, encode
from .trainer import Checkpoint
from .validator import validate_text


class EmptyConfiguration(ValueError):
    """evaluate/render called with nothing to do."""


@dataclass(frozen=True)
class EvalRow:
    model_tag: str
    beam_width: int
    language_rate: float
    visualization_rate: float
    phantom_rate: float
    sample_count: int

    def __post_init__(self):
        for name in ("language_rate", "visualization_rate", "phantom_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    metadata: dict = field(default_factory=dict)
    diagnostics: tuple[dict, ...] = ()


def _dataset_rng(seed: int, name: str) -> np.random.Generator:
    # Seed depends on the dataset name, not its position, so results do not
    # change when the dataset list is reordered.
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, tag])


def evaluate(model: Checkpoint, datasets: list[Dataset], widths: list[int],
             per_dataset_rows: int = 10, *, max_len: int = 500, seed: int = 0,
             model_tag: str | None = None, checkpoint_id: str = "") -> EvalReport:
    """Decode sampled rows of each dataset at every width and score candidates.

    Returns one report row per (model tag, width); rates aggregate over all
    datasets. Rows whose normalized form exceeds max_len are skipped and
    counted in metadata["skipped_rows"].
    """
    datasets = list(datasets)
    widths = [int(w) for w in widths]
    if not datasets:
        raise EmptyConfiguration("no datasets to evaluate")
    if not widths:
        raise EmptyConfiguration("no beam widths to evaluate")
    if any(w < 1 for w in widths):
        raise EmptyConfiguration("beam widths must be >= 1")
    if per_dataset_rows < 1:
        raise EmptyConfiguration("per_dataset_rows must be >= 1")
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise EmptyConfiguration("dataset names must be unique")

    tag = model_tag if model_tag is not None else model.meta.get("model_tag", "bilstm-attn")
    params: ModelParams = model.params
    counts = {w: [0, 0, 0, 0] for w in widths}  # lang, vis, phantom, total
    diagnostics: list[dict] = []
    skipped = 0

    for dataset in datasets:
        schema = infer_schema(dataset)
        rng = _dataset_rng(seed, dataset.name)
        n = len(dataset.records)
        take = min(per_dataset_rows, n)
        picked = rng.choice(n, size=take, replace=False)
        for row_index in sorted(int(i) for i in picked):
            source, mapping = forward_transform(dataset.records[row_index], schema)
            try:
                ids = encode(source, model.src_vocab, max_len)
            except TooLong:
                skipped += 1
                continue
            for w in widths:
                hyps = beam_search(ids, params, k=w, max_len=max_len,
                                   record_alignment=False)
                for rank, hyp in enumerate(hyps):
                    placeholder_text = decode_ids(hyp.tokens, model.tgt_vocab)
                    restored = backward_transform(placeholder_text, mapping)
                    res = validate_text(restored, schema=schema)
                    c = counts[w]
                    c[0] += int(res.language_valid)
                    c[1] += int(res.visualization_valid)
                    c[2] += int(bool(res.phantom_fields))
                    c[3] += 1
                    diagnostics.append({
                        "dataset": dataset.name,
                        "row_index": row_index,
                        "beam_width": w,
                        "rank": rank,
                        "score": float(hyp.score),
                        "spec_text": restored,
                        "language_valid": res.language_valid,
                        "visualization_valid": res.visualization_valid,
                        "phantom_fields": list(res.phantom_fields),
                        "errors": [list(e) for e in res.errors],
                    })

    rows = []
    for w in widths:
        lang, vis, phant, total = counts[w]
        if total == 0:
            raise EmptyConfiguration("every sampled row was skipped; nothing scored")
        rows.append(EvalRow(tag, w, lang / total, vis / total, phant / total, total))
    metadata = {
        "seed": seed,
        "checkpoint_id": checkpoint_id,
        "per_dataset_rows": per_dataset_rows,
        "max_len": max_len,
        "datasets": sorted(names),
        "accounting": "per-candidate",
        "skipped_rows": skipped,
    }
    return EvalReport(rows=tuple(rows), metadata=metadata,
                      diagnostics=tuple(diagnostics))


def report_to_json(report: EvalReport) -> str:
    obj = {
        "rows": [asdict(r) for r in report.rows],
        "metadata": report.metadata,
        "diagnostics": list(report.diagnostics),
    }
    return json.dumps(obj, indent=1, sort_keys=False)


def report_from_json(text: str) -> EvalReport:
    obj = json.loads(text)
    rows = tuple(EvalRow(**r) for r in obj["rows"])
    return EvalReport(rows=rows, metadata=obj["metadata"],
                      diagnostics=tuple(obj["diagnostics"]))


_METRICS = (
    ("language rate", "language_rate", "{:.4f}"),
    ("visualization rate", "visualization_rate", "{:.4f}"),
    ("phantom rate", "phantom_rate", "{:.4f}"),
    ("sample count", "sample_count", "{:d}"),
)


def render_report(report: EvalReport, json_path=None) -> str:
    """Format the report as a text table; columns are widths, rows metrics.

    One block per model tag. When json_path is given the machine-readable
    form is written there; report_from_json(that file) reproduces the report.
    """
    if not report.rows:
        raise EmptyConfiguration("report has no rows")
    tags = []
    for r in report.rows:
        if r.model_tag not in tags:
            tags.append(r.model_tag)

    blocks = []
    for tag in tags:
        tag_rows = sorted((r for r in report.rows if r.model_tag == tag),
                          key=lambda r: r.beam_width)
        header = ["metric"] + [f"k={r.beam_width}" for r in tag_rows]
        lines = [[label] + [fmt.format(getattr(r, attr)) for r in tag_rows]
                 for label, attr, fmt in _METRICS]
        table = [header] + lines
        col_w = [max(len(row[c]) for row in table) for c in range(len(header))]
        rendered = [
            "  ".join(cell.ljust(col_w[c]) for c, cell in enumerate(row)).rstrip()
            for row in table
        ]
        meta = report.metadata
        title = (f"model {tag}  seed={meta.get('seed', '?')}"
                 f"  checkpoint={meta.get('checkpoint_id') or 'n/a'}")
        blocks.append("\n".join([title] + rendered))
    text = "\n\n".join(blocks) + "\n"

    if json_path is not None:
        from pathlib import Path

        Path(json_path).write_text(report_to_json(report), encoding="utf-8")
    return text
