"""Training-pair construction: schema inference and field-name normalization.

Tabular records are rewritten with placeholder field names ("str0", "num1",
...) before training so the translation model never memorizes dataset-specific
vocabulary; the inverse rewrite restores the real names in generated output.
Placeholders are indexed per kind because unindexed ones would collide as soon
as a record has two fields of the same kind.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

STRING_KIND = "string"
NUMERIC_KIND = "numeric"

# placeholder name prefixes, by field kind
STRING_PREFIX = "str"
NUMERIC_PREFIX = "num"


class CorpusError(Exception):
    """Base class for corpus construction failures."""


class EmptyDataset(CorpusError):
    """Dataset has no records, or its records have no fields."""


class RaggedDataset(CorpusError):
    """Records disagree on their field-name sets."""


class SchemaMismatch(CorpusError):
    """A record's fields do not match the schema it is transformed under."""


@dataclass
class Dataset:
    """A rectangular table: flat records sharing one field-name set."""

    records: list[dict]
    name: str = ""


@dataclass(frozen=True)
class FieldSchema:
    name: str
    kind: str  # STRING_KIND or NUMERIC_KIND


@dataclass(frozen=True)
class NameMapping:
    """Bijective original-name <-> placeholder pairs, in emission order."""

    pairs: tuple[tuple[str, str], ...]

    def to_placeholder(self) -> dict[str, str]:
        return {orig: ph for orig, ph in self.pairs}

    def to_original(self) -> dict[str, str]:
        return {ph: orig for orig, ph in self.pairs}

    def __post_init__(self):
        originals = [o for o, _ in self.pairs]
        placeholders = [p for _, p in self.pairs]
        if len(set(originals)) != len(originals) or len(set(placeholders)) != len(placeholders):
            raise ValueError("name mapping is not bijective")


@dataclass(frozen=True)
class TrainingPair:
    """One normalized record (source) and its normalized chart spec (target)."""

    source: str
    target: str


def _is_numeric_value(value) -> bool:
    """True if the value reads as a decimal number. Booleans and None do not."""
    if isinstance(value, bool) or value is None:
        return False
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, str):
        try:
            Decimal(value)
        except InvalidOperation:
            return False
        return value.strip() != "" and value.strip().lower() not in ("inf", "-inf", "nan", "infinity", "-infinity")
    return False


def infer_schema(dataset: Dataset) -> list[FieldSchema]:
    """One FieldSchema per field, in first-record key order.

    A column is numeric iff every non-null value parses as a decimal number;
    an all-null column stays string. Raises EmptyDataset / RaggedDataset.
    """
    if not dataset.records:
        raise EmptyDataset(f"dataset {dataset.name!r} has no records")
    first = dataset.records[0]
    if not first:
        raise EmptyDataset(f"dataset {dataset.name!r} has records with no fields")
    names = list(first.keys())
    name_set = set(names)
    for i, rec in enumerate(dataset.records):
        if set(rec.keys()) != name_set:
            raise RaggedDataset(
                f"dataset {dataset.name!r}: record {i} fields {sorted(rec)} != {sorted(name_set)}"
            )
    schema = []
    for name in names:
        non_null = [rec[name] for rec in dataset.records if rec[name] is not None]
        numeric = bool(non_null) and all(_is_numeric_value(v) for v in non_null)
        schema.append(FieldSchema(name, NUMERIC_KIND if numeric else STRING_KIND))
    return schema


def mapping_for_schema(schema: list[FieldSchema]) -> NameMapping:
    """Placeholders indexed from 0 per kind, string fields listed first."""
    seen = set()
    for f in schema:
        if f.name in seen:
            raise ValueError(f"duplicate field name {f.name!r} in schema")
        seen.add(f.name)
    pairs = []
    for kind, prefix in ((STRING_KIND, STRING_PREFIX), (NUMERIC_KIND, NUMERIC_PREFIX)):
        i = 0
        for f in schema:
            if f.kind == kind:
                pairs.append((f.name, f"{prefix}{i}"))
                i += 1
    return NameMapping(tuple(pairs))


def forward_transform(record: dict, schema: list[FieldSchema]) -> tuple[str, NameMapping]:
    """Serialize one record compactly with placeholder keys.

    Keys are emitted string-fields-first, each kind in schema order, so the
    output is deterministic for a given (record, schema).
    """
    mapping = mapping_for_schema(schema)
    schema_names = {f.name for f in schema}
    for key in record:
        if key not in schema_names:
            raise SchemaMismatch(f"record field {key!r} absent from schema")
    out = {}
    for orig, placeholder in mapping.pairs:
        if orig not in record:
            raise SchemaMismatch(f"record is missing schema field {orig!r}")
        out[placeholder] = record[orig]
    return json.dumps(out, separators=(",", ":"), ensure_ascii=False), mapping


def _substitute_quoted(text: str, replacements: dict[str, str]) -> str:
    """Replace whole quoted JSON strings in one simultaneous pass.

    Single-pass regex substitution never rescans replaced text, so chained
    renames (a->b while b->c) cannot corrupt each other; longer matches are
    preferred to avoid partial-match corruption (num10 before num1).
    """
    if not replacements:
        return text
    quoted = {
        json.dumps(k, ensure_ascii=False): json.dumps(v, ensure_ascii=False)
        for k, v in replacements.items()
    }
    pattern = "|".join(re.escape(q) for q in sorted(quoted, key=len, reverse=True))
    return re.sub(pattern, lambda m: quoted[m.group(0)], text)


def backward_transform(spec_text: str, mapping: NameMapping) -> str:
    """Restore original field names in generated text.

    Placeholders without a mapping entry are left untouched; they are the
    phantom-field candidates the validator reports.
    """
    return _substitute_quoted(spec_text, mapping.to_original())


def spec_to_placeholders(spec, mapping: NameMapping) -> str:
    """Compact-serialize a chart spec and rewrite field names to placeholders."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    text = json.dumps(spec, separators=(",", ":"), ensure_ascii=False)
    return _substitute_quoted(text, mapping.to_placeholder())


def generate_pairs(
    corpus: list[tuple[Dataset, dict | str]],
    samples_per_example: int,
    max_len: int = 500,
    rng=None,
) -> list[TrainingPair]:
    """Sample rows per example and emit (normalized record, normalized spec) pairs.

    Rows are drawn without replacement when the dataset has at least
    samples_per_example rows, with replacement otherwise. Sources or targets
    that cannot fit the tokenizer's max length are skipped with a warning,
    never truncated: a truncated JSON text is not a usable training string.
    """
    if samples_per_example < 1:
        raise ValueError("samples_per_example must be >= 1")
    rng = np.random.default_rng(rng)
    pairs = []
    for dataset, spec in corpus:
        schema = infer_schema(dataset)
        mapping = mapping_for_schema(schema)
        target = spec_to_placeholders(spec, mapping)
        if len(target) > max_len - 1:
            logger.warning(
                "skipping example for dataset %r: target length %d exceeds max %d",
                dataset.name, len(target), max_len - 1,
            )
            continue
        rows = dataset.records
        if len(rows) >= samples_per_example:
            idx = rng.permutation(len(rows))[:samples_per_example]
        else:
            idx = rng.integers(0, len(rows), size=samples_per_example)
        for i in idx:
            source, _ = forward_transform(rows[int(i)], schema)
            if len(source) > max_len - 1:
                logger.warning(
                    "skipping row %d of dataset %r: source length %d exceeds max %d",
                    int(i), dataset.name, len(source), max_len - 1,
                )
                continue
            pairs.append(TrainingPair(source=source, target=target))
    return pairs


def _parse_examples(obj, name: str, where) -> list[tuple[Dataset, dict]]:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: example file must contain a JSON object")
    if "data" in obj and "specs" in obj:
        records, specs = obj["data"], obj["specs"]
        if not isinstance(specs, list):
            raise CorpusError(f"{where}: specs must be an array")
    elif "data" in obj and "spec" in obj:
        records, specs = obj["data"], [obj["spec"]]
    elif isinstance(obj.get("data"), dict) and isinstance(obj["data"].get("values"), list):
        records = obj["data"]["values"]
        specs = [{k: v for k, v in obj.items() if k != "data"}]
    else:
        raise CorpusError(f"{where}: expected data with spec(s), or inline data.values")
    if not isinstance(records, list) or not all(isinstance(r, dict) for r in records):
        raise CorpusError(f"{where}: data must be an array of flat records")
    for spec in specs:
        if not isinstance(spec, dict):
            raise CorpusError(f"{where}: every spec must be a JSON object")
    dataset = Dataset(records=records, name=name)
    return [(dataset, spec) for spec in specs]


def load_example_file(path: Path) -> tuple[Dataset, dict]:
    """Read one corpus example: {"data": [...], "spec": {...}}.

    Vega-Lite files with inline data values are also accepted; the records are
    lifted out of data.values and the spec keeps everything else.
    """
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    examples = _parse_examples(obj, path.stem, path)
    if len(examples) != 1:
        raise CorpusError(f"{path}: holds {len(examples)} specs; use load_corpus_dir")
    return examples[0]


def load_corpus_dir(path: Path) -> list[tuple[Dataset, dict]]:
    """Load every *.json example in a directory, sorted by filename.

    A file may carry one spec ({"data", "spec"}) or several over the same
    records ({"data", "specs"}); grouped files expand to one example per spec.
    """
    path = Path(path)
    files = sorted(path.glob("*.json"))
    if not files:
        raise CorpusError(f"no *.json example files in {path}")
    out = []
    for f in files:
        obj = json.loads(f.read_text(encoding="utf-8"))
        out.extend(_parse_examples(obj, f.stem, f))
    return out
