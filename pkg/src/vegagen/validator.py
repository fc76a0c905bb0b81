"""Validity checks for generated chart specifications.

Two layers: language validity (the text parses as a JSON object) and
visualization validity (the object stays inside the grammar subset the
training corpus uses and its type combinations are plotable). Field
references are additionally checked against a dataset schema when one is
supplied; a reference to a nonexistent field is recorded as a phantom with a
diagnostic entry, but does not by itself make the spec unplotable, since
renderers simply drop the missing column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import NUMERIC_KIND, STRING_KIND

__all__ = [
    "EmptyBatch",
    "GrammarSubset",
    "ValidityResult",
    "check_language",
    "score_batch",
    "validate_spec",
    "validate_text",
]


class EmptyBatch(ValueError):
    """score_batch was handed no results."""


@dataclass(frozen=True)
class GrammarSubset:
    """The corpus's slice of the chart grammar, as closed enumerations."""

    marks: frozenset = frozenset({"area", "bar", "circle", "line", "point", "tick"})
    channels: frozenset = frozenset({"x", "y", "color", "shape", "size", "row", "column"})
    field_types: frozenset = frozenset({"quantitative", "nominal", "ordinal", "temporal"})
    aggregates: frozenset = frozenset({
        "count", "sum", "mean", "average", "median", "min", "max",
        "stdev", "variance", "distinct", "missing", "valid", "q1", "q3",
    })
    time_units: frozenset = frozenset({
        "year", "quarter", "month", "date", "day", "hours", "minutes",
        "seconds", "milliseconds", "yearmonth", "yearmonthdate", "monthdate",
        "hoursminutes",
    })
    field_transforms: frozenset = frozenset({"aggregate", "bin", "sort", "timeUnit"})
    view_transforms: frozenset = frozenset({"aggregate", "bin", "calculate", "filter", "timeUnit"})
    top_level_keys: frozenset = frozenset({"mark", "encoding", "transform", "data"})

    # declared channel type allowed per inferred column kind
    kind_types: tuple = (
        (NUMERIC_KIND, frozenset({"quantitative"})),
        (STRING_KIND, frozenset({"nominal", "ordinal", "temporal"})),
    )

    def types_for_kind(self, kind: str) -> frozenset:
        for k, types in self.kind_types:
            if k == kind:
                return types
        return self.field_types


DEFAULT_GRAMMAR = GrammarSubset()

_CHANNEL_KEYS = frozenset({"field", "type", "aggregate", "bin", "sort", "timeUnit"})
_SORT_VALUES = frozenset({"ascending", "descending"})


@dataclass
class ValidityResult:
    language_valid: bool
    visualization_valid: bool
    phantom_fields: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (path, message) pairs
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "language_valid": self.language_valid,
            "visualization_valid": self.visualization_valid,
            "phantom_fields": list(self.phantom_fields),
            "errors": [list(e) for e in self.errors],
            "warnings": list(self.warnings),
        }


def check_language(text: str):
    """(True, parsed object) iff text is a JSON object; else (False, reason)."""
    try:
        parsed = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        return False, str(e)
    if not isinstance(parsed, dict):
        return False, f"top-level value is {type(parsed).__name__}, not an object"
    return True, parsed


def _check_channel(name, chan, grammar, kinds, blocking, phantoms, warnings):
    path = f"encoding.{name}"
    if not isinstance(chan, dict):
        blocking.append((path, "channel definition must be an object"))
        return
    for key in chan:
        if key not in _CHANNEL_KEYS:
            warnings.append(f"{path}.{key}: unrecognized channel property")

    field_name = chan.get("field")
    ftype = chan.get("type")
    aggregate = chan.get("aggregate")

    if field_name is not None and not isinstance(field_name, str):
        blocking.append((f"{path}.field", "field must be a string"))
        field_name = None

    if aggregate is not None:
        if not isinstance(aggregate, str) or aggregate not in grammar.aggregates:
            blocking.append((f"{path}.aggregate", f"unknown aggregate {aggregate!r}"))
            aggregate = None

    if aggregate == "count":
        # count is complete without a field; a declared type must be quantitative
        if ftype is not None and ftype != "quantitative":
            blocking.append((f"{path}.type", "count aggregate is quantitative"))
    else:
        if field_name is None:
            blocking.append((path, "channel needs a field (or a count aggregate)"))
        if ftype is None:
            blocking.append((f"{path}.type", "channel needs a declared type"))
    if ftype is not None and ftype not in grammar.field_types:
        blocking.append((f"{path}.type", f"unknown type {ftype!r}"))
        ftype = None

    if aggregate is not None and aggregate != "count":
        if ftype is not None and ftype != "quantitative":
            blocking.append(
                (f"{path}.aggregate", f"aggregate {aggregate!r} needs a quantitative channel"))

    if "bin" in chan:
        bin_v = chan["bin"]
        if not (isinstance(bin_v, bool) or isinstance(bin_v, dict)):
            blocking.append((f"{path}.bin", "bin must be a flag or an object"))
        elif bin_v and ftype is not None and ftype != "quantitative":
            blocking.append((f"{path}.bin", "bin applies to quantitative channels only"))

    if "timeUnit" in chan:
        tu = chan["timeUnit"]
        if not isinstance(tu, str) or tu not in grammar.time_units:
            blocking.append((f"{path}.timeUnit", f"unknown timeUnit {tu!r}"))
        elif ftype is not None and ftype != "temporal":
            blocking.append((f"{path}.timeUnit", "timeUnit applies to temporal channels only"))

    if "sort" in chan:
        sort_v = chan["sort"]
        if not (sort_v is None or (isinstance(sort_v, str) and sort_v in _SORT_VALUES)):
            warnings.append(f"{path}.sort: unrecognized sort directive")

    if field_name is not None and kinds is not None:
        if field_name not in kinds:
            phantoms.append(field_name)
            # recorded as a diagnostic, not a plotability failure
            return f"{path}.field", f"references unknown field {field_name!r}"
        kind = kinds[field_name]
        if aggregate is not None and aggregate != "count" and kind != NUMERIC_KIND:
            blocking.append(
                (f"{path}.aggregate", f"aggregate on {kind} field {field_name!r}"))
        if ftype is not None and ftype not in grammar.types_for_kind(kind):
            blocking.append(
                (f"{path}.type", f"{ftype} type on {kind} field {field_name!r}"))
    return None


def _check_transforms(transform, grammar, kinds, blocking, phantoms):
    if not isinstance(transform, list):
        blocking.append(("transform", "transform must be an array"))
        return []
    phantom_entries = []
    for i, op in enumerate(transform):
        path = f"transform[{i}]"
        if not isinstance(op, dict):
            blocking.append((path, "transform entry must be an object"))
            continue
        if not any(k in grammar.view_transforms for k in op):
            blocking.append((path, "transform entry names no known operation"))
        ref = op.get("field")
        if isinstance(ref, str) and kinds is not None and ref not in kinds:
            phantoms.append(ref)
            phantom_entries.append((f"{path}.field", f"references unknown field {ref!r}"))
    return phantom_entries


def validate_spec(spec: dict, grammar: GrammarSubset = DEFAULT_GRAMMAR,
                  schema=None) -> ValidityResult:
    """Classify one parsed spec against the grammar subset.

    schema, when given, is the dataset's list of FieldSchema; field
    references are then checked for existence (phantoms) and for
    type/kind consistency.
    """
    blocking: list = []
    phantoms: list = []
    phantom_entries: list = []
    warnings: list = []
    kinds = {f.name: f.kind for f in schema} if schema is not None else None

    if not isinstance(spec, dict):
        return ValidityResult(False, False, [], [("", "spec is not an object")], [])

    for key in spec:
        if key not in grammar.top_level_keys:
            warnings.append(f"{key}: unrecognized top-level property")

    mark = spec.get("mark")
    if mark is None:
        blocking.append(("mark", "mark is required"))
    elif not isinstance(mark, str):
        blocking.append(("mark", "mark must be a string"))
    elif mark not in grammar.marks:
        blocking.append(("mark", f"unknown mark {mark!r}"))

    encoding = spec.get("encoding")
    if encoding is None:
        blocking.append(("encoding", "encoding is required"))
    elif not isinstance(encoding, dict) or not encoding:
        blocking.append(("encoding", "encoding must map at least one channel"))
    else:
        for name, chan in encoding.items():
            if name not in grammar.channels:
                blocking.append((f"encoding.{name}", f"unknown channel {name!r}"))
                continue
            entry = _check_channel(name, chan, grammar, kinds, blocking,
                                   phantoms, warnings)
            if entry is not None:
                phantom_entries.append(entry)

    if "transform" in spec:
        phantom_entries.extend(
            _check_transforms(spec["transform"], grammar, kinds, blocking, phantoms))

    # phantom references are diagnostics; only grammar/type faults block
    seen = []
    for p in phantoms:
        if p not in seen:
            seen.append(p)
    return ValidityResult(
        language_valid=True,
        visualization_valid=not blocking,
        phantom_fields=seen,
        errors=blocking + phantom_entries,
        warnings=warnings,
    )


def validate_text(text: str, grammar: GrammarSubset = DEFAULT_GRAMMAR,
                  schema=None) -> ValidityResult:
    """check_language followed by validate_spec, as one result."""
    ok, parsed = check_language(text)
    if not ok:
        return ValidityResult(False, False, [], [("", parsed)], [])
    return validate_spec(parsed, grammar, schema)


def score_batch(results) -> tuple:
    """(language rate, visualization rate, phantom rate) over results."""
    results = list(results)
    if not results:
        raise EmptyBatch("no results to score")
    n = len(results)
    lang = sum(1 for r in results if r.language_valid) / n
    vis = sum(1 for r in results if r.visualization_valid) / n
    phantom = sum(1 for r in results if r.phantom_fields) / n
    return lang, vis, phantom
