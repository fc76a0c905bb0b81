import json
import random
import string

import pytest

from vegagen.corpus import FieldSchema
from vegagen.validator import (DEFAULT_GRAMMAR, EmptyBatch, GrammarSubset,
                               ValidityResult, check_language, score_batch,
                               validate_spec, validate_text)

SCHEMA = [FieldSchema("city", "string"), FieldSchema("when", "string"),
          FieldSchema("pop", "numeric"), FieldSchema("area", "numeric")]


def q(field, **extra):
    return {"field": field, "type": "quantitative", **extra}


def nom(field, **extra):
    return {"field": field, "type": "nominal", **extra}


# (name, spec, expect_visualization_valid, expect_phantoms)
GOLDEN = [
    ("bar count by category",
     {"mark": "bar", "encoding": {"x": nom("city"),
                                  "y": {"aggregate": "count", "type": "quantitative"}}},
     True, []),
    ("scatter",
     {"mark": "point", "encoding": {"x": q("pop"), "y": q("area")}},
     True, []),
    ("temporal line with timeUnit and mean",
     {"mark": "line", "encoding": {"x": {"field": "when", "type": "temporal",
                                         "timeUnit": "month"},
                                   "y": q("pop", aggregate="mean")}},
     True, []),
    ("binned histogram",
     {"mark": "bar", "encoding": {"x": q("pop", bin=True),
                                  "y": {"aggregate": "count", "type": "quantitative"}}},
     True, []),
    ("tick strip",
     {"mark": "tick", "encoding": {"x": q("area")}},
     True, []),
    ("faceted scatter",
     {"mark": "point", "encoding": {"x": q("pop"), "y": q("area"),
                                    "row": nom("city")}},
     True, []),
    ("count alone on y",
     {"mark": "bar", "encoding": {"y": {"aggregate": "count", "type": "quantitative"}}},
     True, []),
    ("sort directive accepted",
     {"mark": "bar", "encoding": {"x": nom("city", sort="ascending"),
                                  "y": q("pop", aggregate="sum")}},
     True, []),
    ("extra top-level key only warns",
     {"mark": "tick", "encoding": {"x": q("pop")}, "width": 300},
     True, []),
    ("ordinal on string field",
     {"mark": "point", "encoding": {"x": {"field": "city", "type": "ordinal"},
                                    "y": q("pop")}},
     True, []),
    ("unknown mark",
     {"mark": "donut", "encoding": {"x": q("pop")}},
     False, []),
    ("mark not a string",
     {"mark": {"type": "bar"}, "encoding": {"x": q("pop")}},
     False, []),
    ("mark missing",
     {"encoding": {"x": q("pop")}},
     False, []),
    ("encoding missing",
     {"mark": "bar"},
     False, []),
    ("encoding empty",
     {"mark": "bar", "encoding": {}},
     False, []),
    ("unknown channel",
     {"mark": "point", "encoding": {"theta": q("pop")}},
     False, []),
    ("channel not an object",
     {"mark": "point", "encoding": {"x": "pop"}},
     False, []),
    ("field without type",
     {"mark": "point", "encoding": {"x": {"field": "pop"}}},
     False, []),
    ("type without field or aggregate",
     {"mark": "point", "encoding": {"x": {"type": "quantitative"}}},
     False, []),
    ("count with a field",
     {"mark": "bar", "encoding": {"x": nom("city"),
                                  "y": {"aggregate": "count", "type": "nominal"}}},
     False, []),
    ("unknown aggregate",
     {"mark": "bar", "encoding": {"x": nom("city"), "y": q("pop", aggregate="mode")}},
     False, []),
    ("aggregate on non-quantitative channel",
     {"mark": "bar", "encoding": {"x": nom("city", aggregate="mean"),
                                  "y": q("pop")}},
     False, []),
    ("aggregate on string-kind field",
     {"mark": "bar", "encoding": {"x": nom("city"),
                                  "y": {"field": "when", "type": "quantitative",
                                        "aggregate": "mean"}}},
     False, []),
    ("bin on nominal channel",
     {"mark": "bar", "encoding": {"x": nom("city", bin=True),
                                  "y": {"aggregate": "count", "type": "quantitative"}}},
     False, []),
    ("timeUnit on quantitative channel",
     {"mark": "line", "encoding": {"x": q("pop", timeUnit="month"), "y": q("area")}},
     False, []),
    ("unknown timeUnit",
     {"mark": "line", "encoding": {"x": {"field": "when", "type": "temporal",
                                         "timeUnit": "fortnight"},
                                   "y": q("pop")}},
     False, []),
    ("quantitative on string field",
     {"mark": "point", "encoding": {"x": q("city"), "y": q("pop")}},
     False, []),
    ("nominal on numeric field",
     {"mark": "point", "encoding": {"x": nom("pop"), "y": q("area")}},
     False, []),
    ("phantom field is not a plotability failure",
     {"mark": "point", "encoding": {"x": q("ghost"), "y": q("pop")}},
     True, ["ghost"]),
    ("two phantoms deduplicated in order",
     {"mark": "point", "encoding": {"x": q("ghost"), "y": q("ghost"),
                                    "color": nom("spook")}},
     True, ["ghost", "spook"]),
    ("phantom on top of broken grammar stays invalid",
     {"mark": "donut", "encoding": {"x": q("ghost")}},
     False, ["ghost"]),
    ("transform filter with known field",
     {"mark": "tick", "encoding": {"x": q("pop")},
      "transform": [{"filter": "datum.pop > 0", "field": "pop"}]},
     True, []),
    ("transform phantom recorded",
     {"mark": "tick", "encoding": {"x": q("pop")},
      "transform": [{"filter": "x", "field": "missing"}]},
     True, ["missing"]),
    ("transform with unknown operation",
     {"mark": "tick", "encoding": {"x": q("pop")},
      "transform": [{"pivot": "x"}]},
     False, []),
    ("transform not an array",
     {"mark": "tick", "encoding": {"x": q("pop")}, "transform": {}},
     False, []),
]


@pytest.mark.parametrize("name,spec,want_valid,want_phantoms",
                         GOLDEN, ids=[g[0] for g in GOLDEN])
def test_golden(name, spec, want_valid, want_phantoms):
    res = validate_spec(spec, schema=SCHEMA)
    assert res.language_valid is True
    assert res.visualization_valid is want_valid, res.errors
    assert res.phantom_fields == want_phantoms
    if not want_valid:
        assert res.errors


def test_without_schema_no_field_checks():
    spec = {"mark": "point", "encoding": {"x": q("anything")}}
    res = validate_spec(spec)
    assert res.visualization_valid
    assert res.phantom_fields == []


def test_phantoms_recorded_in_errors_but_not_blocking():
    spec = {"mark": "point", "encoding": {"x": q("ghost"), "y": q("pop")}}
    res = validate_spec(spec, schema=SCHEMA)
    assert res.visualization_valid
    assert any("ghost" in msg for _, msg in res.errors)


def test_unrecognized_channel_property_warns():
    spec = {"mark": "point", "encoding": {"x": q("pop", scale={})}}
    res = validate_spec(spec, schema=SCHEMA)
    assert res.visualization_valid
    assert any("scale" in w for w in res.warnings)


def test_custom_grammar_subset():
    tiny = GrammarSubset(marks=frozenset({"bar"}))
    ok = {"mark": "bar", "encoding": {"x": q("pop")}}
    bad = {"mark": "line", "encoding": {"x": q("pop")}}
    assert validate_spec(ok, grammar=tiny).visualization_valid
    assert not validate_spec(bad, grammar=tiny).visualization_valid


class TestCheckLanguage:
    def test_object(self):
        ok, parsed = check_language('{"mark": "bar"}')
        assert ok and parsed == {"mark": "bar"}

    def test_broken_json(self):
        ok, reason = check_language('{"mark": ')
        assert not ok and isinstance(reason, str)

    def test_non_object(self):
        for text in ("[1,2]", '"x"', "3", "null", "true"):
            ok, reason = check_language(text)
            assert not ok

    def test_validate_text_propagates_language_failure(self):
        res = validate_text("not json at all")
        assert not res.language_valid
        assert not res.visualization_valid
        assert res.errors


class TestScoreBatch:
    def test_rates(self):
        results = [
            ValidityResult(True, True, [], [], []),
            ValidityResult(True, False, ["g"], [], []),
            ValidityResult(False, False, [], [], []),
            ValidityResult(True, True, ["g"], [], []),
        ]
        lang, vis, phantom = score_batch(results)
        assert lang == 0.75
        assert vis == 0.5
        assert phantom == 0.5

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            score_batch([])


def test_fuzz_no_crashes_and_implication():
    """validate_text must never raise, and plotable implies parseable."""
    rng = random.Random(0)
    seeds = [json.dumps(g[1], separators=(",", ":")) for g in GOLDEN[:10]]
    alphabet = string.printable
    for i in range(2000):
        choice = i % 3
        if choice == 0:
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        else:
            text = rng.choice(seeds)
            if choice == 1 and text:
                pos = rng.randrange(len(text))
                text = text[:pos] + rng.choice(alphabet) + text[pos + 1:]
        res = validate_text(text, schema=SCHEMA)
        if res.visualization_valid:
            assert res.language_valid
