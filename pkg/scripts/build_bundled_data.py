#!/usr/bin/env python3
"""Regenerate the bundled data files under src/vegagen/data/.

Deterministic: running it twice produces byte-identical JSON. Every
mini-corpus spec is asserted visualization-valid against its own dataset
before anything is written.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from vegagen.corpus import Dataset, infer_schema  # noqa: E402
from vegagen.validator import validate_spec  # noqa: E402

DATA_DIR = ROOT / "src" / "vegagen" / "data"
SPECS_PER_DATASET = 40


def q(field, **extra):
    return {"field": field, "type": "quantitative", **extra}


def nom(field, **extra):
    return {"field": field, "type": "nominal", **extra}


def ordn(field, **extra):
    return {"field": field, "type": "ordinal", **extra}


def temp(field, **extra):
    return {"field": field, "type": "temporal", **extra}


def count():
    return {"aggregate": "count", "type": "quantitative"}


def spec(mark, **channels):
    return {"mark": mark, "encoding": dict(channels)}


# ---------------------------------------------------------------------------
# mini-corpus datasets


def city_metrics_rows():
    cities = [
        ("Lyon", "south", 513275, 47.9),
        ("Nantes", "west", 309346, 65.2),
        ("Lille", "north", 232787, 34.8),
        ("Bordeaux", "west", 252040, 49.4),
        ("Nice", "south", 342295, 71.9),
        ("Rennes", "west", 216815, 50.4),
        ("Reims", "north", 182460, 47.0),
        ("Toulon", "south", 171953, 42.8),
        ("Dijon", "east", 156920, 40.4),
        ("Angers", "west", 152960, 42.7),
        ("Nancy", "east", 104885, 15.0),
        ("Metz", "east", 116429, 41.9),
    ]
    return [
        {"city": c, "region": r, "population": p, "area": a}
        for c, r, p, a in cities
    ]


def city_metrics_specs():
    strings = ["city", "region"]
    nums = ["population", "area"]
    out = []
    for n in nums:
        for mark in ("point", "tick"):
            out.append(spec(mark, x=q(n)))
    for n in nums:
        out.append(spec("bar", x=q(n, bin=True), y=count()))
    for s in strings:
        for n in nums:
            for agg in ("mean", "sum", "max"):
                out.append(spec("bar", x=nom(s), y=q(n, aggregate=agg)))
    for s in strings:
        out.append(spec("bar", x=nom(s), y=count()))
    out.append(spec("point", x=q("population"), y=q("area")))
    out.append(spec("point", x=q("area"), y=q("population")))
    for s in strings:
        out.append(spec("point", x=q("population"), y=q("area"), color=nom(s)))
    for s in strings:
        for n in nums:
            out.append(spec("tick", x=q(n), y=nom(s)))
    out.append(spec("point", x=q("area"), y=q("population"), row=nom("region")))
    out.append(spec("point", x=q("area"), y=q("population"), column=nom("region")))
    out.append(spec("point", x=ordn("city"), y=q("population")))
    out.append(spec("point", x=ordn("region"), y=q("area")))
    out.append(spec("bar", y=nom("region"), x=q("population", aggregate="mean")))
    out.append(spec("bar", y=nom("city"), x=q("area", aggregate="sum")))
    out.append(spec("point", x=q("population"), y=q("area"), shape=nom("region")))
    out.append(spec("bar", x=nom("region"), y=q("population", aggregate="median")))
    out.append(spec("bar", x=nom("region"), y=q("area", aggregate="median")))
    out.append(spec("bar", x=nom("city"), y=q("population", aggregate="min")))
    out.append(spec("bar", x=nom("city"), y=q("area", aggregate="min")))
    out.append(spec("point", x=q("population"), color=nom("region")))
    return out


def climate_rows():
    rows = []
    temps = [4.1, 5.0, 8.7, 11.9, 15.8, 19.4, 21.6, 21.2, 17.5, 13.1, 7.9, 4.8, 5.3, 9.2]
    rain = [51.0, 41.2, 47.6, 65.3, 72.8, 58.1, 44.9, 49.5, 66.7, 78.2, 60.3, 55.8, 43.4, 50.1]
    dates = [f"2023-{m:02d}-15" for m in range(1, 13)] + ["2024-01-15", "2024-02-15"]
    for d, t, r in zip(dates, temps, rain):
        rows.append({"date": d, "temperature": t, "rainfall": r})
    return rows


def climate_specs():
    nums = ["temperature", "rainfall"]
    out = []
    for n in nums:
        out.append(spec("line", x=temp("date"), y=q(n)))
    for n in nums:
        out.append(spec("line", x=temp("date", timeUnit="month"), y=q(n, aggregate="mean")))
    for n in nums:
        out.append(spec("area", x=temp("date"), y=q(n)))
    for n in nums:
        out.append(spec("area", x=temp("date", timeUnit="month"), y=q(n, aggregate="mean")))
    for n in nums:
        for agg in ("sum", "mean", "max"):
            out.append(spec("bar", x=temp("date", timeUnit="month"), y=q(n, aggregate=agg)))
    for n in nums:
        out.append(spec("point", x=temp("date"), y=q(n)))
    out.append(spec("point", x=q("temperature"), y=q("rainfall")))
    out.append(spec("point", x=q("rainfall"), y=q("temperature")))
    for n in nums:
        out.append(spec("bar", x=q(n, bin=True), y=count()))
    for n in nums:
        for mark in ("point", "tick"):
            out.append(spec(mark, x=q(n)))
    out.append(spec("bar", x=temp("date", timeUnit="month"), y=count()))
    for n in nums:
        out.append(spec("tick", x=q(n), y=ordn("date")))
    for n in nums:
        out.append(spec("line", x=temp("date", timeUnit="yearmonth"), y=q(n, aggregate="mean")))
    for n in nums:
        out.append(spec("bar", x=temp("date", timeUnit="month"), y=q(n, aggregate="median")))
    out.append(spec("line", x=temp("date", timeUnit="month"), y=q("temperature", aggregate="min")))
    out.append(spec("line", x=temp("date", timeUnit="month"), y=q("temperature", aggregate="max")))
    out.append(spec("area", x=temp("date", timeUnit="month"), y=q("rainfall", aggregate="sum")))
    for n in nums:
        out.append(spec("point", x=temp("date", timeUnit="month"), y=q(n, aggregate="mean")))
    for n in nums:
        out.append(spec("area", x=temp("date", timeUnit="yearmonth"), y=q(n, aggregate="mean")))
    for n in nums:
        out.append(spec("line", x=temp("date", timeUnit="monthdate"), y=q(n)))
    return out


def readings_rows():
    rng = np.random.default_rng(1234)
    rows = []
    for _ in range(12):
        v = round(float(rng.uniform(3.0, 12.5)), 2)
        i = round(float(rng.uniform(0.1, 2.4)), 3)
        p = round(v * i * float(rng.uniform(0.92, 0.99)), 2)
        rows.append({"voltage": v, "current": i, "power": p})
    return rows


def readings_specs():
    nums = ["voltage", "current", "power"]
    pairs = [(a, b) for a in nums for b in nums if a != b]
    out = []
    for n in nums:
        for mark in ("point", "tick"):
            out.append(spec(mark, x=q(n)))
    for n in nums:
        out.append(spec("bar", x=q(n, bin=True), y=count()))
    for a, b in pairs:
        out.append(spec("point", x=q(a), y=q(b)))
    for a, b in pairs:
        third = next(n for n in nums if n not in (a, b))
        out.append(spec("point", x=q(a), y=q(b), size=q(third)))
    for a, b in pairs:
        out.append(spec("line", x=q(a), y=q(b)))
    for a, b in pairs:
        out.append(spec("bar", x=q(a, bin=True), y=q(b, aggregate="mean")))
    for n in nums:
        out.append(spec("bar", y=q(n, bin=True), x=count()))
    for n in nums:
        out.append(spec("tick", y=q(n)))
    out.append(spec("area", x=q("voltage"), y=q("power")))
    return out[:SPECS_PER_DATASET]


MINICORPUS = [
    ("city_metrics", city_metrics_rows, city_metrics_specs),
    ("climate", climate_rows, climate_specs),
    ("readings", readings_rows, readings_specs),
]


# ---------------------------------------------------------------------------
# held-out tables, modeled on the classic R teaching datasets


def rd_women():
    rows = []
    for h in range(58, 73):
        rows.append({"height": h, "weight": round(115 + 3.45 * (h - 58))})
    return rows


def rd_pressure():
    temps = list(range(0, 380, 20))
    press = [0.0002, 0.0012, 0.006, 0.03, 0.09, 0.27, 0.75, 1.85, 4.2, 8.8,
             17.3, 32.1, 57.0, 96.0, 157.0, 247.0, 376.0, 558.0, 806.0]
    return [{"temperature": t, "pressure": p} for t, p in zip(temps, press)]


def rd_cars():
    rng = np.random.default_rng(42)
    rows = []
    for s in range(4, 26):
        d = round(float(0.4 * s * s / 2 + 1.2 * s + rng.uniform(-4, 4)), 1)
        rows.append({"speed": s, "dist": max(d, 2.0)})
    return rows


def rd_faithful():
    rng = np.random.default_rng(7)
    rows = []
    for k in range(20):
        if k % 2 == 0:
            e = round(float(rng.uniform(1.7, 2.5)), 3)
            w = int(rng.uniform(47, 60))
        else:
            e = round(float(rng.uniform(3.8, 5.1)), 3)
            w = int(rng.uniform(75, 95))
        rows.append({"eruptions": e, "waiting": w})
    return rows


def rd_trees():
    rng = np.random.default_rng(99)
    rows = []
    for k in range(16):
        g = round(float(rng.uniform(8.3, 20.6)), 1)
        h = int(rng.uniform(63, 88))
        v = round(0.0018 * g * g * h + float(rng.uniform(-1.5, 1.5)), 1)
        rows.append({"girth": g, "height": h, "volume": max(v, 9.0)})
    return rows


def rd_toothgrowth():
    rng = np.random.default_rng(3)
    rows = []
    for supp in ("VC", "OJ"):
        for dose in (0.5, 1.0, 2.0):
            for _ in range(3):
                base = 7 + 9 * dose + (1.5 if supp == "OJ" else 0.0)
                rows.append({
                    "len": round(base + float(rng.uniform(-3, 3)), 1),
                    "supp": supp,
                    "dose": dose,
                })
    return rows


def rd_plantgrowth():
    rng = np.random.default_rng(11)
    rows = []
    for group, base in (("ctrl", 5.0), ("trt1", 4.6), ("trt2", 5.5)):
        for _ in range(6):
            rows.append({"weight": round(base + float(rng.uniform(-0.6, 0.6)), 2),
                         "group": group})
    return rows


def rd_iris():
    rng = np.random.default_rng(5)
    rows = []
    bases = {
        "setosa": (5.0, 3.4, 1.5, 0.2),
        "versicolor": (5.9, 2.8, 4.3, 1.3),
        "virginica": (6.6, 3.0, 5.6, 2.0),
    }
    for species, (sl, sw, pl, pw) in bases.items():
        for _ in range(5):
            rows.append({
                "sepal_length": round(sl + float(rng.uniform(-0.4, 0.4)), 1),
                "sepal_width": round(sw + float(rng.uniform(-0.3, 0.3)), 1),
                "petal_length": round(pl + float(rng.uniform(-0.4, 0.4)), 1),
                "petal_width": round(pw + float(rng.uniform(-0.2, 0.2)), 1),
                "species": species,
            })
    return rows


def rd_chickwts():
    rng = np.random.default_rng(23)
    rows = []
    feeds = [("casein", 324), ("horsebean", 160), ("linseed", 219),
             ("meatmeal", 277), ("soybean", 246), ("sunflower", 329)]
    for feed, base in feeds:
        for _ in range(3):
            rows.append({"weight": int(base + rng.uniform(-45, 45)), "feed": feed})
    return rows


def rd_sleep():
    rng = np.random.default_rng(31)
    rows = []
    for group, base in (("g1", 0.75), ("g2", 2.33)):
        for _ in range(8):
            rows.append({"extra": round(base + float(rng.uniform(-1.8, 1.8)), 1),
                         "group": group})
    return rows


RDATASETS = [
    ("women", rd_women),
    ("pressure", rd_pressure),
    ("cars", rd_cars),
    ("faithful", rd_faithful),
    ("trees", rd_trees),
    ("toothgrowth", rd_toothgrowth),
    ("plantgrowth", rd_plantgrowth),
    ("iris", rd_iris),
    ("chickwts", rd_chickwts),
    ("sleep", rd_sleep),
]


def dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def main() -> None:
    mini_dir = DATA_DIR / "minicorpus"
    rd_dir = DATA_DIR / "rdatasets"
    mini_dir.mkdir(parents=True, exist_ok=True)
    rd_dir.mkdir(parents=True, exist_ok=True)

    total = 0
    for name, make_rows, make_specs in MINICORPUS:
        rows = make_rows()
        specs = make_specs()
        assert len(specs) == SPECS_PER_DATASET, (name, len(specs))
        assert len({json.dumps(s, sort_keys=True) for s in specs}) == len(specs), name
        schema = infer_schema(Dataset(records=rows, name=name))
        for s in specs:
            res = validate_spec(s, schema=schema)
            assert res.language_valid and res.visualization_valid, (name, s, res.errors)
            assert not res.phantom_fields, (name, s)
        dump(mini_dir / f"{name}.json", {"data": rows, "specs": specs})
        total += len(specs)
        print(f"minicorpus/{name}.json: {len(rows)} rows, {len(specs)} specs")

    for name, make_rows in RDATASETS:
        rows = make_rows()
        infer_schema(Dataset(records=rows, name=name))
        dump(rd_dir / f"{name}.json", {"data": rows})
        print(f"rdatasets/{name}.json: {len(rows)} rows")

    print(f"total corpus examples: {total}")


if __name__ == "__main__":
    main()
