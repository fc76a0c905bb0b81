"""Access to the data bundled with the package.

Two collections ship inside vegagen/data/:

* ``minicorpus/`` -- three small tables, each paired with 40 chart specs,
  used as training material.
* ``rdatasets/`` -- ten classic teaching tables (no specs), used as
  held-out inputs for evaluation and for the demo endpoint.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .corpus import CorpusError, Dataset, load_corpus_dir


class UnknownDataset(KeyError):
    """Requested bundled dataset does not exist."""


def _data_dir(name: str):
    return resources.files("vegagen").joinpath("data", name)


def bundled_corpus() -> list[tuple[Dataset, dict]]:
    """All mini-corpus examples, one (dataset, spec) pair per spec."""
    with resources.as_file(_data_dir("minicorpus")) as p:
        return load_corpus_dir(p)


def rdataset_names() -> list[str]:
    names = sorted(
        e.name[: -len(".json")]
        for e in _data_dir("rdatasets").iterdir()
        if e.name.endswith(".json")
    )
    if not names:
        raise CorpusError("no bundled rdatasets found")
    return names


def rdataset(name: str) -> Dataset:
    entry = _data_dir("rdatasets").joinpath(f"{name}.json")
    if not entry.is_file():
        raise UnknownDataset(name)
    obj = json.loads(entry.read_text(encoding="utf-8"))
    return Dataset(records=obj["data"], name=name)


def bundled_rdatasets() -> list[Dataset]:
    return [rdataset(n) for n in rdataset_names()]


def random_rdataset(rng: np.random.Generator | None = None) -> Dataset:
    """Uniformly pick one bundled held-out dataset."""
    rng = rng if rng is not None else np.random.default_rng()
    names = rdataset_names()
    return rdataset(names[int(rng.integers(len(names)))])
