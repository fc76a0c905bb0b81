"""HTTP service tests: status codes, payload shape, replay determinism."""

import json

import pytest
from fastapi.testclient import TestClient

from conftest import TINY_SPEC
from vegagen.datasets import rdataset, rdataset_names
from vegagen.service import CHECKPOINT_ENV, checkpoint_digest, create_app

WOMEN = rdataset("women")
EXPECTED_SPEC = json.dumps(TINY_SPEC, separators=(",", ":"))


@pytest.fixture()
def bare_client(monkeypatch):
    monkeypatch.delenv(CHECKPOINT_ENV, raising=False)
    return TestClient(create_app())


@pytest.fixture(scope="module")
def model_client(tiny_checkpoint):
    path, _ = tiny_checkpoint
    return TestClient(create_app(str(path)))


class TestWithoutModel:
    def test_health_degraded(self, bare_client):
        r = bare_client.get("/health")
        assert r.status_code == 200
        assert r.json() == {
            "status": "degraded",
            "model_loaded": False,
            "checkpoint_id": "",
        }

    def test_random_dataset_still_served(self, bare_client):
        r = bare_client.get("/datasets/random")
        assert r.status_code == 200
        body = r.json()
        assert body["name"] in rdataset_names()
        assert isinstance(body["data"], list) and body["data"]
        assert all(isinstance(rec, dict) for rec in body["data"])

    def test_generate_answers_503(self, bare_client):
        r = bare_client.post("/generate", json={"data": WOMEN.records})
        assert r.status_code == 503
        assert "no model" in r.json()["detail"]


class TestGenerate:
    def test_health_ok(self, model_client, tiny_checkpoint):
        path, _ = tiny_checkpoint
        body = model_client.get("/health").json()
        assert body["status"] == "ok"
        assert body["model_loaded"] is True
        assert body["checkpoint_id"] == checkpoint_digest(path)
        assert len(body["checkpoint_id"]) == 16

    def test_inline_data_round_trip(self, model_client):
        r = model_client.post("/generate",
                              json={"data": WOMEN.records, "beam_width": 15})
        assert r.status_code == 200
        body = r.json()
        assert 1 <= len(body["candidates"]) <= 15
        top = body["candidates"][0]
        assert top["spec_text"] == EXPECTED_SPEC
        assert top["language_valid"] is True
        assert top["visualization_valid"] is True
        assert top["phantom_fields"] == []
        scores = [c["score"] for c in body["candidates"]]
        assert scores == sorted(scores, reverse=True)
        assert body["schema"] == [
            {"name": "height", "kind": "numeric"},
            {"name": "weight", "kind": "numeric"},
        ]
        assert body["dataset_name"] == "inline"
        assert body["row_index"] == 0
        assert body["checkpoint_id"] == model_client.get("/health").json()["checkpoint_id"]

    def test_bundled_dataset_by_name(self, model_client):
        r = model_client.post("/generate",
                              json={"dataset": "women", "beam_width": 1,
                                    "row_index": 3})
        assert r.status_code == 200
        body = r.json()
        assert body["dataset_name"] == "women"
        assert body["row_index"] == 3
        assert body["candidates"][0]["spec_text"] == EXPECTED_SPEC

    def test_max_candidates_truncates(self, model_client):
        r = model_client.post("/generate",
                              json={"data": WOMEN.records, "beam_width": 5,
                                    "max_candidates": 1})
        assert r.status_code == 200
        assert len(r.json()["candidates"]) == 1

    def test_replay_is_deterministic(self, model_client):
        req = {"data": WOMEN.records, "beam_width": 4, "row_index": 2}
        first = model_client.post("/generate", json=req)
        second = model_client.post("/generate", json=req)
        assert first.status_code == second.status_code == 200
        assert first.json() == second.json()


class TestGenerateRejections:
    def post(self, client, payload):
        return client.post("/generate", json=payload)

    def test_data_and_dataset_together(self, model_client):
        r = self.post(model_client, {"data": WOMEN.records, "dataset": "women"})
        assert r.status_code == 400
        assert "exactly one" in r.json()["detail"]

    def test_neither_data_nor_dataset(self, model_client):
        assert self.post(model_client, {}).status_code == 400

    @pytest.mark.parametrize("width", [0, -3, 65, 1000])
    def test_beam_width_out_of_range(self, model_client, width):
        r = self.post(model_client, {"dataset": "women", "beam_width": width})
        assert r.status_code == 400
        assert "beam_width" in r.json()["detail"]

    def test_max_candidates_zero(self, model_client):
        r = self.post(model_client, {"dataset": "women", "max_candidates": 0})
        assert r.status_code == 400

    def test_unknown_bundled_dataset(self, model_client):
        r = self.post(model_client, {"dataset": "nope"})
        assert r.status_code == 400
        assert "nope" in r.json()["detail"]

    def test_empty_data_array(self, model_client):
        assert self.post(model_client, {"data": []}).status_code == 400

    def test_ragged_records(self, model_client):
        r = self.post(model_client, {"data": [{"a": 1}, {"b": 2}]})
        assert r.status_code == 400

    @pytest.mark.parametrize("idx", [-1, 15, 99])
    def test_row_index_out_of_bounds(self, model_client, idx):
        r = self.post(model_client, {"data": WOMEN.records, "row_index": idx})
        assert r.status_code == 400
        assert "row_index" in r.json()["detail"]

    def test_malformed_body_types(self, model_client):
        r = self.post(model_client, {"data": WOMEN.records, "beam_width": "wide"})
        assert r.status_code == 400
        assert "malformed" in r.json()["detail"]

    def test_non_dict_records(self, model_client):
        assert self.post(model_client, {"data": [1, 2, 3]}).status_code == 400

    def test_non_json_body(self, model_client):
        r = model_client.post("/generate", content=b"not json",
                              headers={"content-type": "application/json"})
        assert r.status_code == 400

    def test_oversized_row_answers_413(self, model_client):
        row = {"note": "x" * 500, "height": 1}
        r = self.post(model_client, {"data": [row]})
        assert r.status_code == 413
        assert "characters" in r.json()["detail"]


class TestCheckpointFromEnvironment:
    def test_env_variable_loads_model(self, tiny_checkpoint, monkeypatch):
        path, _ = tiny_checkpoint
        monkeypatch.setenv(CHECKPOINT_ENV, str(path))
        client = TestClient(create_app())
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert body["checkpoint_id"] == checkpoint_digest(path)

    def test_argument_beats_environment(self, tiny_checkpoint, tmp_path, monkeypatch):
        path, _ = tiny_checkpoint
        monkeypatch.setenv(CHECKPOINT_ENV, str(tmp_path / "missing.bin"))
        client = TestClient(create_app(str(path)))
        assert client.get("/health").json()["status"] == "ok"
