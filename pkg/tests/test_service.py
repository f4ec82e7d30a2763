import json
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np
import pytest

jsonschema = pytest.importorskip("jsonschema")
from fastapi.testclient import TestClient

from stpn.service import create_app


def load_schema(name: str) -> dict:
    with resources.files("stpn.schemas").joinpath(name).open() as f:
        return json.load(f)


def check(payload: dict, schema_name: str) -> None:
    jsonschema.validate(payload, load_schema(schema_name))


@pytest.fixture(scope="module")
def client(trained_synth, synth_small):
    ckpt, _ = trained_synth
    bundle, graph, _ = synth_small
    app = create_app(ckpt, bundle, graph)
    with TestClient(app, raise_server_exceptions=False) as c:
        c.bundle = bundle
        c.truth = synth_small[2]
        yield c


def window_start(bundle, offset=0):
    return bundle.delays.time_axis[bundle.split.test[0] + offset]


class TestEndpoints:
    def test_model_info_schema(self, client):
        r = client.get("/api/model")
        assert r.status_code == 200
        check(r.json(), "model_info.schema.json")
        assert r.json()["config"]["n_airports"] == 8

    def test_airports_schema_and_count(self, client):
        r = client.get("/api/airports")
        assert r.status_code == 200
        doc = r.json()
        check(doc, "airports.schema.json")
        assert len(doc["airports"]) == 8
        codes = [a["code"] for a in doc["airports"]]
        assert len(set(codes)) == 8

    def test_predict_by_window(self, client):
        r = client.post("/api/predict", json={"window_start": window_start(client.bundle)})
        assert r.status_code == 200
        doc = r.json()
        check(doc, "prediction.schema.json")
        pred = np.asarray(doc["prediction"])
        assert pred.shape == (8, 12, 2)
        assert np.all(np.isfinite(pred))

    def test_predict_by_arrays(self, client):
        rng = np.random.default_rng(0)
        r = client.post(
            "/api/predict",
            json={
                "delays": rng.normal(5, 3, size=(8, 12, 2)).tolist(),
                "weather_codes": rng.integers(0, 4, size=(8, 12)).tolist(),
            },
        )
        assert r.status_code == 200
        doc = r.json()
        check(doc, "prediction.schema.json")
        assert np.asarray(doc["prediction"]).shape == (8, 12, 2)

    def test_predict_missing_fields_is_bad_request(self, client):
        r = client.post("/api/predict", json={})
        assert r.status_code == 400
        check(r.json(), "problem.schema.json")
        assert r.json()["code"] == "bad_request"

    def test_predict_wrong_shape_is_bad_request(self, client):
        r = client.post(
            "/api/predict",
            json={
                "delays": np.zeros((8, 5, 2)).tolist(),
                "weather_codes": np.zeros((8, 5), dtype=int).tolist(),
            },
        )
        assert r.status_code == 400
        assert r.json()["code"] == "bad_request"

    def test_malformed_json_is_bad_request(self, client):
        r = client.post(
            "/api/intervene", content=b"{ not json", headers={"content-type": "application/json"}
        )
        assert r.status_code == 400
        check(r.json(), "problem.schema.json")
        assert r.json()["code"] == "bad_request"

    def test_intervene_empty_set_zero_delta(self, client):
        r = client.post(
            "/api/intervene", json={"window_start": window_start(client.bundle), "airports": []}
        )
        assert r.status_code == 200
        doc = r.json()
        check(doc, "intervention.schema.json")
        assert np.all(np.asarray(doc["delta"]) == 0.0)

    def test_intervene_real_airport(self, client):
        src = client.truth["source_airport"]
        r = client.post(
            "/api/intervene", json={"window_start": window_start(client.bundle), "airports": [src]}
        )
        assert r.status_code == 200
        doc = r.json()
        check(doc, "intervention.schema.json")
        delta = np.asarray(doc["delta"])
        np.testing.assert_array_equal(
            delta, np.asarray(doc["factual"]) - np.asarray(doc["intervened"])
        )
        assert doc["intervened_airports"] == [src]

    def test_intervene_unknown_airport_code(self, client):
        r = client.post(
            "/api/intervene",
            json={"window_start": window_start(client.bundle), "airports": ["XXX"]},
        )
        assert r.status_code == 422
        check(r.json(), "problem.schema.json")
        assert r.json()["code"] == "unknown_airport"
        assert "AP00" in r.json()["message"]

    def test_intervene_unknown_window(self, client):
        r = client.post(
            "/api/intervene", json={"window_start": "1999-01-01T00:00", "airports": []}
        )
        assert r.status_code == 422
        assert r.json()["code"] == "bad_window"

    def test_attention_schema(self, client):
        r = client.get("/api/attention")
        assert r.status_code == 200
        doc = r.json()
        check(doc, "attention.schema.json")
        for layer in doc["layers"]:
            for head in layer["heads"]:
                w = np.asarray(head["weights"])
                np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-9)

    def test_concurrent_predicts_byte_identical(self, client):
        body = {"window_start": window_start(client.bundle, offset=3)}

        def call(_):
            return client.post("/api/predict", json=body).content

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(call, range(8)))
        assert all(r == results[0] for r in results)

    def test_requests_do_not_mutate_state(self, client):
        before = client.get("/api/model").content
        client.post("/api/intervene", json={"window_start": window_start(client.bundle), "airports": ["AP00"]})
        client.post("/api/predict", json={"window_start": window_start(client.bundle)})
        assert client.get("/api/model").content == before
