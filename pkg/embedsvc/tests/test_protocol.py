"""Wire-protocol conformance: health/dim consistency, ordering, determinism,
and the four error codes."""

import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from embedsvc import ServiceConfig, create_app

from conftest import MAX_BATCH, png_b64, png_bytes


class TestHealth:
    def test_reports_model_dim_and_preprocess(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert isinstance(body["model"], str) and body["model"]
        assert isinstance(body["dim"], int) and body["dim"] >= 1
        assert "preprocess" in body

    def test_dim_matches_text_vectors(self, client):
        dim = client.get("/health").json()["dim"]
        resp = client.post_json("/embed_text", {"texts": ["a", "bb", "ccc"]})
        assert resp.status_code == 200
        body = resp.json()
        assert body["dim"] == dim
        assert all(len(v) == dim for v in body["vectors"])

    def test_dim_matches_image_vectors(self, client):
        dim = client.get("/health").json()["dim"]
        resp = client.post_json(
            "/embed_image",
            {"images": [{"id": "a", "b64": png_b64((200, 10, 10))}]},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["dim"] == dim
        assert len(body["vectors"][0]) == dim


class TestOrderPreservation:
    def test_text_vectors_match_request_order(self, client):
        texts = ["first view", "second view", "third view"]
        batch = client.post_json("/embed_text", {"texts": texts}).json()["vectors"]
        singles = [
            client.post_json("/embed_text", {"texts": [t]}).json()["vectors"][0]
            for t in texts
        ]
        for got, expected in zip(batch, singles):
            assert np.allclose(got, expected, atol=1e-9)

    def test_image_vectors_match_request_order(self, client):
        colors = [(250, 0, 0), (0, 250, 0), (0, 0, 250)]
        items = [{"id": f"img{i}", "b64": png_b64(c)} for i, c in enumerate(colors)]
        batch = client.post_json("/embed_image", {"images": items}).json()["vectors"]
        singles = [
            client.post_json("/embed_image", {"images": [item]}).json()["vectors"][0]
            for item in items
        ]
        for got, expected in zip(batch, singles):
            assert np.allclose(got, expected, atol=1e-9)


class TestDeterminism:
    def test_same_text_twice_is_identical(self, client):
        a = client.post_json("/embed_text", {"texts": ["a picture of a car"]}).json()
        b = client.post_json("/embed_text", {"texts": ["a picture of a car"]}).json()
        assert a == b

    def test_same_image_twice_is_identical(self, client):
        item = {"id": "x", "b64": png_b64((7, 99, 123))}
        a = client.post_json("/embed_image", {"images": [item]}).json()
        b = client.post_json("/embed_image", {"images": [item]}).json()
        assert a == b

    def test_image_self_similarity_is_one(self, client):
        item = {"id": "x", "b64": png_b64((40, 40, 40))}
        v = np.array(client.post_json("/embed_image", {"images": [item]}).json()["vectors"][0])
        cos = float(v @ v / (np.linalg.norm(v) ** 2))
        assert cos == pytest.approx(1.0, abs=1e-9)


class TestErrorCodes:
    def test_400_on_malformed_json(self, client):
        resp = client.post_raw("/embed_text", b"{not json")
        assert resp.status_code == 400

    def test_400_on_wrong_shape(self, client):
        assert client.post_json("/embed_text", {"texts": "not-a-list"}).status_code == 400
        assert client.post_json("/embed_text", {}).status_code == 400
        assert client.post_json("/embed_image", {"images": [{"no": "id"}]}).status_code == 400

    def test_413_over_batch_limit(self, client):
        limit = client.get("/health").json().get("max_batch", MAX_BATCH)
        texts = ["t"] * (limit + 1)
        assert client.post_json("/embed_text", {"texts": texts}).status_code == 413
        items = [{"id": str(i), "b64": png_b64((1, 1, 1))} for i in range(limit + 1)]
        assert client.post_json("/embed_image", {"images": items}).status_code == 413

    def test_422_on_undecodable_image(self, client):
        garbage = base64.b64encode(b"definitely not an image").decode("ascii")
        resp = client.post_json("/embed_image", {"images": [{"id": "bad", "b64": garbage}]})
        assert resp.status_code == 422
        assert "bad" in resp.json()["error"]

    def test_503_when_model_not_loaded(self):
        # protocol check on the implementation; independent of any deployment
        app = create_app(ServiceConfig(model="none"))
        with TestClient(app) as client:
            assert client.get("/health").status_code == 503
            assert client.post("/embed_text", json={"texts": ["x"]}).status_code == 503
            assert client.post("/embed_image", json={"images": []}).status_code == 503


class TestPathImages:
    def test_path_and_b64_embed_identically(self, client, stub_only, tmp_path):
        raw = png_bytes((120, 5, 200))
        path = tmp_path / "view.png"
        path.write_bytes(raw)
        via_path = client.post_json(
            "/embed_image", {"images": [{"id": "p", "path": str(path)}]}
        ).json()["vectors"][0]
        via_b64 = client.post_json(
            "/embed_image",
            {"images": [{"id": "b", "b64": base64.b64encode(raw).decode("ascii")}]},
        ).json()["vectors"][0]
        assert np.allclose(via_path, via_b64, atol=1e-12)

    def test_missing_path_is_undecodable(self, client, stub_only):
        resp = client.post_json(
            "/embed_image", {"images": [{"id": "gone", "path": "/no/such/file.png"}]}
        )
        assert resp.status_code == 422
