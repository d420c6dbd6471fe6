import base64
import io
import os

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from embedsvc import ServiceConfig, create_app

MAX_BATCH = 8


class ClientAdapter:
    """Uniform facade over the in-process TestClient and a live deployment."""

    def __init__(self, impl, base_url: str = ""):
        self._impl = impl
        self._base = base_url

    def get(self, path: str):
        return self._impl.get(self._base + path)

    def post_json(self, path: str, payload):
        return self._impl.post(self._base + path, json=payload)

    def post_raw(self, path: str, body: bytes):
        return self._impl.post(
            self._base + path, content=body, headers={"Content-Type": "application/json"}
        ) if self._base == "" else self._impl.post(
            self._base + path, data=body, headers={"Content-Type": "application/json"}
        )


@pytest.fixture(scope="session")
def live_url() -> str:
    return os.environ.get("EMBEDSVC_URL", "")


@pytest.fixture(scope="session")
def client(live_url):
    """Protocol client: the hash-backend stub, or a real service when
    EMBEDSVC_URL is set."""
    if live_url:
        import requests

        yield ClientAdapter(requests.Session(), live_url.rstrip("/"))
        return
    app = create_app(ServiceConfig(model="hash", max_batch=MAX_BATCH, hash_dim=32, resize=16))
    with TestClient(app) as test_client:
        yield ClientAdapter(test_client)


@pytest.fixture(scope="session")
def stub_only(live_url):
    if live_url:
        pytest.skip("stub-specific check; running against a live service")


def png_bytes(color) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (4, 4), color).save(buf, format="PNG")
    return buf.getvalue()


def png_b64(color) -> str:
    return base64.b64encode(png_bytes(color)).decode("ascii")
