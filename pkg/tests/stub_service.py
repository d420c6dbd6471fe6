"""In-process stub of the embedding-service wire protocol for integration tests.

Serves deterministic fixed vectors derived from content hashes, so scores are
reproducible and cosine values can be recomputed independently.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

STUB_DIM = 16
STUB_MAX_BATCH = 8


def stub_vector(kind: str, content: str, dim: int = STUB_DIM) -> np.ndarray:
    digest = hashlib.sha256(f"{kind}:{content}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"model": "stub-fixed", "dim": STUB_DIM})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            self._send(400, {"error": "malformed JSON"})
            return
        if self.path == "/embed_text":
            texts = payload.get("texts")
            if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                self._send(400, {"error": "texts must be a list of strings"})
                return
            if len(texts) > STUB_MAX_BATCH:
                self._send(413, {"error": "batch too large"})
                return
            vectors = [stub_vector("text", t).tolist() for t in texts]
            self._send(200, {"dim": STUB_DIM, "vectors": vectors})
        elif self.path == "/embed_image":
            images = payload.get("images")
            if not isinstance(images, list):
                self._send(400, {"error": "images must be a list"})
                return
            if len(images) > STUB_MAX_BATCH:
                self._send(413, {"error": "batch too large"})
                return
            vectors = []
            for item in images:
                content = item.get("path") or item.get("b64")
                if not isinstance(item, dict) or "id" not in item or content is None:
                    self._send(400, {"error": "image items need id and path|b64"})
                    return
                if str(content).endswith(".broken"):
                    self._send(422, {"error": f"undecodable image {item['id']}"})
                    return
                vectors.append(stub_vector("image", str(content)).tolist())
            self._send(200, {"dim": STUB_DIM, "vectors": vectors})
        else:
            self._send(404, {"error": "not found"})


class StubService:
    """Context manager running the stub on an ephemeral port."""

    def __enter__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
        return False
