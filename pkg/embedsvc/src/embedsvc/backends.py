"""Embedding backends: the deterministic hash stub and real model loading."""

from __future__ import annotations

import hashlib
import io

import numpy as np
from PIL import Image

from .config import ServiceConfig

_RESAMPLE = {
    "nearest": Image.Resampling.NEAREST,
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
}


class BackendUnavailable(RuntimeError):
    """The configured model could not be loaded."""


class UndecodableImage(ValueError):
    """Raised with the offending item id when image bytes cannot be decoded."""

    def __init__(self, item_id: str, cause: str):
        super().__init__(f"undecodable image {item_id!r}: {cause}")
        self.item_id = item_id


def preprocess_image(raw: bytes, item_id: str, config: ServiceConfig) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except Exception as exc:
        raise UndecodableImage(item_id, str(exc)) from exc
    resample = _RESAMPLE.get(config.resample, Image.Resampling.BICUBIC)
    return image.convert("RGB").resize((config.resize, config.resize), resample)


class HashBackend:
    """Model-free deterministic embeddings from content hashes.

    Text hashes the UTF-8 string; images hash the preprocessed pixel bytes,
    so the same picture embeds identically whether sent by path or base64.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.model_name = "hash-stub"

    def _vector(self, material: bytes) -> np.ndarray:
        digest = hashlib.sha256(material).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        return np.vstack([self._vector(b"text:" + t.encode("utf-8")) for t in texts])

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        return np.vstack([self._vector(b"image:" + im.tobytes()) for im in images])


class SentenceTransformerBackend:
    """Real image-text model via sentence-transformers (e.g. clip-ViT-B-32)."""

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendUnavailable(f"sentence-transformers is not installed: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load model {model_id!r}: {exc}") from exc
        self.model_name = model_id
        self.dim = int(np.asarray(self._model.encode(["probe"])).shape[1])

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        return np.asarray(self._model.encode(texts, convert_to_numpy=True), dtype=float)

    def embed_images(self, images) -> np.ndarray:
        return np.asarray(self._model.encode(images, convert_to_numpy=True), dtype=float)


def create_backend(config: ServiceConfig):
    """Backend for the configured model; None means "model not loaded"."""
    if config.model == "none":
        return None
    if config.model == "hash":
        return HashBackend(config.hash_dim)
    try:
        return SentenceTransformerBackend(config.model)
    except BackendUnavailable:
        return None
