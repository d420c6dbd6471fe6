"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServiceConfig:
    """Model selection, limits, and the image preprocessing policy.

    ``model`` chooses the backend: "hash" is the deterministic no-model stub,
    "none" simulates an unloaded model (every inference answers 503), and any
    other value is treated as a sentence-transformers model identifier, e.g.
    "clip-ViT-B-32".  Fine-tuned checkpoints are swapped here, not via the API.
    """

    model: str = "hash"
    host: str = "127.0.0.1"
    port: int = 8490
    max_batch: int = 64
    hash_dim: int = 64
    resize: int = 224
    resample: str = "bicubic"

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max batch size must be >= 1")
        if self.hash_dim < 1:
            raise ValueError("hash backend dimension must be >= 1")
        if self.resize < 1:
            raise ValueError("resize target must be >= 1")

    @property
    def preprocess(self) -> dict:
        return {"resize": self.resize, "resample": self.resample, "mode": "RGB"}
