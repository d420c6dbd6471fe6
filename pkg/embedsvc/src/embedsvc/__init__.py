"""Minimal image-text embedding service."""

from .app import create_app
from .backends import HashBackend, create_backend
from .config import ServiceConfig

__version__ = "0.1.0"
