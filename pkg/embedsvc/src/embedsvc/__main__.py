"""Run the embedding service: python -m embedsvc [--model hash] [--port 8490]."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embedsvc", description=__doc__)
    parser.add_argument("--model", default="hash",
                        help="hash (stub), none, or a sentence-transformers model id")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8490)
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--hash-dim", type=int, default=64)
    parser.add_argument("--resize", type=int, default=224)
    args = parser.parse_args(argv)
    config = ServiceConfig(
        model=args.model, host=args.host, port=args.port,
        max_batch=args.max_batch, hash_dim=args.hash_dim, resize=args.resize,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
