"""Run the service with the transformers-backed bundle."""

from __future__ import annotations

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main() -> int:
    config = ServiceConfig.from_env()

    def load():
        from .hf import TransformersBundle

        return TransformersBundle(config)

    uvicorn.run(create_app(load, config), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
