"""Run the service: python -m embed_service --model stub --port 8901

``--model`` accepts ``stub``, ``stub:<dim>x<side>``, or any transformers
model id / local checkpoint path (e.g. openai/clip-vit-base-patch32,
google/siglip2-base-patch32-256).  Real checkpoints load in the
background; /v1/info serves 503 until they are ready.
"""

import argparse

import uvicorn

from .app import create_app
from .encoders import build_encoder


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-service", description=__doc__)
    parser.add_argument("--model", default="stub")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    args = parser.parse_args(argv)

    app = create_app(loader=lambda: build_encoder(args.model))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
