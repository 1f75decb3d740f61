"""Launch the sidecar: ``figforge-sidecar [--port N] [--model-dir DIR]``.

The port can also come from the FIGFORGE_SIDECAR_PORT environment
variable; the flag wins.
"""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import create_app
from .stubmodel import DEFAULT_EMBED_DIM


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figforge-sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("FIGFORGE_SIDECAR_PORT", "8020")))
    parser.add_argument("--embed-dim", type=int, default=DEFAULT_EMBED_DIM)
    parser.add_argument("--model-dir", default=None,
                        help="enable real-model mode with user-supplied weights")
    args = parser.parse_args(argv)

    app = create_app(mode="real" if args.model_dir else "stub",
                     model_dir=args.model_dir, embed_dim=args.embed_dim)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
