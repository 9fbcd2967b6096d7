"""Entry point: `bitpress-gateway serve|stdio [--seed N] [--train-steps N]`."""

from __future__ import annotations

import argparse
import sys

from .model import LanguageModelBackend


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bitpress-gateway")
    parser.add_argument("mode", choices=("serve", "stdio"))
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8321)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--train-steps", type=int, default=300)
    args = parser.parse_args(argv)

    backend = LanguageModelBackend(seed=args.seed, train_steps=args.train_steps)
    if args.mode == "stdio":
        from .stdio import serve_stdio
        serve_stdio(backend)
        return 0

    import uvicorn

    from .service import create_app
    print(f"serving {backend.model_id} on {args.host}:{args.port}", file=sys.stderr)
    uvicorn.run(create_app(backend), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
