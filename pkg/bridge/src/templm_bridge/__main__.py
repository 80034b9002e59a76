"""Run the bridge: python -m templm_bridge --port 8808 [--corpus train.jsonl]"""

from __future__ import annotations

import argparse
import os

import uvicorn

from .model import CharTransformer, DEFAULT_VOCAB, WordScorer, build_vocab_from_corpus
from .server import create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="templm-bridge")
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("TEMPLM_BRIDGE_PORT", "8808")))
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--corpus", help="JSONL corpus to build the word vocabulary from")
    parser.add_argument("--seed", type=int, default=1234, help="model init seed")
    parser.add_argument("--dim", type=int, default=48)
    parser.add_argument("--layers", type=int, default=2)
    args = parser.parse_args(argv)

    vocab = build_vocab_from_corpus(args.corpus) if args.corpus else DEFAULT_VOCAB
    model = CharTransformer(dim=args.dim, layers=args.layers, seed=args.seed)
    app = create_app(WordScorer(model, vocab))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
