#!/usr/bin/env python3
"""Regenerate the bridge conformance vectors from the in-process n-gram.

Usage: python3 scripts/make_bridge_vectors.py

Reads bridge/vectors/corpus.txt, scores a fixed set of requests with the
library scorer, and rewrites bridge/vectors/vectors.jsonl.  The output is
committed; the bridge replays it to prove wire-level agreement.
"""

import json
import sys
from pathlib import Path

from latrescore.scoring import ngram_train

ROOT = Path(__file__).resolve().parent.parent
VECTOR_DIR = ROOT / "bridge" / "vectors"

REQUESTS = [
    ("", ["the cat sat", "the dog ran fast"]),
    ("the cat", ["sat on the mat", "ran"]),
    ("héllo", ["wörld", "the wörld"]),
    ("नमस्ते", ["दुनिया", "cat"]),
    ("", ["completely unseen words here"]),
    ("the dog and", ["the cat", "runs and runs", "नमस्ते दुनिया"]),
    ("wörld of", ["the cat", "the dog"]),
    ("", ["héllo wörld नमस्ते"]),
    ("mat on the", ["floor"]),
    ("runs", ["and runs and runs", "fast"]),
]


def main() -> int:
    corpus = [
        line
        for line in (VECTOR_DIR / "corpus.txt").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    scorer = ngram_train(corpus, order=2)
    out = VECTOR_DIR / "vectors.jsonl"
    with open(out, "w", encoding="utf-8") as fh:
        for i, (context, targets) in enumerate(REQUESTS, start=1):
            scores = scorer.score(context, targets)
            record = {
                "vector_id": f"v{i:03d}",
                "request": {"id": i, "context": context, "targets": targets},
                "expected": {"id": i, "scores": scores},
            }
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
    print(f"wrote {len(REQUESTS)} vectors to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
