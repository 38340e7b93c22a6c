"""Command-line entry points: ``serve`` and ``conformance``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .conformance import run_conformance
from .ngram import NgramBackend
from .server import BridgeConfig, load_custom_backend, serve


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ngram-corpus", help="train the built-in n-gram backend on this text file")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--backend-module", help="dotted module path exposing make_scorer()")


def build_config(args) -> BridgeConfig:
    specs = [s for s in (args.ngram_corpus, args.backend_module) if s]
    if len(specs) != 1:
        raise SystemExit("exactly one backend is required (--ngram-corpus or --backend-module)")
    if args.ngram_corpus:
        lines = [
            line
            for line in Path(args.ngram_corpus).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        backend = NgramBackend.from_corpus(lines, args.order)
        name = backend.name
    else:
        backend = load_custom_backend(args.backend_module)
        name = getattr(backend, "name", "custom")
    return BridgeConfig(
        backend=backend,
        name=name,
        max_batch=args.max_batch,
        tcp=getattr(args, "tcp", None),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scorer-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="speak the wire protocol on stdio or TCP")
    _add_backend_flags(p)
    p.add_argument("--max-batch", type=int, default=1024)
    p.add_argument("--tcp", metavar="HOST:PORT", help="listen on TCP instead of stdio (port 0 picks one)")

    p = sub.add_parser("conformance", help="replay shipped vectors against the backend")
    _add_backend_flags(p)
    p.add_argument("--max-batch", type=int, default=1024)
    p.add_argument("--vectors", required=True)

    args = parser.parse_args(argv)
    config = build_config(args)
    if args.command == "serve":
        return serve(config)

    try:
        report = run_conformance(args.vectors, config)
    except (ValueError, OSError) as exc:
        print(f"conformance: {exc}", file=sys.stderr)
        return 2
    for result in report.results:
        status = "PASS" if result.ok else f"FAIL ({result.detail})"
        print(f"{result.vector_id}: {status}")
    n_fail = len(report.failures)
    print(f"{len(report.results) - n_fail}/{len(report.results)} vectors passed")
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
