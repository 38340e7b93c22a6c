"""The serving loop: newline-delimited JSON over stdio or a TCP socket.

Session shape (protocol v1):

    client -> {"hello": {"proto": 1}}
    server -> {"hello": {"proto": 1, "name": "..."}}
    client -> {"id": 1, "context": "...", "targets": ["...", ...]}
    server -> {"id": 1, "scores": [-1.25, ...]}   or {"id": 1, "error": "..."}

One JSON object per line, UTF-8, natural-log scores, no pretty-printing.
A bad request line produces an error object with the request's id when it
can be recovered (-1 otherwise) and never ends the session; end of input
ends the session cleanly.
"""

from __future__ import annotations

import importlib
import json
import socket
import sys
from dataclasses import dataclass

PROTO_VERSION = 1


@dataclass
class BridgeConfig:
    backend: object          # anything with .score(context, targets)
    name: str = "scorer-bridge"
    max_batch: int = 1024
    tcp: str | None = None   # "host:port"; None means stdio


def load_custom_backend(module_path: str):
    """Import a module and call its ``make_scorer()`` factory.

    The returned object must expose ``score(context, targets)`` returning
    natural-log scores, one per target; tokenization is its own concern.
    """
    module = importlib.import_module(module_path)
    if not hasattr(module, "make_scorer"):
        raise ValueError(f"custom backend {module_path!r} has no make_scorer()")
    return module.make_scorer()


def handle_line(line: str, config: BridgeConfig) -> dict | None:
    """One request line in, one response object out (None for blank lines)."""
    if not line.strip():
        return None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return {"id": -1, "error": "request line is not valid JSON"}
    if not isinstance(obj, dict):
        return {"id": -1, "error": "request must be a JSON object"}
    if "hello" in obj:
        return {"hello": {"proto": PROTO_VERSION, "name": config.name}}
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool):
        return {"id": -1, "error": "request has no integer id"}
    context = obj.get("context", "")
    if not isinstance(context, str):
        return {"id": rid, "error": "context must be a string"}
    targets = obj.get("targets")
    if not isinstance(targets, list) or not targets or not all(isinstance(t, str) for t in targets):
        return {"id": rid, "error": "targets must be a non-empty list of strings"}
    if len(targets) > config.max_batch:
        return {"id": rid, "error": f"batch of {len(targets)} exceeds max {config.max_batch}"}
    try:
        scores = config.backend.score(context, targets)
        scores = [float(s) for s in scores]
    except Exception as exc:  # backend failures become protocol errors
        return {"id": rid, "error": f"backend error: {exc}"}
    if len(scores) != len(targets):
        return {"id": rid, "error": "backend returned a wrong-length score list"}
    return {"id": rid, "scores": scores}


def serve_streams(reader, writer, config: BridgeConfig) -> int:
    for line in reader:
        response = handle_line(line, config)
        if response is None:
            continue
        writer.write(json.dumps(response, ensure_ascii=False))
        writer.write("\n")
        writer.flush()
    return 0


def serve(config: BridgeConfig) -> int:
    """Run one session to completion; returns the process exit code."""
    if config.tcp is None:
        return serve_streams(sys.stdin, sys.stdout, config)
    host, _, port = config.tcp.rpartition(":")
    srv = socket.create_server((host or "127.0.0.1", int(port)))
    print(f"LISTENING {srv.getsockname()[1]}", file=sys.stderr, flush=True)
    conn, _ = srv.accept()
    with conn:
        reader = conn.makefile("r", encoding="utf-8")
        writer = conn.makefile("w", encoding="utf-8")
        return serve_streams(reader, writer, config)
