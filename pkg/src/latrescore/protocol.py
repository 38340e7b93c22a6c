"""Client for the scorer wire protocol (v1).

Newline-delimited JSON over a child process's stdin/stdout or a TCP socket.
Session shape:

    client -> {"hello": {"proto": 1}}
    server -> {"hello": {"proto": 1, "name": "..."}}
    client -> {"id": 1, "context": "...", "targets": ["...", ...]}
    server -> {"id": 1, "scores": [-1.25, ...]}        (or {"id", "error"})

Scores are natural-log.  Responses may arrive out of order; the client
buffers responses for other outstanding ids and re-pairs them by id.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass

from .errors import (
    BackendError,
    MalformedResponseError,
    ResponseIdMismatchError,
    ScoreLengthMismatchError,
    ScorerTimeoutError,
)
from .scoring import Scorer

__all__ = ["PROTO_VERSION", "ScoreRequest", "ScoreResponse", "ProtocolScorer", "protocol_score"]

PROTO_VERSION = 1


@dataclass(frozen=True)
class ScoreRequest:
    id: int
    context: str
    targets: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "context": self.context, "targets": list(self.targets)},
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class ScoreResponse:
    id: int
    scores: tuple[float, ...]


class _Transport:
    """Line transport with a background reader thread."""

    def __init__(self, writer, reader, closer):
        self._writer = writer
        self._closer = closer
        self._lines: queue.Queue = queue.Queue()

        def pump():
            try:
                for line in reader:
                    self._lines.put(line)
            except (OSError, ValueError):
                pass
            self._lines.put(None)  # EOF marker

        self._thread = threading.Thread(target=pump, daemon=True)
        self._thread.start()

    def send_line(self, line: str) -> None:
        self._writer.write(line + "\n")
        self._writer.flush()

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ScorerTimeoutError(f"no response within {timeout} s")
        if line is None:
            raise MalformedResponseError("scorer connection closed unexpectedly")
        return line

    def close(self) -> None:
        self._closer()


class ProtocolScorer(Scorer):
    """Scorer backed by an out-of-process server speaking protocol v1."""

    def __init__(self, transport: _Transport, timeout: float, _cleanup=None):
        self._transport = transport
        self.timeout = timeout
        self._cleanup = _cleanup
        self._next_id = 1
        self._stash: dict[int, dict] = {}
        self._outstanding: set[int] = set()
        self.name = self._handshake()

    # -- constructors --------------------------------------------------------

    @classmethod
    def spawn(cls, command, timeout: float = 30.0) -> "ProtocolScorer":
        """Start a child-process scorer; ``command`` is an argv list or string."""
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

        def closer():
            try:
                if proc.stdin:
                    proc.stdin.close()
                proc.wait(timeout=1)
            except Exception:
                proc.kill()
                proc.wait()

        transport = _Transport(proc.stdin, proc.stdout, closer)
        return cls(transport, timeout, _cleanup=proc)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 30.0) -> "ProtocolScorer":
        sock = socket.create_connection((host, port), timeout=timeout)
        reader = sock.makefile("r", encoding="utf-8")
        writer = sock.makefile("w", encoding="utf-8")

        def closer():
            for f in (writer, reader):
                try:
                    f.close()
                except OSError:
                    pass
            try:
                sock.close()
            except OSError:
                pass

        transport = _Transport(writer, reader, closer)
        return cls(transport, timeout)

    # -- session --------------------------------------------------------------

    def _handshake(self) -> str:
        self._transport.send_line(json.dumps({"hello": {"proto": PROTO_VERSION}}))
        obj = self._read_object()
        hello = obj.get("hello")
        if not isinstance(hello, dict) or hello.get("proto") != PROTO_VERSION:
            raise MalformedResponseError(f"bad hello response: {obj!r}")
        name = hello.get("name")
        return name if isinstance(name, str) else "remote"

    def _read_object(self) -> dict:
        line = self._transport.recv_line(self.timeout)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponseError(f"response is not valid JSON: {line!r}") from exc
        if not isinstance(obj, dict):
            raise MalformedResponseError(f"response is not a JSON object: {line!r}")
        return obj

    def call(self, request: ScoreRequest) -> ScoreResponse:
        """Send one request and block for its response, re-pairing by id."""
        if not request.targets:
            raise ValueError("targets must be non-empty")
        self._outstanding.add(request.id)
        self._transport.send_line(request.to_json())
        while True:
            if request.id in self._stash:
                obj = self._stash.pop(request.id)
            else:
                obj = self._read_object()
            rid = obj.get("id")
            if rid != request.id:
                if rid in self._outstanding and rid not in self._stash:
                    # Out-of-order response to another outstanding request:
                    # park it for re-pairing.  Anything else (unknown or
                    # already-answered id) is a protocol error.
                    self._stash[rid] = obj
                    continue
                raise ResponseIdMismatchError(
                    f"response id {rid!r} does not match any outstanding request",
                    request_id=request.id,
                )
            self._outstanding.discard(request.id)
            if "error" in obj:
                raise BackendError(str(obj["error"]), request_id=request.id)
            scores = obj.get("scores")
            if not isinstance(scores, list) or not all(
                isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores
            ):
                raise MalformedResponseError(
                    f"response has no well-formed scores list: {obj!r}",
                    request_id=request.id,
                )
            if len(scores) != len(request.targets):
                raise ScoreLengthMismatchError(
                    f"got {len(scores)} scores for {len(request.targets)} targets",
                    request_id=request.id,
                )
            return ScoreResponse(id=request.id, scores=tuple(float(s) for s in scores))

    def score(self, context: str, targets) -> list[float]:
        request = ScoreRequest(self._next_id, context, tuple(targets))
        self._next_id += 1
        return list(self.call(request).scores)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "ProtocolScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def protocol_score(client: ProtocolScorer, request: ScoreRequest) -> ScoreResponse:
    """Module-level form of :meth:`ProtocolScorer.call`."""
    return client.call(request)
