import json
import sys
from pathlib import Path

import pytest

from latrescore.errors import (
    BackendError,
    MalformedResponseError,
    ResponseIdMismatchError,
    ScoreLengthMismatchError,
    ScorerTimeoutError,
)
from latrescore.protocol import ProtocolScorer, ScoreRequest, protocol_score
from latrescore.scoring import ngram_train

SERVER = str(Path(__file__).parent / "ngram_server.py")
CORPUS = ["a b c", "a b", "c a", "b b a", "héllo wörld", "नमस्ते a"]


@pytest.fixture()
def corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("\n".join(CORPUS) + "\n", encoding="utf-8")
    return str(path)


def spawn(corpus_file, mode="ok", timeout=10.0):
    return ProtocolScorer.spawn(
        [sys.executable, SERVER, "--corpus", corpus_file, "--order", "2", "--mode", mode],
        timeout=timeout,
    )


def test_handshake_exposes_name(corpus_file):
    with spawn(corpus_file) as scorer:
        assert scorer.name == "test-ngram"


def test_echo_scorer_zeroes():
    with ProtocolScorer.spawn([sys.executable, SERVER, "--echo", "0"], timeout=10.0) as scorer:
        assert scorer.score("ctx", ["x", "y z"]) == [0.0, 0.0]


def test_protocol_matches_in_process(corpus_file):
    local = ngram_train(CORPUS, 2)
    cases = [("", ["a b", "c"]), ("a", ["b", "b c", "zz"]), ("héllo", ["wörld", "नमस्ते a"])]
    with spawn(corpus_file) as scorer:
        for ctx, targets in cases:
            remote = scorer.score(ctx, targets)
            want = local.score(ctx, targets)
            assert remote == pytest.approx(want, abs=1e-9)


def test_utf8_targets_roundtrip(corpus_file):
    local = ngram_train(CORPUS, 2)
    with spawn(corpus_file) as scorer:
        got = scorer.score("नमस्ते", ["héllo wörld"])
        assert got == pytest.approx(local.score("नमस्ते", ["héllo wörld"]), abs=1e-9)


def test_backend_error(corpus_file):
    with spawn(corpus_file, mode="error") as scorer:
        with pytest.raises(BackendError, match="backend exploded") as err:
            scorer.score("", ["a"])
        assert err.value.request_id == 1


def test_length_mismatch(corpus_file):
    with spawn(corpus_file, mode="bad-length") as scorer:
        with pytest.raises(ScoreLengthMismatchError):
            scorer.score("", ["a", "b"])


def test_wrong_id(corpus_file):
    with spawn(corpus_file, mode="wrong-id") as scorer:
        with pytest.raises(ResponseIdMismatchError):
            scorer.score("", ["a"])


def test_garbage_line(corpus_file):
    with spawn(corpus_file, mode="garbage") as scorer:
        with pytest.raises(MalformedResponseError):
            scorer.score("", ["a"])


def test_timeout(corpus_file):
    with spawn(corpus_file, mode="silent", timeout=0.5) as scorer:
        with pytest.raises(ScorerTimeoutError):
            scorer.score("", ["a"])


def test_duplicate_response_is_mismatch(corpus_file):
    with spawn(corpus_file, mode="duplicate") as scorer:
        scorer.score("", ["a"])  # consumes the first copy
        # The duplicate of id 1 arrives while waiting for id 2.
        with pytest.raises(ResponseIdMismatchError):
            scorer.score("", ["b"])


def test_explicit_request_api(corpus_file):
    local = ngram_train(CORPUS, 2)
    with spawn(corpus_file) as scorer:
        req = ScoreRequest(id=7, context="a", targets=("b", "c"))
        resp = protocol_score(scorer, req)
        assert resp.id == 7
        assert list(resp.scores) == pytest.approx(local.score("a", ["b", "c"]), abs=1e-9)


def test_empty_targets_rejected_client_side(corpus_file):
    with spawn(corpus_file) as scorer:
        with pytest.raises(ValueError):
            scorer.score("", [])


def test_missing_targets_server_reports_error(corpus_file):
    with spawn(corpus_file) as scorer:
        scorer._transport.send_line(json.dumps({"id": 1, "context": ""}))
        with pytest.raises(BackendError):
            scorer.score("", ["a"])  # id 1: server answered the raw line with an error


def test_tcp_transport(corpus_file):
    import re
    import subprocess

    proc = subprocess.Popen(
        [sys.executable, SERVER, "--corpus", corpus_file, "--tcp"],
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stderr.readline()
        port = int(re.match(r"LISTENING (\d+)", line).group(1))
        local = ngram_train(CORPUS, 2)
        with ProtocolScorer.connect("127.0.0.1", port, timeout=10.0) as scorer:
            assert scorer.name == "test-ngram"
            assert scorer.score("a", ["b c"]) == pytest.approx(local.score("a", ["b c"]), abs=1e-9)
    finally:
        proc.kill()
        proc.wait()
