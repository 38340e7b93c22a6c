"""End-to-end: the host toolkit rescoring through the bridge must match its
in-process n-gram scorer, transcript-identical with combined scores within
1e-6, including non-ASCII tokens.  The host is driven only through its
command line and file formats."""

import json
import shlex
import subprocess
import sys
from pathlib import Path

import pytest

HOST = [sys.executable, "-m", "latrescore.cli"]
BRIDGE_CMD = f"{sys.executable} -m scorer_bridge serve"

pytest.importorskip("latrescore", reason="host toolkit not installed")


def run_host(*argv, cwd=None):
    proc = subprocess.run(
        HOST + [str(a) for a in argv],
        capture_output=True,
        text=True,
        timeout=300,
        cwd=cwd,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]


def assert_equivalent(path_a, path_b):
    a, b = read_jsonl(path_a), read_jsonl(path_b)
    assert [r["utterance_id"] for r in a] == [r["utterance_id"] for r in b]
    assert [r["transcript"] for r in a] == [r["transcript"] for r in b]
    for ra, rb in zip(a, b):
        for sa, sb in zip(ra["segments"], rb["segments"]):
            combined_a = {h["tokens"]: h["combined"] for h in sa["nbest"]}
            combined_b = {h["tokens"]: h["combined"] for h in sb["nbest"]}
            assert combined_a.keys() == combined_b.keys()
            for text, value in combined_a.items():
                assert abs(value - combined_b[text]) <= 1e-6, text


def rescore_both_ways(lattices, corpus, out_dir, mu="0.2", nu="0.5"):
    in_proc = out_dir / "in_process.jsonl"
    via_bridge = out_dir / "via_bridge.jsonl"
    common = [
        "rescore", "--lattices", lattices, "--mu", mu, "--nu", nu,
        "--nbest", "10", "--context-segments", "1",
    ]
    run_host(*common, "--out", in_proc, "--ngram-corpus", corpus)
    cmd = f"{BRIDGE_CMD} --ngram-corpus {shlex.quote(str(corpus))} --order 2"
    run_host(*common, "--out", via_bridge, "--scorer-cmd", cmd)
    assert_equivalent(in_proc, via_bridge)


def test_e2e_synthetic_corpus(tmp_path):
    data = tmp_path / "data"
    run_host("gen", "--out", data, "--seed", "5", "--utterances", "3", "--segments", "2")
    lattices = tmp_path / "lattices.jsonl"
    run_host("decode", "--emissions", data / "emissions", "--out", lattices, "--beam", "6")
    rescore_both_ways(lattices, data / "corpus.txt", tmp_path)


def test_e2e_non_ascii_tokens(tmp_path):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text(
        "\n".join(
            ["नमस्ते दुनिया"] * 6
            + ["héllo wörld"] * 6
            + ["नमस्ते wörld"] * 1
            + ["héllo दुनिया"] * 1
        )
        + "\n",
        encoding="utf-8",
    )
    # Two segments, each ambiguous between the two second words; the n-gram
    # prefers the collocations seen above, so rescoring must reorder.
    def segment(seg_id, first):
        return {
            "segment_id": seg_id,
            "num_states": 3,
            "start": 0,
            "finals": [2],
            "arcs": [
                {"from": 0, "to": 1, "label": first, "hat": -1.0, "ilm": -0.5},
                {"from": 1, "to": 2, "label": "दुनिया", "hat": -1.3, "ilm": -0.5},
                {"from": 1, "to": 2, "label": "wörld", "hat": -1.2, "ilm": -0.5},
            ],
        }

    lattices = tmp_path / "lattices.jsonl"
    record = {
        "utterance_id": "utt-ascii-free",
        "reference": "नमस्ते दुनिया héllo wörld",
        "segments": [segment("s0", "नमस्ते"), segment("s1", "héllo")],
    }
    lattices.write_text(json.dumps(record, ensure_ascii=False) + "\n", encoding="utf-8")
    rescore_both_ways(lattices, corpus, tmp_path, mu="0.0", nu="1.0")
    rescored = read_jsonl(tmp_path / "via_bridge.jsonl")[0]
    assert rescored["transcript"] == "नमस्ते दुनिया héllo wörld"
