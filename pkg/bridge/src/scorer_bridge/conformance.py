"""Replay canonical request vectors and compare responses field by field.

Vector file: JSON lines of
``{"vector_id": str, "request": {...}, "expected": {...}}``.
A vector passes when the response id matches and every score agrees within
1e-9; any shape difference is a failure naming the vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .server import BridgeConfig, handle_line

SCORE_TOL = 1e-9


@dataclass
class VectorResult:
    vector_id: str
    ok: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    results: list[VectorResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def failures(self) -> list[VectorResult]:
        return [r for r in self.results if not r.ok]


def _compare(vector_id: str, expected: dict, got: dict) -> VectorResult:
    if set(expected) != set(got):
        return VectorResult(vector_id, False, f"fields {sorted(got)} != {sorted(expected)}")
    if expected.get("id") != got.get("id"):
        return VectorResult(vector_id, False, f"id {got.get('id')} != {expected.get('id')}")
    if "error" in expected:
        if expected["error"] != got.get("error"):
            return VectorResult(vector_id, False, "error text differs")
        return VectorResult(vector_id, True)
    exp_scores, got_scores = expected["scores"], got.get("scores")
    if not isinstance(got_scores, list) or len(got_scores) != len(exp_scores):
        return VectorResult(vector_id, False, "score list shape differs")
    for i, (a, b) in enumerate(zip(exp_scores, got_scores)):
        if abs(a - b) > SCORE_TOL:
            return VectorResult(
                vector_id, False, f"score[{i}] differs by {abs(a - b):.3g} (> {SCORE_TOL})"
            )
    return VectorResult(vector_id, True)


def run_conformance(vector_path: str | Path, config: BridgeConfig) -> ConformanceReport:
    lines = [
        line
        for line in Path(vector_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not lines:
        raise ValueError(f"{vector_path}: no conformance vectors")
    report = ConformanceReport()
    for lineno, line in enumerate(lines, start=1):
        try:
            vec = json.loads(line)
            vector_id = vec["vector_id"]
            request = vec["request"]
            expected = vec["expected"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{vector_path}:{lineno}: bad vector line: {exc}") from exc
        got = handle_line(json.dumps(request, ensure_ascii=False), config)
        report.results.append(_compare(vector_id, expected, got))
    return report
