"""Segment lattice data model, validation, path algebra, and file I/O.

A lattice is a trimmed acyclic digraph over integer states ``0..num_states-1``
with a single start state and a set of sink finals.  Every arc carries a token
label plus two log-score channels: ``hat`` (first-pass score contribution) and
``ilm`` (internal-LM score contribution).  A path's score per channel is the
plain sum of its arcs, so lattices compose by concatenation and all shortest /
longest path machinery works in the tropical sense.

Scores are natural-log throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidLatticeError, LatticeFormatError, PathLimitExceededError

__all__ = [
    "Arc",
    "Lattice",
    "Utterance",
    "Violation",
    "ValidationReport",
    "LatticePath",
    "validate",
    "check_valid",
    "count_paths",
    "enumerate_paths",
    "concat",
    "best_path",
    "utterance_to_dict",
    "utterance_from_dict",
    "read_utterances",
    "write_utterances",
]


@dataclass(frozen=True)
class Arc:
    """A labeled transition between two lattice states."""

    from_state: int
    to_state: int
    label: str
    hat: float
    ilm: float


@dataclass(frozen=True)
class Lattice:
    """One segment's hypothesis graph. Immutable after construction."""

    segment_id: str
    num_states: int
    start: int
    finals: frozenset[int]
    arcs: tuple[Arc, ...]

    def out_arcs(self) -> list[list[Arc]]:
        """Adjacency lists indexed by source state."""
        adj: list[list[Arc]] = [[] for _ in range(self.num_states)]
        for arc in self.arcs:
            if 0 <= arc.from_state < self.num_states:
                adj[arc.from_state].append(arc)
        return adj


@dataclass(frozen=True)
class Utterance:
    """An ordered sequence of segment lattices plus an optional reference."""

    utterance_id: str
    segments: tuple[Lattice, ...]
    reference: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def _is_bad_label(label: str) -> str | None:
    if label == "":
        return "epsilon_label"
    if any(ch.isspace() for ch in label):
        return "whitespace_label"
    return None


def validate(lattice: Lattice) -> ValidationReport:
    """Check every structural invariant and report all violations found.

    Never raises on bad data and never mutates the input; violations are data.
    """
    report = ValidationReport()
    add = report.violations.append
    n = lattice.num_states

    if n < 1:
        add(Violation("state_range", f"num_states must be >= 1, got {n}"))
        return report
    if not 0 <= lattice.start < n:
        add(Violation("state_range", f"start state {lattice.start} out of range"))
        return report
    if not lattice.finals:
        add(Violation("no_finals", "lattice has no final states"))
    for f in lattice.finals:
        if not 0 <= f < n:
            add(Violation("state_range", f"final state {f} out of range"))
            return report

    import math

    for i, arc in enumerate(lattice.arcs):
        if not (0 <= arc.from_state < n and 0 <= arc.to_state < n):
            add(Violation("state_range", f"arc {i} references a state out of range"))
            return report
        bad = _is_bad_label(arc.label)
        if bad is not None:
            add(Violation(bad, f"arc {i} ({arc.from_state}->{arc.to_state}) label {arc.label!r}"))
        if not (math.isfinite(arc.hat) and math.isfinite(arc.ilm)):
            add(Violation("nonfinite_score", f"arc {i} has non-finite hat/ilm"))

    adj = lattice.out_arcs()
    indeg = [0] * n
    for arc in lattice.arcs:
        indeg[arc.to_state] += 1

    if indeg[lattice.start] > 0:
        add(Violation("start_incoming", "start state has incoming arcs"))
    for f in sorted(lattice.finals):
        if adj[f]:
            add(Violation("dangling_final", f"final state {f} has outgoing arcs"))

    # Kahn's algorithm; leftover states participate in a cycle.
    deg = list(indeg)
    queue = [s for s in range(n) if deg[s] == 0]
    seen = 0
    while queue:
        s = queue.pop()
        seen += 1
        for arc in adj[s]:
            deg[arc.to_state] -= 1
            if deg[arc.to_state] == 0:
                queue.append(arc.to_state)
    if seen != n:
        add(Violation("cycle", "lattice contains a cycle"))

    # Trimmed: every state forward-reachable from start and co-reachable
    # from some final.  Safe to compute even in the presence of cycles.
    fwd = [False] * n
    stack = [lattice.start]
    fwd[lattice.start] = True
    while stack:
        s = stack.pop()
        for arc in adj[s]:
            if not fwd[arc.to_state]:
                fwd[arc.to_state] = True
                stack.append(arc.to_state)
    radJ: list[list[int]] = [[] for _ in range(n)]
    for arc in lattice.arcs:
        radJ[arc.to_state].append(arc.from_state)
    bwd = [False] * n
    stack = [f for f in lattice.finals]
    for f in lattice.finals:
        bwd[f] = True
    while stack:
        s = stack.pop()
        for p in radJ[s]:
            if not bwd[p]:
                bwd[p] = True
                stack.append(p)
    for s in range(n):
        if not (fwd[s] and bwd[s]):
            add(Violation("unreachable_state", f"state {s} lies on no start-to-final path"))

    return report


def check_valid(lattice: Lattice) -> None:
    """Raise :class:`InvalidLatticeError` unless the lattice validates."""
    report = validate(lattice)
    if not report.ok:
        raise InvalidLatticeError(report.violations)


def _topo_order(lattice: Lattice) -> list[int]:
    n = lattice.num_states
    indeg = [0] * n
    for arc in lattice.arcs:
        indeg[arc.to_state] += 1
    adj = lattice.out_arcs()
    order: list[int] = []
    queue = [s for s in range(n) if indeg[s] == 0]
    while queue:
        s = queue.pop()
        order.append(s)
        for arc in adj[s]:
            indeg[arc.to_state] -= 1
            if indeg[arc.to_state] == 0:
                queue.append(arc.to_state)
    return order


def count_paths(lattice: Lattice) -> int:
    """Exact number of distinct start-to-final paths.

    Computed by dynamic programming in reverse topological order with
    arbitrary-precision integers, so astronomically large counts stay exact.
    """
    check_valid(lattice)
    adj = lattice.out_arcs()
    ways = [0] * lattice.num_states
    for f in lattice.finals:
        ways[f] = 1
    for s in reversed(_topo_order(lattice)):
        if s in lattice.finals:
            continue
        ways[s] = sum(ways[arc.to_state] for arc in adj[s])
    return ways[lattice.start]


@dataclass(frozen=True)
class LatticePath:
    tokens: tuple[str, ...]
    hat: float
    ilm: float


def enumerate_paths(lattice: Lattice, limit: int) -> list[LatticePath]:
    """All start-to-final paths, refused if there are more than ``limit``.

    Returns paths sorted by descending hat score, ties broken by the token
    sequence.  Intended for tests and small lattices; the refusal error
    carries the exact count.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    total = count_paths(lattice)
    if total > limit:
        raise PathLimitExceededError(total, limit)

    adj = lattice.out_arcs()
    out: list[LatticePath] = []
    # Iterative DFS; stack holds (state, tokens, hat, ilm).
    stack: list[tuple[int, tuple[str, ...], float, float]] = [
        (lattice.start, (), 0.0, 0.0)
    ]
    while stack:
        state, tokens, hat, ilm = stack.pop()
        if state in lattice.finals:
            out.append(LatticePath(tokens, hat, ilm))
            continue
        for arc in adj[state]:
            stack.append((arc.to_state, tokens + (arc.label,), hat + arc.hat, ilm + arc.ilm))
    out.sort(key=lambda p: (-p.hat, p.tokens))
    return out


def best_path(lattice: Lattice) -> LatticePath:
    """Maximum-hat path; ties broken by lexicographic token sequence."""
    check_valid(lattice)
    adj = lattice.out_arcs()
    # DP over reverse topological order: best (hat, tokens) suffix per state.
    best: dict[int, tuple[float, tuple[str, ...], float]] = {}
    for s in reversed(_topo_order(lattice)):
        if s in lattice.finals:
            best[s] = (0.0, (), 0.0)
            continue
        cand: tuple[float, tuple[str, ...], float] | None = None
        for arc in adj[s]:
            suf = best[arc.to_state]
            entry = (arc.hat + suf[0], (arc.label,) + suf[1], arc.ilm + suf[2])
            if cand is None or (-entry[0], entry[1]) < (-cand[0], cand[1]):
                cand = entry
        assert cand is not None
        best[s] = cand
    hat, tokens, ilm = best[lattice.start]
    return LatticePath(tokens, hat, ilm)


def concat(utterance: Utterance) -> Lattice:
    """Concatenate an utterance's segment lattices into one lattice.

    Each segment's final states are fused with the following segment's start,
    so the combined path set is exactly the cross-product concatenation of the
    per-segment path sets with all arc scores preserved.
    """
    if not utterance.segments:
        raise ValueError("cannot concatenate an utterance with no segments")
    seen_ids = set()
    for seg in utterance.segments:
        if seg.segment_id in seen_ids:
            raise ValueError(f"duplicate segment_id {seg.segment_id!r}")
        seen_ids.add(seg.segment_id)
        check_valid(seg)

    arcs: list[Arc] = []
    # States of segment i map to a contiguous block; the start of segment i>0
    # is dropped and its outgoing arcs are re-rooted at every final of the
    # running prefix.
    first = utterance.segments[0]
    offset = 0
    num_states = first.num_states
    for arc in first.arcs:
        arcs.append(arc)
    current_finals = set(first.finals)
    start = first.start

    for seg in utterance.segments[1:]:
        offset = num_states
        # Renumber, skipping the segment's start state.
        mapping: dict[int, int] = {}
        next_id = offset
        for s in range(seg.num_states):
            if s == seg.start:
                continue
            mapping[s] = next_id
            next_id += 1
        num_states = next_id
        new_finals = {mapping[f] for f in seg.finals}
        for arc in seg.arcs:
            dst = mapping[arc.to_state]
            if arc.from_state == seg.start:
                for f in sorted(current_finals):
                    arcs.append(Arc(f, dst, arc.label, arc.hat, arc.ilm))
            else:
                arcs.append(Arc(mapping[arc.from_state], dst, arc.label, arc.hat, arc.ilm))
        current_finals = new_finals

    return Lattice(
        segment_id=utterance.utterance_id,
        num_states=num_states,
        start=start,
        finals=frozenset(current_finals),
        arcs=tuple(arcs),
    )


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

_UTT_KEYS = {"utterance_id", "reference", "segments"}
_SEG_KEYS = {"segment_id", "num_states", "start", "finals", "arcs"}
_ARC_KEYS = {"from", "to", "label", "hat", "ilm"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise LatticeFormatError(f"unknown field {key!r} in {where}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise LatticeFormatError(f"missing field {key!r} in {where}")
    return obj[key]


def utterance_to_dict(utt: Utterance) -> dict:
    return {
        "utterance_id": utt.utterance_id,
        "reference": None if utt.reference is None else " ".join(utt.reference),
        "segments": [
            {
                "segment_id": seg.segment_id,
                "num_states": seg.num_states,
                "start": seg.start,
                "finals": sorted(seg.finals),
                "arcs": [
                    {
                        "from": a.from_state,
                        "to": a.to_state,
                        "label": a.label,
                        "hat": a.hat,
                        "ilm": a.ilm,
                    }
                    for a in seg.arcs
                ],
            }
            for seg in utt.segments
        ],
    }


def utterance_from_dict(obj: dict) -> Utterance:
    if not isinstance(obj, dict):
        raise LatticeFormatError("utterance object must be a JSON object")
    _reject_unknown(obj, _UTT_KEYS, "utterance object")
    utt_id = _require(obj, "utterance_id", "utterance object")
    if not isinstance(utt_id, str):
        raise LatticeFormatError("utterance_id must be a string")
    reference = _require(obj, "reference", "utterance object")
    if reference is not None and not isinstance(reference, str):
        raise LatticeFormatError("reference must be a string or null")
    raw_segments = _require(obj, "segments", "utterance object")
    if not isinstance(raw_segments, list):
        raise LatticeFormatError("segments must be a list")

    segments = []
    for seg in raw_segments:
        if not isinstance(seg, dict):
            raise LatticeFormatError("segment entries must be JSON objects")
        _reject_unknown(seg, _SEG_KEYS, f"segment object of {utt_id!r}")
        seg_id = _require(seg, "segment_id", "segment object")
        num_states = _require(seg, "num_states", "segment object")
        start = _require(seg, "start", "segment object")
        finals = _require(seg, "finals", "segment object")
        raw_arcs = _require(seg, "arcs", "segment object")
        if not isinstance(num_states, int) or isinstance(num_states, bool):
            raise LatticeFormatError("num_states must be an integer")
        if not isinstance(start, int) or isinstance(start, bool):
            raise LatticeFormatError("start must be an integer")
        if not isinstance(finals, list):
            raise LatticeFormatError("finals must be a list")
        arcs = []
        for arc in raw_arcs:
            if not isinstance(arc, dict):
                raise LatticeFormatError("arc entries must be JSON objects")
            _reject_unknown(arc, _ARC_KEYS, f"arc object of segment {seg_id!r}")
            label = _require(arc, "label", "arc object")
            if not isinstance(label, str):
                raise LatticeFormatError("arc label must be a string")
            for chan in ("hat", "ilm"):
                v = _require(arc, chan, "arc object")
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise LatticeFormatError(f"arc {chan} must be a number")
            arcs.append(
                Arc(
                    from_state=_require(arc, "from", "arc object"),
                    to_state=_require(arc, "to", "arc object"),
                    label=label,
                    hat=float(arc["hat"]),
                    ilm=float(arc["ilm"]),
                )
            )
        segments.append(
            Lattice(
                segment_id=seg_id,
                num_states=num_states,
                start=start,
                finals=frozenset(finals),
                arcs=tuple(arcs),
            )
        )
    return Utterance(
        utterance_id=utt_id,
        segments=tuple(segments),
        reference=None if reference is None else tuple(reference.split()),
    )


def read_utterances(path: str | Path) -> list[Utterance]:
    """Read one utterance (single JSON object) or a JSON-lines corpus."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        raise LatticeFormatError(f"{path}: empty lattice file")
    try:
        obj = json.loads(stripped)
        single = True
    except json.JSONDecodeError:
        single = False
    if single:
        if isinstance(obj, list):
            raise LatticeFormatError(f"{path}: top-level JSON arrays are not supported")
        return [utterance_from_dict(obj)]
    utts = []
    for lineno, line in enumerate(stripped.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LatticeFormatError(f"{path}:{lineno}: bad JSON line: {exc}") from exc
        utts.append(utterance_from_dict(obj))
    return utts


def write_utterances(utts, path: str | Path) -> None:
    """Write utterances as JSON lines (full float round-trip precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utts:
            fh.write(json.dumps(utterance_to_dict(utt), ensure_ascii=False))
            fh.write("\n")
