"""N-best extraction, score combination, and segment-by-segment rescoring.

A hypothesis's combined score is

    combined = hat - mu * ilm + nu * elm

where ``hat`` and ``ilm`` come from the lattice and ``elm`` is the external
scorer's conditional log-likelihood of the hypothesis text given the
carried-over context.  With ``mu = nu = 0`` rescoring is the identity on the
first-pass ranking.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LatticeFormatError
from .lattice import Lattice, Utterance, check_valid, _topo_order
from .scoring import Scorer

__all__ = [
    "Hypothesis",
    "RescoreParams",
    "SegmentRescore",
    "UtteranceRescore",
    "nbest",
    "combine",
    "rescore_segment",
    "rescore_utterance",
    "first_pass_transcript",
    "write_transcripts",
    "read_transcripts",
]


@dataclass
class Hypothesis:
    tokens: tuple[str, ...]
    hat: float
    ilm: float
    elm: float | None = None
    combined: float | None = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class RescoreParams:
    mu: float = 0.0
    nu: float = 0.0
    nbest: int = 20
    context_segments: int = 0

    def __post_init__(self):
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be non-negative")
        if self.nbest < 1:
            raise ValueError("nbest must be >= 1")
        if self.context_segments < 0:
            raise ValueError("context_segments must be >= 0")


def nbest(lattice: Lattice, n: int) -> list[Hypothesis]:
    """The ``n`` best-hat paths with distinct token sequences.

    Lazy best-first path expansion with an exact completion bound, so the
    lattice is never enumerated.  Paths come out in descending hat order with
    lexicographic tie-breaks; duplicate token sequences collapse onto their
    highest-hat instance.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    check_valid(lattice)
    adj = lattice.out_arcs()

    # Exact best completion per state (admissible and consistent bound).
    best_to_final: dict[int, float] = {}
    for s in reversed(_topo_order(lattice)):
        if s in lattice.finals:
            best_to_final[s] = 0.0
        else:
            best_to_final[s] = max(arc.hat + best_to_final[arc.to_state] for arc in adj[s])

    counter = itertools.count()
    heap = [(-best_to_final[lattice.start], (), next(counter), lattice.start, 0.0, 0.0)]
    out: list[Hypothesis] = []
    seen: set[tuple[str, ...]] = set()
    while heap and len(out) < n:
        neg_f, tokens, _, state, hat, ilm = heapq.heappop(heap)
        if state in lattice.finals:
            if tokens not in seen:
                seen.add(tokens)
                out.append(Hypothesis(tokens=tokens, hat=hat, ilm=ilm))
            continue
        for arc in adj[state]:
            g = hat + arc.hat
            heapq.heappush(
                heap,
                (
                    -(g + best_to_final[arc.to_state]),
                    tokens + (arc.label,),
                    next(counter),
                    arc.to_state,
                    g,
                    ilm + arc.ilm,
                ),
            )
    return out


def combine(hypothesis: Hypothesis, mu: float, nu: float, elm: float) -> float:
    """hat - mu*ilm + nu*elm, guarding nu=0 against an infinite elm."""
    value = hypothesis.hat - mu * hypothesis.ilm
    if nu != 0.0:
        value += nu * elm
    return value


@dataclass
class SegmentRescore:
    segment_id: str
    hypotheses: list[Hypothesis]

    @property
    def one_best(self) -> Hypothesis:
        return self.hypotheses[0]


def rescore_segment(
    lattice: Lattice, scorer: Scorer, params: RescoreParams, context: str = ""
) -> list[Hypothesis]:
    """Extract, score, and re-rank one segment's n-best list.

    All hypothesis texts are sent to the scorer in a single batched request
    conditioned on ``context``.  Returns hypotheses by descending combined
    score, ties broken by token sequence.
    """
    hyps = nbest(lattice, params.nbest)
    scores = scorer.score(context, [h.text for h in hyps])
    for h, elm in zip(hyps, scores):
        h.elm = elm
        h.combined = combine(h, params.mu, params.nu, elm)
    hyps.sort(key=lambda h: (-h.combined, h.tokens))
    return hyps


@dataclass
class UtteranceRescore:
    utterance_id: str
    transcript: tuple[str, ...]
    segments: list[SegmentRescore] = field(default_factory=list)

    @property
    def transcript_text(self) -> str:
        return " ".join(self.transcript)


def rescore_utterance(
    utterance: Utterance, scorer: Scorer, params: RescoreParams
) -> UtteranceRescore:
    """Rescore segments in order, carrying rescored 1-bests as context.

    Segment ``s`` is scored with the concatenated rescored 1-best texts of
    the previous ``context_segments`` segments as context (fewer near the
    utterance start; zero means every segment scores with empty context).
    """
    history: list[str] = []
    result = UtteranceRescore(utterance_id=utterance.utterance_id, transcript=())
    transcript: list[str] = []
    for seg in utterance.segments:
        m = params.context_segments
        context = " ".join(history[len(history) - m :]) if m > 0 else ""
        hyps = rescore_segment(seg, scorer, params, context)
        result.segments.append(SegmentRescore(seg.segment_id, hyps))
        top = hyps[0]
        history.append(top.text)
        transcript.extend(top.tokens)
    result.transcript = tuple(transcript)
    return result


def first_pass_transcript(utterance: Utterance) -> tuple[str, ...]:
    """Concatenated per-segment 1-best (max hat) token sequences."""
    out: list[str] = []
    for seg in utterance.segments:
        check_valid(seg)
        out.extend(nbest(seg, 1)[0].tokens)
    return tuple(out)


# ---------------------------------------------------------------------------
# Transcript file format (JSON lines)
# ---------------------------------------------------------------------------


def write_transcripts(results, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            obj = {
                "utterance_id": res.utterance_id,
                "transcript": res.transcript_text,
                "segments": [
                    {
                        "segment_id": seg.segment_id,
                        "nbest": [
                            {
                                "tokens": h.text,
                                "hat": h.hat,
                                "ilm": h.ilm,
                                "elm": h.elm,
                                "combined": h.combined,
                            }
                            for h in seg.hypotheses
                        ],
                    }
                    for seg in res.segments
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def read_transcripts(path: str | Path) -> list[UtteranceRescore]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            res = UtteranceRescore(
                utterance_id=obj["utterance_id"],
                transcript=tuple(obj["transcript"].split()),
            )
            for seg in obj["segments"]:
                res.segments.append(
                    SegmentRescore(
                        segment_id=seg["segment_id"],
                        hypotheses=[
                            Hypothesis(
                                tokens=tuple(h["tokens"].split()),
                                hat=float(h["hat"]),
                                ilm=float(h["ilm"]),
                                elm=None if h["elm"] is None else float(h["elm"]),
                                combined=None if h["combined"] is None else float(h["combined"]),
                            )
                            for h in seg["nbest"]
                        ],
                    )
                )
            out.append(res)
        except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as exc:
            raise LatticeFormatError(f"{path}:{lineno}: bad transcript line: {exc}") from exc
    return out
