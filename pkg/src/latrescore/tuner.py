"""Grid search over the (mu, nu) interpolation weights on a development set.

The dev-set WER surface is evaluated at every grid point; external-LM scores
are cached per (context, hypothesis text) pair and shared across grid points,
which is behavior-neutral because the combined score is a pure function of
the cached channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .lattice import Utterance, concat
from .metrics import EvalReport, avg_paths_per_segment, oracle_wer, wer
from .rescore import RescoreParams, rescore_utterance
from .scoring import CachingScorer, Scorer

__all__ = ["TuneGrid", "TuneResult", "tune", "apply_params", "save_surface", "load_surface"]


@dataclass(frozen=True)
class TuneGrid:
    mu_values: tuple[float, ...]
    nu_values: tuple[float, ...]

    def __post_init__(self):
        if not self.mu_values or not self.nu_values:
            raise ValueError("grid axes must be non-empty")
        for axis in (self.mu_values, self.nu_values):
            if any(v < 0 for v in axis):
                raise ValueError("grid values must be non-negative")
            if tuple(sorted(axis)) != axis:
                raise ValueError("grid values must be sorted ascending")

    @classmethod
    def default(cls) -> "TuneGrid":
        values = tuple(round(i * 0.1, 1) for i in range(11))
        return cls(values, values)

    def points(self):
        for mu in self.mu_values:
            for nu in self.nu_values:
                yield mu, nu


@dataclass
class TuneResult:
    best_mu: float
    best_nu: float
    dev_wer: float
    surface: dict[tuple[float, float], float] = field(default_factory=dict)
    eval_wer: float | None = None


def tune(dev, scorer: Scorer, grid: TuneGrid, base: RescoreParams, use_cache: bool = True) -> TuneResult:
    """Pick the grid point minimizing pooled dev WER.

    ``dev`` is a list of (Utterance, reference tokens) pairs.  Ties go to the
    lexicographically smallest (mu, nu).  Scorer failures abort the sweep; no
    partial surface is reported.
    """
    dev = list(dev)
    if not dev:
        raise ValueError("dev set is empty")
    backend = CachingScorer(scorer) if use_cache else scorer
    surface: dict[tuple[float, float], float] = {}
    for mu, nu in grid.points():
        params = RescoreParams(
            mu=mu, nu=nu, nbest=base.nbest, context_segments=base.context_segments
        )
        pairs = []
        for utt, ref in dev:
            res = rescore_utterance(utt, backend, params)
            pairs.append((ref, res.transcript))
        surface[(mu, nu)] = wer(pairs).wer
    best_mu, best_nu = min(surface, key=lambda point: (surface[point], point))
    return TuneResult(
        best_mu=best_mu, best_nu=best_nu, dev_wer=surface[(best_mu, best_nu)], surface=surface
    )


def apply_params(
    eval_set, scorer: Scorer, params: RescoreParams, term_set=None
) -> EvalReport:
    """One rescoring pass at fixed (mu, nu) plus a full evaluation report."""
    eval_set = list(eval_set)
    if not eval_set:
        raise ValueError("eval set is empty")
    pairs = []
    utts: list[Utterance] = []
    for utt, ref in eval_set:
        res = rescore_utterance(utt, scorer, params)
        pairs.append((utt.utterance_id, tuple(ref), res.transcript))
        utts.append(utt)
    w = wer([(ref, hyp) for _, ref, hyp in pairs])
    oracle_num = sum(
        oracle_wer(concat(utt), ref) * len(ref) for utt, (_, ref, _) in zip(utts, pairs)
    )
    report = EvalReport(
        wer=w.wer,
        ref_words=w.ref_words,
        substitutions=w.substitutions,
        deletions=w.deletions,
        insertions=w.insertions,
        oracle_wer=oracle_num / w.ref_words,
        avg_paths_per_segment=avg_paths_per_segment(utts),
        num_utterances=len(utts),
        num_segments=sum(len(u.segments) for u in utts),
    )
    if term_set is not None:
        from .metrics import ster

        s = ster([(doc_id, ref, hyp) for doc_id, ref, hyp in pairs], term_set)
        report.ster = s.ster
        report.salient_total = s.total_occurrences
        report.salient_errors = s.errored_occurrences
    return report


# ---------------------------------------------------------------------------
# Surface file
# ---------------------------------------------------------------------------


def save_surface(result: TuneResult, grid: TuneGrid, base: RescoreParams, path: str | Path) -> None:
    obj = {
        "best": {"mu": result.best_mu, "nu": result.best_nu},
        "dev_wer": result.dev_wer,
        "eval_wer": result.eval_wer,
        "nbest": base.nbest,
        "context_segments": base.context_segments,
        "grid": {"mu": list(grid.mu_values), "nu": list(grid.nu_values)},
        "surface": [
            {"mu": mu, "nu": nu, "wer": result.surface[(mu, nu)]}
            for mu, nu in sorted(result.surface)
        ],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_surface(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def surface_table(result: TuneResult, grid: TuneGrid) -> str:
    """Human-readable WER surface, one row per mu value."""
    header = "mu\\nu " + " ".join(f"{nu:>7.3g}" for nu in grid.nu_values)
    lines = [header]
    for mu in grid.mu_values:
        cells = " ".join(f"{result.surface[(mu, nu)]:7.4f}" for nu in grid.nu_values)
        lines.append(f"{mu:<6.3g}{cells}")
    lines.append(
        f"best: mu={result.best_mu:g} nu={result.best_nu:g} dev_wer={result.dev_wer:.4f}"
    )
    return "\n".join(lines)
