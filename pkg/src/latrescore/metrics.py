"""Evaluation metrics: alignment, WER, lattice oracle WER, salient terms, STER.

Tokenization everywhere is pure whitespace splitting; an optional lowercase
flag is the only normalization offered.  All functions are pure and
deterministic, with fixed tie-breaking rules so results are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LatticeFormatError
from .lattice import Lattice, Utterance, check_valid, count_paths, _topo_order

__all__ = [
    "AlignOp",
    "Alignment",
    "SalientTerm",
    "SalientTermSet",
    "WerResult",
    "SterResult",
    "EvalReport",
    "tokenize",
    "align",
    "wer",
    "oracle_wer",
    "salient_terms",
    "ster",
    "avg_paths_per_segment",
    "format_count",
]

MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"


def tokenize(text: str, lowercase: bool = False) -> tuple[str, ...]:
    if lowercase:
        text = text.lower()
    return tuple(text.split())


@dataclass(frozen=True)
class AlignOp:
    kind: str  # one of match / sub / del / ins
    ref: str | None
    hyp: str | None


@dataclass
class Alignment:
    ops: list[AlignOp]

    @property
    def cost(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def counts(self) -> dict[str, int]:
        out = {MATCH: 0, SUB: 0, DEL: 0, INS: 0}
        for op in self.ops:
            out[op.kind] += 1
        return out

    def ref_verdicts(self) -> list[str]:
        """Per reference-position op kind (match / sub / del), in order."""
        return [op.kind for op in self.ops if op.kind in (MATCH, SUB, DEL)]


def align(ref, hyp) -> Alignment:
    """Minimum-edit alignment with unit costs.

    Ties at equal total cost prefer match over substitution over deletion
    over insertion, resolved while backtracking from the end.
    """
    ref = tuple(ref)
    hyp = tuple(hyp)
    R, H = len(ref), len(hyp)
    d = [[0] * (H + 1) for _ in range(R + 1)]
    for i in range(1, R + 1):
        d[i][0] = i
    for j in range(1, H + 1):
        d[0][j] = j
    for i in range(1, R + 1):
        row = d[i]
        prev = d[i - 1]
        ri = ref[i - 1]
        for j in range(1, H + 1):
            same = ri == hyp[j - 1]
            best = prev[j - 1] + (0 if same else 1)
            up = prev[j] + 1
            if up < best:
                best = up
            left = row[j - 1] + 1
            if left < best:
                best = left
            row[j] = best

    ops: list[AlignOp] = []
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i][j] == d[i - 1][j - 1]:
            ops.append(AlignOp(MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + 1:
            ops.append(AlignOp(SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(AlignOp(DEL, ref[i - 1], None))
            i = i - 1
        else:
            ops.append(AlignOp(INS, None, hyp[j - 1]))
            j = j - 1
    ops.reverse()
    return Alignment(ops)


@dataclass
class WerResult:
    wer: float
    ref_words: int
    substitutions: int
    deletions: int
    insertions: int
    matches: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(pairs) -> WerResult:
    """Corpus-pooled word error rate: total errors over total reference words."""
    subs = dels = inss = matches = ref_words = 0
    for ref, hyp in pairs:
        counts = align(ref, hyp).counts()
        subs += counts[SUB]
        dels += counts[DEL]
        inss += counts[INS]
        matches += counts[MATCH]
        ref_words += len(tuple(ref))
    if ref_words < 1:
        raise ValueError("WER needs at least one reference word")
    rate = (subs + dels + inss) / ref_words
    return WerResult(rate, ref_words, subs, dels, inss, matches)


def oracle_wer(lattice: Lattice, ref) -> float:
    """Minimum WER over all lattice paths against the reference.

    Exact dynamic program over (lattice state, reference position); no path
    enumeration, so it handles lattices with astronomically many paths.
    """
    check_valid(lattice)
    ref = tuple(ref)
    R = len(ref)
    if R == 0:
        raise ValueError("oracle WER needs a non-empty reference")
    INF = float("inf")
    dist = [[INF] * (R + 1) for _ in range(lattice.num_states)]
    dist[lattice.start][0] = 0.0
    adj = lattice.out_arcs()
    for state in _topo_order(lattice):
        row = dist[state]
        # Deletions consume reference tokens without moving in the lattice.
        for j in range(R):
            if row[j] + 1 < row[j + 1]:
                row[j + 1] = row[j] + 1
        for arc in adj[state]:
            trow = dist[arc.to_state]
            label = arc.label
            for j in range(R):
                c = row[j] + (0 if label == ref[j] else 1)
                if c < trow[j + 1]:
                    trow[j + 1] = c
            for j in range(R + 1):
                c = row[j] + 1  # insertion of this arc's token
                if c < trow[j]:
                    trow[j] = c
    best = min(dist[f][R] for f in lattice.finals)
    return best / R


# ---------------------------------------------------------------------------
# Salient terms and STER
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SalientTerm:
    term: tuple[str, ...]  # one token (unigram) or two (bigram)
    tfidf: float


@dataclass
class SalientTermSet:
    fraction: float
    documents: dict[str, list[SalientTerm]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "documents": {
                doc_id: [{"term": " ".join(t.term), "tfidf": t.tfidf} for t in terms]
                for doc_id, terms in self.documents.items()
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SalientTermSet":
        try:
            fraction = float(obj["fraction"])
            documents = {
                doc_id: [
                    SalientTerm(tuple(entry["term"].split()), float(entry["tfidf"]))
                    for entry in entries
                ]
                for doc_id, entries in obj["documents"].items()
            }
        except (KeyError, TypeError, AttributeError) as exc:
            raise LatticeFormatError(f"bad salient-term file: {exc}") from exc
        return cls(fraction=fraction, documents=documents)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "SalientTermSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _term_positions(tokens: tuple[str, ...], term: tuple[str, ...]) -> list[tuple[int, ...]]:
    """All occurrences of a term; each occurrence is its covered positions."""
    width = len(term)
    return [
        tuple(range(i, i + width))
        for i in range(len(tokens) - width + 1)
        if tuple(tokens[i : i + width]) == term
    ]


def salient_terms(ref_corpus, fraction: float, lowercase: bool = False) -> SalientTermSet:
    """Select the top TF-IDF unigrams and bigrams per document.

    tf is the raw in-document count, idf is ln(D / df).  Terms are ranked by
    tf*idf (ties: higher idf, then lexicographic) and selected greedily until
    the covered share of the document's token positions reaches ``fraction``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    docs = [(doc_id, tokenize(text, lowercase)) for doc_id, text in ref_corpus]
    if len(docs) < 2:
        raise ValueError("salient-term extraction needs at least 2 documents")
    seen = set()
    for doc_id, _ in docs:
        if doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        seen.add(doc_id)

    def doc_terms(tokens: tuple[str, ...]) -> dict[tuple[str, ...], int]:
        counts: dict[tuple[str, ...], int] = {}
        for tok in tokens:
            counts[(tok,)] = counts.get((tok,), 0) + 1
        for i in range(len(tokens) - 1):
            bg = (tokens[i], tokens[i + 1])
            counts[bg] = counts.get(bg, 0) + 1
        return counts

    per_doc = [(doc_id, tokens, doc_terms(tokens)) for doc_id, tokens in docs]
    df: dict[tuple[str, ...], int] = {}
    for _, _, counts in per_doc:
        for term in counts:
            df[term] = df.get(term, 0) + 1
    n_docs = len(per_doc)
    idf = {term: math.log(n_docs / d) for term, d in df.items()}

    result = SalientTermSet(fraction=fraction)
    for doc_id, tokens, counts in per_doc:
        ranked = sorted(
            ((tf * idf[term], idf[term], term) for term, tf in counts.items()),
            key=lambda item: (-item[0], -item[1], item[2]),
        )
        covered: set[int] = set()
        goal = fraction * len(tokens)
        selected: list[SalientTerm] = []
        for tfidf, _, term in ranked:
            if len(covered) >= goal:
                break
            selected.append(SalientTerm(term, tfidf))
            for occ in _term_positions(tokens, term):
                covered.update(occ)
        result.documents[doc_id] = selected
    return result


@dataclass
class SterResult:
    ster: float
    total_occurrences: int
    errored_occurrences: int


def ster(pairs, term_set: SalientTermSet) -> SterResult:
    """Salient term error rate over (doc_id, ref tokens, hyp tokens) pairs.

    Each occurrence of a selected term in a reference counts as an error iff
    any of its token positions aligns as a deletion or substitution.
    Insertions never contribute.
    """
    total = errored = 0
    for doc_id, ref, hyp in pairs:
        ref = tuple(ref)
        hyp = tuple(hyp)
        if doc_id not in term_set.documents:
            raise ValueError(f"no salient terms for doc_id {doc_id!r}")
        verdicts = align(ref, hyp).ref_verdicts()
        for term in term_set.documents[doc_id]:
            for occ in _term_positions(ref, term.term):
                total += 1
                if any(verdicts[pos] != MATCH for pos in occ):
                    errored += 1
    if total == 0:
        raise ValueError("no salient term occurrences in the references")
    return SterResult(errored / total, total, errored)


# ---------------------------------------------------------------------------
# Lattice statistics and report assembly
# ---------------------------------------------------------------------------


def avg_paths_per_segment(utts) -> float:
    """Arithmetic mean of exact per-segment path counts."""
    counts = [count_paths(seg) for utt in utts for seg in utt.segments]
    if not counts:
        raise ValueError("no segments")
    return sum(counts) / len(counts)


def format_count(x: float) -> str:
    """Compact rendering; scientific notation at 1e6 and above (e.g. 4e20)."""
    if x >= 1e6:
        mantissa, exp = f"{x:.2g}".split("e")
        if mantissa.endswith(".0"):
            mantissa = mantissa[:-2]
        return f"{mantissa}e{int(exp)}"
    return f"{x:g}"


@dataclass
class EvalReport:
    wer: float
    ref_words: int
    substitutions: int
    deletions: int
    insertions: int
    oracle_wer: float | None = None
    ster: float | None = None
    salient_total: int | None = None
    salient_errors: int | None = None
    avg_paths_per_segment: float | None = None
    num_utterances: int = 0
    num_segments: int = 0
    per_document: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "wer": self.wer,
            "ref_words": self.ref_words,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "oracle_wer": self.oracle_wer,
            "ster": self.ster,
            "salient_total": self.salient_total,
            "salient_errors": self.salient_errors,
            "avg_paths_per_segment": self.avg_paths_per_segment,
            "avg_paths_per_segment_display": (
                None
                if self.avg_paths_per_segment is None
                else format_count(self.avg_paths_per_segment)
            ),
            "num_utterances": self.num_utterances,
            "num_segments": self.num_segments,
            "per_document": self.per_document,
        }
        return out
