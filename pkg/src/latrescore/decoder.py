"""Desk-scale time-synchronous beam-search decoder over synthetic emissions.

The decoder searches frame-label alignments: at every frame each active
hypothesis either consumes the frame with the blank symbol (emitting nothing)
or emits one non-blank token.  A hypothesis's running score is the sum of its
emission log-probabilities plus a weighted label-LM term per emitted token
(plus incremental external-LM fusion terms when fusion is configured).  At
most ``beam_size`` hypotheses survive each frame.

Search states are keyed by (emitted-token count, label context): with state
merging enabled the context is the last ``label_context`` labels, so
hypotheses that differ only in older labels collapse into one state and the
resulting lattice recombines into a proper digraph; without merging the
context is the full label sequence and the lattice is a trie over the
surviving hypotheses.  Fusion scores depend on the entire prefix, which makes
merging unsound, so configuring fusion forces merging off.

The emitted lattice is blank-free: blank transitions are folded into the
neighbouring token arcs during construction, and each surviving hypothesis
ends in a dedicated final state so finals never carry outgoing arcs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, LatticeFormatError
from .lattice import Arc, Lattice, Utterance
from .scoring import Scorer

__all__ = [
    "EmissionMatrix",
    "LabelLM",
    "FusionConfig",
    "DecoderConfig",
    "SegmentDecodeResult",
    "BeamTrace",
    "decode_segment",
    "decode_utterance",
    "build_lattice",
    "read_emissions",
    "write_emissions",
]

_NORM_TOL = 1e-9


def _logsumexp(values) -> float:
    m = max(values)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in values))


@dataclass
class EmissionMatrix:
    """Per-frame log-distributions over a vocabulary that includes blank."""

    vocab: tuple[str, ...]
    blank: str
    logits: np.ndarray  # shape (frames, len(vocab))

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.blank not in self.vocab:
            raise ValueError(f"blank symbol {self.blank!r} not in vocabulary")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocabulary entries must be unique")
        for tok in self.vocab:
            if tok != self.blank and (tok == "" or any(c.isspace() for c in tok)):
                raise ValueError(f"bad vocabulary token {tok!r}")
        if self.logits.ndim != 2 or self.logits.shape[1] != len(self.vocab):
            raise ValueError("logits must have shape (frames, vocab size)")
        for t in range(self.logits.shape[0]):
            lse = _logsumexp(self.logits[t].tolist())
            if abs(lse) > _NORM_TOL:
                raise ValueError(f"frame {t} is not log-normalized (logsumexp={lse:g})")

    @property
    def num_frames(self) -> int:
        return int(self.logits.shape[0])


class LabelLM:
    """Limited-context label prior used during first-pass search.

    ``table`` maps history tuples (any length below ``order``) to normalized
    log-distributions over tokens.  Lookups truncate the history to the last
    ``order - 1`` labels, then back off to shorter entries; the empty history
    must always be present.
    """

    def __init__(self, order: int, table: dict[tuple[str, ...], dict[str, float]]):
        if order < 1:
            raise ValueError("order must be >= 1")
        if () not in table:
            raise ValueError("label LM table must contain the empty history")
        for hist, dist in table.items():
            if len(hist) > order - 1:
                raise ValueError(f"history {hist!r} longer than order-1")
            lse = _logsumexp(list(dist.values()))
            if abs(lse) > _NORM_TOL:
                raise ValueError(f"distribution for history {hist!r} is not normalized")
        self.order = order
        self.table = table

    @classmethod
    def uniform(cls, tokens, order: int = 1) -> "LabelLM":
        tokens = tuple(tokens)
        lp = -math.log(len(tokens))
        return cls(order, {(): {tok: lp for tok in tokens}})

    def logprob(self, token: str, history) -> float:
        hist = tuple(history)[max(0, len(history) - (self.order - 1)) :]
        while hist not in self.table and hist:
            hist = hist[1:]
        return self.table[hist].get(token, -math.inf)

    @classmethod
    def train(cls, sentences, vocab, order: int = 2, smoothing: float = 0.5) -> "LabelLM":
        """Additively smoothed conditional estimates over a fixed vocabulary."""
        vocab = tuple(vocab)
        if order < 1:
            raise ValueError("order must be >= 1")
        counts: dict[tuple[str, ...], dict[str, int]] = {}
        for sent in sentences:
            toks = tuple(sent.split()) if isinstance(sent, str) else tuple(sent)
            for i, tok in enumerate(toks):
                if tok not in vocab:
                    continue
                for k in range(order):
                    if i - k < 0:
                        break
                    hist = toks[i - k : i]
                    if any(h not in vocab for h in hist):
                        continue
                    slot = counts.setdefault(hist, {})
                    slot[tok] = slot.get(tok, 0) + 1
        table: dict[tuple[str, ...], dict[str, float]] = {}
        for hist, slot in counts.items():
            total = sum(slot.values()) + smoothing * len(vocab)
            table[hist] = {
                tok: math.log((slot.get(tok, 0) + smoothing) / total) for tok in vocab
            }
        if () not in table:
            table[()] = {tok: -math.log(len(vocab)) for tok in vocab}
        return cls(order=order, table=table)


@dataclass(frozen=True)
class FusionConfig:
    scorer: Scorer
    weight: float
    ilm_weight: float = 0.0

    def __post_init__(self):
        if self.weight < 0 or self.ilm_weight < 0:
            raise ValueError("fusion weights must be non-negative")


@dataclass
class DecoderConfig:
    beam_size: int
    label_context: int = 1
    merge_states: bool = True
    label_lm_weight: float = 1.0
    fusion: FusionConfig | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.label_context < 1:
            raise ValueError("label_context must be >= 1")
        if self.label_lm_weight < 0:
            raise ValueError("label_lm_weight must be non-negative")

    @property
    def effective_merge(self) -> bool:
        # Fusion conditions every expansion on the whole prefix, so hypotheses
        # with equal short contexts are no longer interchangeable.
        return self.merge_states and self.fusion is None


@dataclass
class _TraceNode:
    node_id: int
    frame: int
    ulen: int
    tokens: tuple[str, ...]  # best-scoring label sequence reaching this state
    score: float
    entry: tuple[int, str | None, float, float] | None  # (src, label, inc, ilm)


@dataclass(frozen=True)
class _TokenArc:
    src: int
    dst: int
    label: str
    hat: float
    ilm: float


@dataclass
class BeamTrace:
    """Everything a completed segment search recorded, for lattice builds."""

    segment_id: str
    num_frames: int
    carried_context: tuple[str, ...]
    label_context: int
    nodes: list[_TraceNode] = field(default_factory=list)
    token_arcs: list[_TokenArc] = field(default_factory=list)
    blank_next: dict[int, tuple[int, float]] = field(default_factory=dict)
    finals: list[int] = field(default_factory=list)
    start: int = 0


@dataclass
class SegmentDecodeResult:
    lattice: Lattice
    one_best: tuple[str, ...]
    one_best_score: float
    trace: BeamTrace


def decode_segment(
    emissions: EmissionMatrix,
    label_lm: LabelLM,
    config: DecoderConfig,
    carried_context=(),
    segment_id: str = "seg",
) -> SegmentDecodeResult:
    """Beam-search one segment and build its lattice.

    ``carried_context`` seeds the label-LM history (and the fusion context)
    but contributes no arcs.  Ties are broken lexicographically by token
    sequence everywhere, so decoding is deterministic.

    Hypotheses that never emit a token cannot live in a blank-free lattice;
    they may ride in the beam but are dropped at segment end, and decoding
    fails with :class:`DecodeError` if nothing else survives.
    """
    T = emissions.num_frames
    if T == 0:
        raise DecodeError("cannot decode a segment with zero frames")
    merge = config.effective_merge
    if merge and config.label_context < label_lm.order - 1:
        raise DecodeError(
            f"state merging with label_context={config.label_context} would break "
            f"an order-{label_lm.order} label LM; need label_context >= order-1"
        )
    carried = tuple(carried_context)

    vocab = emissions.vocab
    blank_idx = vocab.index(emissions.blank)
    nonblank = [(i, tok) for i, tok in enumerate(vocab) if i != blank_idx]
    if not nonblank:
        raise DecodeError("vocabulary contains only the blank symbol")
    rows = emissions.logits.tolist()
    lam = config.label_lm_weight
    n_ctx = config.label_context

    trace = BeamTrace(
        segment_id=segment_id,
        num_frames=T,
        carried_context=carried,
        label_context=n_ctx,
    )
    nodes = trace.nodes
    start = _TraceNode(0, 0, 0, (), 0.0, None)
    nodes.append(start)

    fusion = config.fusion
    fusion_ctx = " ".join(carried)
    elm_prefix: dict[tuple[str, ...], float] = {(): 0.0}

    def state_key(tokens: tuple[str, ...]):
        if merge:
            return (len(tokens), tokens[-n_ctx:])
        return tokens

    active = [start]
    for t in range(T):
        row = rows[t]
        if fusion is not None:
            fresh = sorted(
                {
                    node.tokens + (tok,)
                    for node in active
                    for _, tok in nonblank
                    if node.tokens + (tok,) not in elm_prefix
                }
            )
            if fresh:
                scores = fusion.scorer.score(fusion_ctx, [" ".join(p) for p in fresh])
                elm_prefix.update(zip(fresh, scores))

        candidates: dict[tuple, _TraceNode] = {}

        def reach(key, tokens, src: _TraceNode, label: str | None, inc: float, ilm: float):
            node = candidates.get(key)
            if node is None:
                node = _TraceNode(len(nodes), t + 1, len(tokens), tokens, -math.inf, None)
                nodes.append(node)
                candidates[key] = node
            cand = src.score + inc
            if (-cand, tokens) < (-node.score, node.tokens):
                node.score = cand
                node.tokens = tokens
                node.entry = (src.node_id, label, inc, ilm)
            return node

        for node in active:
            # Blank: consume the frame, emit nothing.
            b_inc = row[blank_idx]
            if math.isfinite(b_inc):
                dst = reach(state_key(node.tokens), node.tokens, node, None, b_inc, 0.0)
                trace.blank_next[node.node_id] = (dst.node_id, b_inc)
            # Token emissions.
            hist = carried + node.tokens
            for idx, tok in nonblank:
                lm_lp = label_lm.logprob(tok, hist)
                inc = row[idx] + lam * lm_lp
                if fusion is not None:
                    new = node.tokens + (tok,)
                    inc += fusion.weight * (elm_prefix[new] - elm_prefix[node.tokens])
                    inc -= fusion.ilm_weight * lm_lp
                if not math.isfinite(inc):
                    continue
                new_tokens = node.tokens + (tok,)
                dst = reach(state_key(new_tokens), new_tokens, node, tok, inc, lm_lp)
                trace.token_arcs.append(
                    _TokenArc(node.node_id, dst.node_id, tok, inc, lm_lp)
                )

        ranked = sorted(candidates.values(), key=lambda nd: (-nd.score, nd.tokens))
        active = ranked[: config.beam_size]
        if not active:
            raise DecodeError(f"beam emptied at frame {t}: all expansions scored -inf")

    survivors = [node for node in active if node.ulen >= 1]
    if not survivors:
        raise DecodeError("no hypothesis with at least one token survived the beam")
    trace.finals = [node.node_id for node in survivors]
    best = min(survivors, key=lambda nd: (-nd.score, nd.tokens))

    lattice = build_lattice(trace, merge=merge)
    return SegmentDecodeResult(
        lattice=lattice,
        one_best=best.tokens,
        one_best_score=best.score,
        trace=trace,
    )


def decode_utterance(
    emission_segments,
    label_lm: LabelLM,
    config: DecoderConfig,
    utterance_id: str = "utt",
    segment_ids=None,
    reference=None,
):
    """Decode segments in order, carrying each 1-best forward as context.

    Returns the assembled :class:`Utterance` and the per-segment results.
    """
    emission_segments = list(emission_segments)
    if not emission_segments:
        raise DecodeError("utterance has no segments")
    if segment_ids is None:
        segment_ids = [f"{utterance_id}-s{i:03d}" for i in range(len(emission_segments))]
    results: list[SegmentDecodeResult] = []
    carried: tuple[str, ...] = ()
    lattices = []
    for seg_id, emissions in zip(segment_ids, emission_segments):
        result = decode_segment(
            emissions, label_lm, config, carried_context=carried, segment_id=seg_id
        )
        lattices.append(result.lattice)
        results.append(result)
        carried = result.one_best
    utt = Utterance(
        utterance_id=utterance_id,
        segments=tuple(lattices),
        reference=None if reference is None else tuple(reference),
    )
    return utt, results


# ---------------------------------------------------------------------------
# Lattice construction from a beam trace
# ---------------------------------------------------------------------------


def build_lattice(trace: BeamTrace, merge: bool) -> Lattice:
    """Build a segment lattice from a completed beam trace.

    ``merge=False`` builds a trie over the surviving hypotheses (path count
    bounded by the beam size).  ``merge=True`` keys states by (emitted-token
    count, last ``label_context`` labels) so paths recombine; every trie path
    is contained in the merged lattice's path set.
    """
    if not trace.finals or not trace.nodes:
        raise DecodeError("cannot build a lattice from an empty beam trace")
    if merge:
        return _build_merged(trace)
    return _build_trie(trace)


def _backtrace(trace: BeamTrace, node_id: int):
    steps = []
    node = trace.nodes[node_id]
    while node.entry is not None:
        steps.append(node.entry)
        node = trace.nodes[node.entry[0]]
    steps.reverse()
    return steps


def _build_trie(trace: BeamTrace) -> Lattice:
    # One survivor = one root-to-leaf path.  Shared prefixes share arcs, so a
    # single arc cannot carry every survivor's own (blank-dependent) score;
    # instead each internal node gets the max prefix score over the survivors
    # through it and arcs carry potential differences.  Sums then telescope to
    # each survivor's exact total.
    survivors = []
    for fid in trace.finals:
        final = trace.nodes[fid]
        if final.ulen < 1:
            continue
        cum = 0.0
        prefix_scores: list[float] = []
        ilms: list[float] = []
        tokens: list[str] = []
        for _, label, inc, ilm in _backtrace(trace, fid):
            cum += inc
            if label is not None:
                tokens.append(label)
                prefix_scores.append(cum)
                ilms.append(ilm)
        survivors.append((tuple(tokens), prefix_scores, final.score, ilms))
    survivors.sort(key=lambda s: s[0])

    potentials: dict[tuple[str, ...], float] = {(): 0.0}
    ilm_at: dict[tuple[str, ...], float] = {}
    for tokens, prefix_scores, _, ilms in survivors:
        for u in range(1, len(tokens)):
            prefix = tokens[:u]
            sc = prefix_scores[u - 1]
            if prefix not in potentials or sc > potentials[prefix]:
                potentials[prefix] = sc
            ilm_at[prefix] = ilms[u - 1]

    prefixes = sorted(potentials, key=lambda p: (len(p), p))
    state_of = {p: i for i, p in enumerate(prefixes)}
    arcs: list[Arc] = []
    for p in prefixes:
        if not p:
            continue
        parent = state_of[p[:-1]]
        arcs.append(
            Arc(parent, state_of[p], p[-1], potentials[p] - potentials[p[:-1]], ilm_at[p])
        )
    finals = []
    next_state = len(prefixes)
    for tokens, _, total, ilms in survivors:
        parent = state_of[tokens[:-1]]
        arcs.append(
            Arc(parent, next_state, tokens[-1], total - potentials[tokens[:-1]], ilms[-1])
        )
        finals.append(next_state)
        next_state += 1

    arcs.sort(key=lambda a: (a.from_state, a.to_state, a.label))
    return Lattice(
        segment_id=trace.segment_id,
        num_states=next_state,
        start=0,
        finals=frozenset(finals),
        arcs=tuple(arcs),
    )


def _build_merged(trace: BeamTrace) -> Lattice:
    n_ctx = trace.label_context

    # Pool trace nodes by (frame, emitted count, last-n labels).  For traces
    # searched with merging this is the identity; for unmerged traces it
    # recombines hypotheses after the fact.
    def gkey(node: _TraceNode):
        return (node.frame, node.ulen, node.tokens[-n_ctx:] if node.ulen else ())

    gid_of: dict[tuple, int] = {}
    node_gid: dict[int, int] = {}
    for node in trace.nodes:
        key = gkey(node)
        if key not in gid_of:
            gid_of[key] = len(gid_of)
        node_gid[node.node_id] = gid_of[key]
    start = node_gid[trace.start]

    token_arcs: list[_TokenArc] = []
    seen_arcs: set[tuple] = set()
    for arc in trace.token_arcs:
        pooled = _TokenArc(node_gid[arc.src], node_gid[arc.dst], arc.label, arc.hat, arc.ilm)
        key = (pooled.src, pooled.dst, pooled.label, pooled.hat, pooled.ilm)
        if key not in seen_arcs:
            seen_arcs.add(key)
            token_arcs.append(pooled)

    blank_next: dict[int, tuple[int, float]] = {}
    for src, (dst, inc) in trace.blank_next.items():
        blank_next[node_gid[src]] = (node_gid[dst], inc)

    finals = sorted({node_gid[f] for f in trace.finals if trace.nodes[f].ulen >= 1})

    # Fold blank chains away: a real lattice node is any pooled state with an
    # incoming token arc (plus the start), and each node's outgoing label arcs
    # are collected along its blank chain with the blank scores added on.
    token_out: dict[int, list[_TokenArc]] = {}
    for arc in token_arcs:
        token_out.setdefault(arc.src, []).append(arc)
    l_nodes = {start} | {arc.dst for arc in token_arcs}

    label_arcs: list[tuple[int, int, str, float, float]] = []
    for x in sorted(l_nodes):
        cur, beta = x, 0.0
        for _ in range(trace.num_frames + 1):
            for arc in token_out.get(cur, ()):
                label_arcs.append((x, arc.dst, arc.label, beta + arc.hat, arc.ilm))
            nxt = blank_next.get(cur)
            if nxt is None:
                break
            cur, inc = nxt
            beta += inc

    # Trailing blanks: walk back along blank chains from each surviving
    # state; every lattice node on the chain ends there with the accumulated
    # blank score folded into a twin final's incoming arcs.
    rblank = {dst: (src, inc) for src, (dst, inc) in blank_next.items()}
    closures: dict[int, float] = {}
    for f in finals:
        cur, beta = f, 0.0
        while True:
            if cur in l_nodes:
                closures[cur] = beta
            prev = rblank.get(cur)
            if prev is None:
                break
            cur, inc = prev
            beta += inc

    arcs_in: dict[int, list[tuple[int, int, str, float, float]]] = {}
    for arc in label_arcs:
        arcs_in.setdefault(arc[1], []).append(arc)

    twins: dict[int, int] = {}
    next_twin = max(l_nodes) + 1 if l_nodes else 1
    twin_arcs: list[tuple[int, int, str, float, float]] = []
    for z in sorted(closures):
        beta = closures[z]
        twins[z] = next_twin
        for src, _, label, hat, ilm in arcs_in.get(z, ()):
            twin_arcs.append((src, next_twin, label, hat + beta, ilm))
        next_twin += 1

    all_arcs = label_arcs + twin_arcs
    final_set = set(twins.values())

    # Trim to states on a start-to-final path.
    fwd = {start}
    out_by_src: dict[int, list[tuple]] = {}
    in_by_dst: dict[int, list[tuple]] = {}
    for arc in all_arcs:
        out_by_src.setdefault(arc[0], []).append(arc)
        in_by_dst.setdefault(arc[1], []).append(arc)
    stack = [start]
    while stack:
        s = stack.pop()
        for arc in out_by_src.get(s, ()):
            if arc[1] not in fwd:
                fwd.add(arc[1])
                stack.append(arc[1])
    bwd = set(final_set)
    stack = list(final_set)
    while stack:
        s = stack.pop()
        for arc in in_by_dst.get(s, ()):
            if arc[0] not in bwd:
                bwd.add(arc[0])
                stack.append(arc[0])
    keep = fwd & bwd
    if start not in keep:
        raise DecodeError("no surviving hypothesis is reachable from the start state")

    order = sorted(keep - final_set) + sorted(keep & final_set)
    renum = {old: new for new, old in enumerate(order)}
    kept_arcs = [
        Arc(renum[a[0]], renum[a[1]], a[2], a[3], a[4])
        for a in all_arcs
        if a[0] in keep and a[1] in keep
    ]
    kept_arcs.sort(key=lambda a: (a.from_state, a.to_state, a.label))
    return Lattice(
        segment_id=trace.segment_id,
        num_states=len(order),
        start=renum[start],
        finals=frozenset(renum[f] for f in final_set if f in keep),
        arcs=tuple(kept_arcs),
    )


# ---------------------------------------------------------------------------
# Emission file format
# ---------------------------------------------------------------------------

_EMIT_KEYS = {"vocab", "blank", "segments"}


def read_emissions(path: str | Path) -> list[EmissionMatrix]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise LatticeFormatError(f"{path}: emission file must hold a JSON object")
    for key in obj:
        if key not in _EMIT_KEYS:
            raise LatticeFormatError(f"unknown field {key!r} in emission file")
    for key in _EMIT_KEYS:
        if key not in obj:
            raise LatticeFormatError(f"missing field {key!r} in emission file")
    vocab = tuple(obj["vocab"])
    blank = obj["blank"]
    out = []
    for i, seg in enumerate(obj["segments"]):
        try:
            out.append(EmissionMatrix(vocab=vocab, blank=blank, logits=np.array(seg, dtype=np.float64)))
        except ValueError as exc:
            raise LatticeFormatError(f"{path}: segment {i}: {exc}") from exc
    return out


def write_emissions(path: str | Path, matrices) -> None:
    matrices = list(matrices)
    if not matrices:
        raise ValueError("no emission segments to write")
    vocab = matrices[0].vocab
    blank = matrices[0].blank
    for m in matrices:
        if m.vocab != vocab or m.blank != blank:
            raise ValueError("all segments in one file must share a vocabulary")
    obj = {
        "vocab": list(vocab),
        "blank": blank,
        "segments": [m.logits.tolist() for m in matrices],
    }
    Path(path).write_text(json.dumps(obj), encoding="utf-8")
