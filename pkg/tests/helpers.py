"""Independent oracles and small builders shared by the test suite.

Everything here deliberately avoids the library's own algorithms: paths are
enumerated by naive depth-first search, edit distance by plain recursion,
decoding by exhaustive iteration over all frame-label assignments.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np

from latrescore.decoder import EmissionMatrix
from latrescore.lattice import Arc, Lattice

BLANK = "<b>"


def emissions_from_probs(vocab, rows, blank=BLANK):
    """Emission matrix from per-frame unnormalized probability dicts."""
    mat = []
    for row in rows:
        probs = [row.get(t, 1e-4) for t in vocab]
        total = sum(probs)
        mat.append([math.log(p / total) for p in probs])
    return EmissionMatrix(vocab=tuple(vocab), blank=blank, logits=np.array(mat))


def chain_lattice(labels, hat=-1.0, ilm=-0.5, segment_id="chain"):
    arcs = [
        Arc(i, i + 1, lab, hat, ilm) for i, lab in enumerate(labels)
    ]
    return Lattice(
        segment_id=segment_id,
        num_states=len(labels) + 1,
        start=0,
        finals=frozenset({len(labels)}),
        arcs=tuple(arcs),
    )


def diamond_lattice(n_layers, labels=("a", "b"), hats=(-1.0, -2.0), segment_id="diamond"):
    """n_layers sequential 2-way splits: 2**n_layers paths."""
    arcs = []
    for layer in range(n_layers):
        for lab, hat in zip(labels, hats):
            arcs.append(Arc(layer, layer + 1, f"{lab}{layer}", hat, -0.1))
    return Lattice(
        segment_id=segment_id,
        num_states=n_layers + 1,
        start=0,
        finals=frozenset({n_layers}),
        arcs=tuple(arcs),
    )


def brute_force_paths(lattice):
    """All start-to-final paths by naive recursion: (tokens, hat, ilm)."""
    adj = {}
    for arc in lattice.arcs:
        adj.setdefault(arc.from_state, []).append(arc)
    out = []

    def walk(state, tokens, hat, ilm):
        if state in lattice.finals:
            out.append((tuple(tokens), hat, ilm))
            return
        for arc in adj.get(state, []):
            walk(arc.to_state, tokens + [arc.label], hat + arc.hat, ilm + arc.ilm)

    walk(lattice.start, [], 0.0, 0.0)
    return out


def brute_force_edit(ref, hyp):
    """Plain exponential recursion for the minimum edit distance."""
    def go(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        best = go(i - 1, j - 1) + (0 if ref[i - 1] == hyp[j - 1] else 1)
        best = min(best, go(i - 1, j) + 1)
        best = min(best, go(i, j - 1) + 1)
        return best

    return go(len(ref), len(hyp))


def random_dag_lattice(rng: random.Random, n_states=8, n_labels=3, extra_arcs=6, segment_id="rand"):
    """A random trimmed DAG built as a chain spine plus forward shortcuts."""
    labels = [f"t{i}" for i in range(n_labels)]
    arcs = []
    for s in range(n_states - 1):
        arcs.append(
            Arc(s, s + 1, rng.choice(labels), rng.uniform(-3, -0.1), rng.uniform(-2, -0.1))
        )
    for _ in range(extra_arcs):
        a = rng.randrange(0, n_states - 1)
        b = rng.randrange(a + 1, n_states)
        arcs.append(
            Arc(a, b, rng.choice(labels), rng.uniform(-3, -0.1), rng.uniform(-2, -0.1))
        )
    return Lattice(
        segment_id=segment_id,
        num_states=n_states,
        start=0,
        finals=frozenset({n_states - 1}),
        arcs=tuple(arcs),
    )


def exhaustive_decode(emissions, label_lm, label_lm_weight, carried=(), fusion=None):
    """Global argmax over every frame-label assignment (tiny inputs only).

    Mirrors the decoder's scoring rule by definition: emission log-probs for
    every frame, a weighted label-LM term per emitted token, optional fusion
    increments, blanks emit nothing.  Alignments emitting no token at all are
    excluded.  Returns (tokens, score) with lexicographic tie-breaking.
    """
    T = emissions.num_frames
    rows = emissions.logits.tolist()
    vocab = emissions.vocab
    best = None
    for assignment in itertools.product(range(len(vocab)), repeat=T):
        tokens = []
        score = 0.0
        ok = True
        for t, idx in enumerate(assignment):
            symbol = vocab[idx]
            if symbol == emissions.blank:
                inc = rows[t][idx]
            else:
                lm_lp = label_lm.logprob(symbol, tuple(carried) + tuple(tokens))
                inc = rows[t][idx] + label_lm_weight * lm_lp
                if fusion is not None:
                    prev = (
                        fusion.scorer.score(" ".join(carried), [" ".join(tokens)])[0]
                        if tokens
                        else 0.0
                    )
                    new = fusion.scorer.score(" ".join(carried), [" ".join(tokens + [symbol])])[0]
                    inc += fusion.weight * (new - prev)
                    inc -= fusion.ilm_weight * lm_lp
                tokens.append(symbol)
            if not math.isfinite(inc):
                ok = False
                break
            score += inc
        if not ok or not tokens:
            continue
        key = (-score, tuple(tokens))
        if best is None or key < best[0]:
            best = (key, tuple(tokens), score)
    assert best is not None, "no non-empty alignment had a finite score"
    return best[1], best[2]


def max_hat_for_tokens(lattice, tokens):
    """Max hat over lattice paths whose label sequence equals ``tokens``.

    Returns -inf when no such path exists.  Independent check that a decode
    result's 1-best really lives in its lattice at its reported score.
    """
    tokens = tuple(tokens)
    adj = {}
    for arc in lattice.arcs:
        adj.setdefault(arc.from_state, []).append(arc)
    best = {(lattice.start, 0): 0.0}
    frontier = [(lattice.start, 0)]
    while frontier:
        state, pos = frontier.pop()
        here = best[(state, pos)]
        if pos == len(tokens):
            continue
        for arc in adj.get(state, []):
            if arc.label != tokens[pos]:
                continue
            key = (arc.to_state, pos + 1)
            cand = here + arc.hat
            if key not in best or cand > best[key]:
                best[key] = cand
                frontier.append(key)
    scores = [
        v for (state, pos), v in best.items() if pos == len(tokens) and state in lattice.finals
    ]
    return max(scores) if scores else -math.inf
