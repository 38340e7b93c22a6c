import math
import random

import pytest

from latrescore.lattice import Arc, Lattice, Utterance, enumerate_paths
from latrescore.rescore import (
    Hypothesis,
    RescoreParams,
    combine,
    first_pass_transcript,
    nbest,
    read_transcripts,
    rescore_segment,
    rescore_utterance,
    write_transcripts,
)
from latrescore.scoring import Scorer, UniformScorer, ngram_train

from helpers import chain_lattice, diamond_lattice, random_dag_lattice


class TableScorer(Scorer):
    """Fixed per-text scores; unknown texts get a very low score."""

    name = "table"

    def __init__(self, table, default=-100.0):
        self.table = dict(table)
        self.default = default
        self.requests = []

    def score(self, context, targets):
        self.requests.append((context, tuple(targets)))
        return [self.table.get((context, t), self.table.get(("", t), self.default)) for t in targets]


# ---------------------------------------------------------------------------
# nbest
# ---------------------------------------------------------------------------


def test_nbest_single_path():
    hyps = nbest(chain_lattice(["a", "b"]), 5)
    assert len(hyps) == 1
    assert hyps[0].tokens == ("a", "b")


def test_nbest_diamond_order():
    arcs = (
        Arc(0, 1, "a", -1.0, 0.0),
        Arc(0, 1, "b", -2.0, 0.0),
        Arc(1, 2, "c", -0.5, 0.0),
    )
    lat = Lattice("d", 3, 0, frozenset({2}), arcs)
    hyps = nbest(lat, 1)
    assert [h.tokens for h in hyps] == [("a", "c")]
    hyps = nbest(lat, 5)
    assert [h.tokens for h in hyps] == [("a", "c"), ("b", "c")]


def test_nbest_dedupes_keeping_max_hat():
    # Two parallel routes spell the same sequence at different scores.
    arcs = (
        Arc(0, 1, "a", -1.0, -0.1),
        Arc(0, 2, "a", -3.0, -0.9),
        Arc(1, 3, "b", -1.0, -0.1),
        Arc(2, 3, "b", -1.0, -0.9),
    )
    lat = Lattice("p", 4, 0, frozenset({3}), arcs)
    hyps = nbest(lat, 5)
    assert len(hyps) == 1
    assert hyps[0].hat == pytest.approx(-2.0)
    assert hyps[0].ilm == pytest.approx(-0.2)


def test_nbest_fewer_than_n():
    assert len(nbest(diamond_lattice(2), 100)) == 4


def test_nbest_matches_enumeration_dedup():
    for seed in range(25):
        rng = random.Random(seed)
        lat = random_dag_lattice(rng, n_states=rng.randint(5, 9), extra_arcs=7)
        paths = enumerate_paths(lat, 10**6)
        want = []
        seen = set()
        for p in paths:  # already sorted by (-hat, tokens)
            if p.tokens not in seen:
                seen.add(p.tokens)
                want.append((p.tokens, p.hat))
        got = [(h.tokens, h.hat) for h in nbest(lat, len(want) + 10)]
        assert got == pytest.approx(want), f"seed {seed}"
        top3 = [(h.tokens, h.hat) for h in nbest(lat, 3)]
        assert top3 == got[:3]


def test_nbest_invalid_lattice():
    bad = Lattice("x", 2, 0, frozenset({1}), (Arc(0, 0, "a", -1.0, 0.0),))
    with pytest.raises(Exception, match="invalid lattice"):
        nbest(bad, 1)


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------


def test_combine_direct_arithmetic():
    h = Hypothesis(tokens=("x",), hat=-10.0, ilm=-5.0)
    assert combine(h, 0.3, 0.4, -8.0) == pytest.approx(-11.7, abs=1e-12)


def test_combine_identity_at_zero():
    h = Hypothesis(tokens=("x",), hat=-3.25, ilm=-7.0)
    assert combine(h, 0.0, 0.0, -99.0) == -3.25
    assert combine(h, 0.0, 0.0, float("-inf")) == -3.25


def test_combine_neg_infinity_elm():
    h = Hypothesis(tokens=("x",), hat=-1.0, ilm=-1.0)
    assert combine(h, 0.2, 0.5, float("-inf")) == float("-inf")


def test_combine_scale_coupling():
    rng = random.Random(0)
    for _ in range(50):
        h = Hypothesis(tokens=("x",), hat=rng.uniform(-20, 0), ilm=rng.uniform(-10, 0))
        elm = rng.uniform(-30, 0)
        nu, c = rng.uniform(0, 2), rng.uniform(0.1, 5)
        assert combine(h, 0.3, nu, c * elm) == pytest.approx(
            combine(h, 0.3, nu * c, elm), rel=1e-12
        )


# ---------------------------------------------------------------------------
# rescore_segment
# ---------------------------------------------------------------------------


def test_rescore_identity_at_zero_weights():
    for seed in range(10):
        lat = random_dag_lattice(random.Random(seed), n_states=8, extra_arcs=6)
        params = RescoreParams(mu=0.0, nu=0.0, nbest=10)
        ranked = rescore_segment(lat, UniformScorer(3), params)
        plain = nbest(lat, 10)
        assert [h.tokens for h in ranked] == [h.tokens for h in plain]


def test_rescore_scorer_flips_ranking():
    # Path B wins on hat; the scorer strongly favors A; large nu flips it.
    arcs = (
        Arc(0, 1, "A", -2.0, -1.0),
        Arc(0, 1, "B", -1.0, -1.0),
    )
    lat = Lattice("f", 2, 0, frozenset({1}), arcs)
    scorer = TableScorer({("", "A"): -1.0, ("", "B"): -9.0})
    ranked = rescore_segment(lat, scorer, RescoreParams(mu=0.0, nu=2.0, nbest=5))
    assert ranked[0].tokens == ("A",)
    assert ranked[0].combined == pytest.approx(-2.0 + 2.0 * -1.0)
    assert ranked[1].combined == pytest.approx(-1.0 + 2.0 * -9.0)
    # Sanity: with nu=0 the hat ranking stands.
    ranked0 = rescore_segment(lat, scorer, RescoreParams(mu=0.0, nu=0.0, nbest=5))
    assert ranked0[0].tokens == ("B",)


def test_rescore_matches_bruteforce_argmax():
    elm = ngram_train(["t0 t1 t2", "t1 t1", "t2 t0 t0", "t0 t2"], 2)
    for seed in range(15):
        rng = random.Random(seed)
        lat = random_dag_lattice(rng, n_states=rng.randint(5, 9), extra_arcs=6)
        mu, nu = rng.choice([0.0, 0.3, 0.7]), rng.choice([0.2, 0.5, 1.0])
        total = len(enumerate_paths(lat, 10**6))
        params = RescoreParams(mu=mu, nu=nu, nbest=total + 5)
        ranked = rescore_segment(lat, elm, params, context="t0")
        # Oracle: enumerate, dedupe by tokens keeping max hat, combine, argmax.
        by_tokens = {}
        for p in enumerate_paths(lat, 10**6):
            if p.tokens not in by_tokens or p.hat > by_tokens[p.tokens][0]:
                by_tokens[p.tokens] = (p.hat, p.ilm)
        scored = []
        for tokens, (hat, ilm) in by_tokens.items():
            e = elm.score("t0", [" ".join(tokens)])[0]
            scored.append((hat - mu * ilm + nu * e, tokens))
        want = min(scored, key=lambda item: (-item[0], item[1]))
        assert ranked[0].tokens == want[1], f"seed {seed}"
        assert ranked[0].combined == pytest.approx(want[0], abs=1e-9)


def test_rescore_single_batched_request():
    lat = diamond_lattice(3)
    scorer = TableScorer({})
    rescore_segment(lat, scorer, RescoreParams(nbest=8), context="ctx")
    assert len(scorer.requests) == 1
    ctx, targets = scorer.requests[0]
    assert ctx == "ctx"
    assert len(targets) == 8


# ---------------------------------------------------------------------------
# rescore_utterance: context carryover
# ---------------------------------------------------------------------------


def _ambiguous_segment(seg_id):
    arcs = (
        Arc(0, 1, "u", -1.1, -0.5),
        Arc(0, 1, "v", -1.0, -0.5),
    )
    return Lattice(seg_id, 2, 0, frozenset({1}), arcs)


def _cue_segment(seg_id, cue):
    return chain_lattice([cue], segment_id=seg_id)


def test_context_carryover_fixes_ambiguity():
    # Segment 1 decodes the cue unambiguously; segment 2's correct token u
    # loses on hat and only wins when the scorer sees the cue as context.
    utt = Utterance("u0", (_cue_segment("s0", "cue"), _ambiguous_segment("s1")))
    scorer = TableScorer(
        {
            ("", "cue"): -1.0,
            ("", "u"): -6.0,
            ("", "v"): -2.0,
            ("cue", "u"): -0.5,
            ("cue", "v"): -6.0,
        }
    )
    with_ctx = rescore_utterance(utt, scorer, RescoreParams(nu=1.0, nbest=5, context_segments=1))
    assert with_ctx.transcript == ("cue", "u")
    no_ctx = rescore_utterance(utt, scorer, RescoreParams(nu=1.0, nbest=5, context_segments=0))
    assert no_ctx.transcript == ("cue", "v")


def test_extra_context_inert_with_bigram_scorer():
    # A bigram scorer only reads the last context token, so m=2 and m=1 agree.
    elm = ngram_train(["cue u", "v v", "x cue", "u x"], 2)
    utt = Utterance(
        "u0",
        (
            _cue_segment("s0", "x"),
            _cue_segment("s1", "cue"),
            _ambiguous_segment("s2"),
        ),
    )
    one = rescore_utterance(utt, elm, RescoreParams(nu=1.0, nbest=5, context_segments=1))
    two = rescore_utterance(utt, elm, RescoreParams(nu=1.0, nbest=5, context_segments=2))
    assert one.transcript == two.transcript
    for a, b in zip(one.segments, two.segments):
        assert [h.tokens for h in a.hypotheses] == [h.tokens for h in b.hypotheses]
        # Segment 3's combined scores agree exactly: the extra context token
        # is beyond the scorer's order.
    assert [h.combined for h in one.segments[2].hypotheses] == pytest.approx(
        [h.combined for h in two.segments[2].hypotheses], abs=1e-12
    )


def test_m_zero_single_segment_equals_rescore_segment():
    lat = _ambiguous_segment("s0")
    elm = ngram_train(["u u", "v"], 2)
    params = RescoreParams(nu=0.7, nbest=5, context_segments=0)
    direct = rescore_segment(lat, elm, params, context="")
    utt = rescore_utterance(Utterance("u", (lat,)), elm, params)
    assert utt.transcript == direct[0].tokens
    assert [h.combined for h in utt.segments[0].hypotheses] == [h.combined for h in direct]


def test_rescore_idempotent_and_pure():
    utt = Utterance("u0", (_cue_segment("s0", "cue"), _ambiguous_segment("s1")))
    elm = ngram_train(["cue u", "v"], 2)
    params = RescoreParams(mu=0.1, nu=0.5, nbest=5, context_segments=1)
    before = utt.segments[0].arcs
    r1 = rescore_utterance(utt, elm, params)
    r2 = rescore_utterance(utt, elm, params)
    assert r1.transcript == r2.transcript
    assert utt.segments[0].arcs == before


def test_first_pass_transcript():
    utt = Utterance("u0", (_cue_segment("s0", "cue"), _ambiguous_segment("s1")))
    assert first_pass_transcript(utt) == ("cue", "v")


# ---------------------------------------------------------------------------
# Transcript file
# ---------------------------------------------------------------------------


def test_transcript_roundtrip(tmp_path):
    utt = Utterance("u0", (_cue_segment("s0", "cue"), _ambiguous_segment("s1")))
    elm = ngram_train(["cue u", "v"], 2)
    res = rescore_utterance(utt, elm, RescoreParams(nu=0.5, nbest=5, context_segments=1))
    path = tmp_path / "t.jsonl"
    write_transcripts([res], path)
    back = read_transcripts(path)
    assert len(back) == 1
    assert back[0].transcript == res.transcript
    assert back[0].segments[1].hypotheses[0].combined == pytest.approx(
        res.segments[1].hypotheses[0].combined
    )


def test_params_validation():
    with pytest.raises(ValueError):
        RescoreParams(mu=-0.1)
    with pytest.raises(ValueError):
        RescoreParams(nbest=0)
    with pytest.raises(ValueError):
        RescoreParams(context_segments=-1)
