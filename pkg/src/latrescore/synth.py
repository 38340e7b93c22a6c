"""Seeded synthetic data: a toy text model, reference sets, and emissions.

The generator plants a reference token sequence into per-frame emission
distributions with controllable noise.  Noise mass is jittered per cell so
distinct alignments essentially never tie exactly, and an optional confusion
rate splits a planted frame's mass with a random competitor so first-pass
errors (and rescoring headroom) exist.

All randomness flows through one ``random.Random`` instance, so identical
seeds give byte-identical corpora.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .decoder import EmissionMatrix, LabelLM

__all__ = ["TextModel", "SynthUtterance", "SynthCorpus", "make_synthetic_corpus", "plant_emissions"]

BLANK = "<blank>"


@dataclass
class TextModel:
    """A tiny first-order Markov model over a closed word vocabulary."""

    words: tuple[str, ...]
    start_p: dict[str, float]
    trans_p: dict[str, dict[str, float]]

    @classmethod
    def random(cls, rng: random.Random, vocab_size: int) -> "TextModel":
        words = tuple(f"w{i:02d}" for i in range(vocab_size))
        def dist() -> dict[str, float]:
            weights = [rng.uniform(0.05, 1.0) ** 3 for _ in words]
            total = sum(weights)
            return {w: wt / total for w, wt in zip(words, weights)}
        return cls(words=words, start_p=dist(), trans_p={w: dist() for w in words})

    def sample_sentence(self, rng: random.Random, min_len: int, max_len: int) -> list[str]:
        length = rng.randint(min_len, max_len)
        out: list[str] = []
        for _ in range(length):
            dist = self.start_p if not out else self.trans_p[out[-1]]
            out.append(_sample(rng, dist))
        return out

    def corpus(self, rng: random.Random, n_sentences: int, min_len: int = 4, max_len: int = 12) -> list[str]:
        return [" ".join(self.sample_sentence(rng, min_len, max_len)) for _ in range(n_sentences)]

    def to_label_lm(self) -> LabelLM:
        table = {(): {w: math.log(p) for w, p in self.start_p.items()}}
        for w, dist in self.trans_p.items():
            table[(w,)] = {v: math.log(p) for v, p in dist.items()}
        return LabelLM(order=2, table=table)


def _sample(rng: random.Random, dist: dict[str, float]) -> str:
    x = rng.random()
    acc = 0.0
    for key in dist:
        acc += dist[key]
        if x < acc:
            return key
    return next(reversed(dist))


def plant_emissions(
    tokens,
    vocab,
    rng: random.Random,
    noise: float = 0.3,
    confusion: float = 0.0,
    blank: str = BLANK,
    lead_blanks: int = 1,
    tail_blanks: int = 1,
) -> EmissionMatrix:
    """Emission matrix whose near-argmax alignment spells out ``tokens``.

    Each planted token occupies one frame, preceded by ``lead_blanks`` blank
    frames; ``noise`` spreads jittered probability mass over the whole
    vocabulary and ``confusion`` occasionally splits a token frame's mass
    with a random competitor.
    """
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must be in [0, 1)")
    full_vocab = tuple(vocab) + ((blank,) if blank not in vocab else ())
    index = {tok: i for i, tok in enumerate(full_vocab)}
    V = len(full_vocab)
    plan: list[str] = []
    for tok in tokens:
        plan.extend([blank] * lead_blanks)
        plan.append(tok)
    plan.extend([blank] * tail_blanks)

    rows = []
    for symbol in plan:
        weights = [noise * rng.uniform(0.5, 1.5) / V for _ in range(V)]
        signal = 1.0 - noise
        if symbol != blank and confusion > 0.0 and rng.random() < confusion:
            others = [w for w in vocab if w != symbol]
            competitor = rng.choice(others)
            share = rng.uniform(0.35, 0.65)
            weights[index[symbol]] += signal * share
            weights[index[competitor]] += signal * (1.0 - share)
        else:
            weights[index[symbol]] += signal
        total = sum(weights)
        rows.append([math.log(w / total) for w in weights])
    return EmissionMatrix(vocab=full_vocab, blank=blank, logits=np.array(rows))


@dataclass
class SynthUtterance:
    utterance_id: str
    segment_refs: list[tuple[str, ...]]
    emissions: list[EmissionMatrix]

    @property
    def reference(self) -> tuple[str, ...]:
        return tuple(tok for seg in self.segment_refs for tok in seg)


@dataclass
class SynthCorpus:
    seed: int
    model: TextModel
    utterances: list[SynthUtterance] = field(default_factory=list)
    train_corpus: list[str] = field(default_factory=list)

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.model.words + (BLANK,)


def make_synthetic_corpus(
    seed: int,
    n_utterances: int = 10,
    segments_per_utterance: int = 3,
    tokens_per_segment: tuple[int, int] = (6, 10),
    noise: float = 0.3,
    confusion: float = 0.25,
    vocab_size: int = 12,
    corpus_sentences: int = 400,
) -> SynthCorpus:
    """Generate a complete seeded corpus: text model, emissions, LM text."""
    if n_utterances < 1 or segments_per_utterance < 1:
        raise ValueError("need at least one utterance and one segment")
    rng = random.Random(seed)
    model = TextModel.random(rng, vocab_size)
    corpus = SynthCorpus(seed=seed, model=model)
    corpus.train_corpus = model.corpus(rng, corpus_sentences)
    lo, hi = tokens_per_segment
    for u in range(n_utterances):
        refs = [tuple(model.sample_sentence(rng, lo, hi)) for _ in range(segments_per_utterance)]
        emissions = [
            plant_emissions(ref, model.words, rng, noise=noise, confusion=confusion)
            for ref in refs
        ]
        corpus.utterances.append(
            SynthUtterance(utterance_id=f"utt{u:04d}", segment_refs=refs, emissions=emissions)
        )
    return corpus
