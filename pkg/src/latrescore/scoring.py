"""External-LM scorer abstraction and the built-in n-gram scorer.

A scorer maps (context text, target texts) to natural-log probabilities:
``scores[i] = log P(targets[i] | context)``.  The context conditions the
target but is never scored itself; an end-of-text event is always scored
after the last target token so truncated hypotheses pay for stopping early.

The built-in n-gram model is trained with interpolated absolute discounting
(fixed discount 0.75, no held-out estimation) over whitespace tokens, with an
UNK type for out-of-vocabulary words.  Training and scoring are fully
deterministic: identical corpora give bit-identical scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "EOT",
    "UNK",
    "DISCOUNT",
    "Scorer",
    "NGramScorer",
    "UniformScorer",
    "CachingScorer",
    "ngram_train",
    "score",
    "score_split",
    "log_perplexity_per_word",
]

EOT = "</s>"
UNK = "<unk>"
DISCOUNT = 0.75


class Scorer:
    """Interface: batched conditional log-probabilities of texts."""

    name = "scorer"

    def score(self, context: str, targets) -> list[float]:
        raise NotImplementedError


@dataclass
class _HistStats:
    counts: dict[str, int]
    total: int
    distinct: int


class NGramScorer(Scorer):
    """Word n-gram model with interpolated absolute discounting.

    For a history ``h`` of length k >= 1 with total count c(h) > 0:

        P(w | h) = max(c(h,w) - D, 0) / c(h)
                   + D * N1+(h) / c(h) * P(w | h')

    where ``h'`` drops the oldest token and N1+(h) is the number of distinct
    continuations of ``h``.  Unseen histories back off with weight 1.  The
    recursion bottoms out in a uniform distribution over the event space
    (training vocabulary plus UNK plus end-of-text), so every event has
    positive probability and each conditional sums to exactly one.
    """

    def __init__(self, order: int, vocab: set[str], tables: list[dict[tuple[str, ...], _HistStats]], name: str = "ngram"):
        self.order = order
        self.vocab = vocab
        self._tables = tables  # index k: histories of length k
        self.name = name
        self._num_events = len(vocab) + 2  # vocab + UNK + EOT

    # -- construction -------------------------------------------------------

    @classmethod
    def train(cls, corpus, order: int) -> "NGramScorer":
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        sentences = [tuple(text.split()) for text in corpus]
        if not sentences:
            raise ValueError("training corpus is empty")
        vocab: set[str] = set()
        for sent in sentences:
            for tok in sent:
                if tok in (EOT, UNK):
                    raise ValueError(f"corpus contains the reserved token {tok!r}")
                vocab.add(tok)
        tables: list[dict[tuple[str, ...], dict[str, int]]] = [
            {} for _ in range(order)
        ]
        for sent in sentences:
            events = sent + (EOT,)
            for i, ev in enumerate(events):
                for k in range(order):
                    if i - k < 0:
                        break
                    hist = events[i - k : i]
                    slot = tables[k].setdefault(hist, {})
                    slot[ev] = slot.get(ev, 0) + 1
        stats: list[dict[tuple[str, ...], _HistStats]] = []
        for table in tables:
            stats.append(
                {
                    hist: _HistStats(counts, sum(counts.values()), len(counts))
                    for hist, counts in table.items()
                }
            )
        return cls(order=order, vocab=vocab, tables=stats)

    # -- scoring ------------------------------------------------------------

    def _map(self, token: str) -> str:
        if token == EOT or token in self.vocab:
            return token
        return UNK

    def prob(self, token: str, history: tuple[str, ...]) -> float:
        """Conditional probability of one event given mapped history tokens."""
        token = self._map(token)
        history = tuple(self._map(t) for t in history)
        k = min(self.order - 1, len(history))
        history = history[len(history) - k :]
        p = 1.0 / self._num_events
        for j in range(k + 1):
            hist = history[len(history) - j :] if j else ()
            entry = self._tables[j].get(hist)
            if entry is None or entry.total == 0:
                continue
            c = entry.counts.get(token, 0)
            p = max(c - DISCOUNT, 0.0) / entry.total + (
                DISCOUNT * entry.distinct / entry.total
            ) * p
        return p

    def logprob(self, token: str, history: tuple[str, ...]) -> float:
        return math.log(self.prob(token, history))

    def score(self, context: str, targets) -> list[float]:
        targets = list(targets)
        if not targets:
            raise ValueError("targets must be non-empty")
        ctx = tuple(context.split())
        out = []
        for target in targets:
            hist = ctx
            total = 0.0
            for tok in target.split():
                total += self.logprob(tok, hist)
                hist = hist + (tok,)
            total += self.logprob(EOT, hist)
            out.append(total)
        return out

    def eot_logprob(self, context: str) -> float:
        """log P(end-of-text | context); the cost of stopping right away."""
        return self.logprob(EOT, tuple(context.split()))


def ngram_train(corpus, order: int) -> NGramScorer:
    return NGramScorer.train(corpus, order)


class UniformScorer(Scorer):
    """Assigns every event (including end-of-text) probability 1/num_events.

    With ``num_events=1`` this is an echo scorer that returns 0.0 everywhere.
    """

    def __init__(self, num_events: int, name: str = "uniform"):
        if num_events < 1:
            raise ValueError("num_events must be >= 1")
        self.num_events = num_events
        self.name = name
        self._log_p = math.log(1.0 / num_events)

    def score(self, context: str, targets) -> list[float]:
        targets = list(targets)
        if not targets:
            raise ValueError("targets must be non-empty")
        return [(len(t.split()) + 1) * self._log_p for t in targets]


class CachingScorer(Scorer):
    """Memoizes per-(context, target) scores in front of another scorer.

    Misses within one call are forwarded as a single batched request, so
    batching semantics are preserved.  Safe for concurrent readers: each key
    is written once and dict updates are atomic under the GIL.
    """

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.name = f"cached({inner.name})"
        self._cache: dict[tuple[str, str], float] = {}

    def score(self, context: str, targets) -> list[float]:
        targets = list(targets)
        if not targets:
            raise ValueError("targets must be non-empty")
        missing: list[str] = []
        for t in targets:
            if (context, t) not in self._cache and t not in missing:
                missing.append(t)
        if missing:
            for t, s in zip(missing, self.inner.score(context, missing)):
                self._cache[(context, t)] = s
        return [self._cache[(context, t)] for t in targets]

    def cache_size(self) -> int:
        return len(self._cache)


def score(scorer: Scorer, context: str, targets) -> list[float]:
    """Module-level convenience wrapper around ``scorer.score``."""
    return scorer.score(context, targets)


def score_split(scorer: Scorer, segments) -> float:
    """Semi-autoregressive score of a text split into segments.

    Each segment is scored conditioned on its immediate predecessor (the
    first on the empty string); the total is the sum of the per-segment
    conditional scores.
    """
    segments = list(segments)
    if not segments:
        raise ValueError("segments must be non-empty")
    total = 0.0
    prev = ""
    for seg in segments:
        total += scorer.score(prev, [seg])[0]
        prev = seg
    return total


def log_perplexity_per_word(scorer: Scorer, texts) -> float:
    """Negative mean log-likelihood per word, pooled over all texts.

    The denominator counts every word plus one end-of-text event per text;
    the numerator sums whole-text scores with empty context.  Pooling is over
    totals, not a mean of per-text perplexities.
    """
    texts = list(texts)
    n_words = sum(len(t.split()) for t in texts)
    if n_words < 1:
        raise ValueError("perplexity needs at least one word")
    total = sum(scorer.score("", [t])[0] for t in texts)
    return -total / (n_words + len(texts))
