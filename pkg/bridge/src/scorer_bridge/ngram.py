"""Word n-gram backend with interpolated absolute discounting.

The conditional for a history h with total count c(h) > 0 is

    P(w | h) = max(c(h, w) - D, 0) / c(h) + D * N1+(h) / c(h) * P(w | h')

with discount D = 0.75, h' the history minus its oldest token, and N1+(h)
the number of distinct continuations.  Unseen histories back off with weight
one; the base case is uniform over the event space (training vocabulary plus
an unknown-word type plus end-of-text), so every conditional sums to one and
every event has positive probability.

A target's score is the sum of natural-log conditionals over its whitespace
tokens followed by one end-of-text event; the context conditions the first
tokens but is never scored itself.
"""

from __future__ import annotations

import math

EOT = "</s>"
UNK = "<unk>"
DISCOUNT = 0.75


class NgramBackend:
    name = "scorer-bridge-ngram"

    def __init__(self, order: int, vocab: set[str], tables: list[dict]):
        self.order = order
        self.vocab = vocab
        self._tables = tables
        self._num_events = len(vocab) + 2

    @classmethod
    def from_corpus(cls, lines, order: int) -> "NgramBackend":
        if order < 1:
            raise ValueError("order must be >= 1")
        sentences = [tuple(line.split()) for line in lines]
        if not sentences:
            raise ValueError("training corpus is empty")
        vocab: set[str] = set()
        for sent in sentences:
            for tok in sent:
                if tok in (EOT, UNK):
                    raise ValueError(f"corpus contains the reserved token {tok!r}")
                vocab.add(tok)
        raw: list[dict] = [{} for _ in range(order)]
        for sent in sentences:
            events = sent + (EOT,)
            for i, ev in enumerate(events):
                for k in range(order):
                    if i - k < 0:
                        break
                    hist = events[i - k : i]
                    slot = raw[k].setdefault(hist, {})
                    slot[ev] = slot.get(ev, 0) + 1
        tables = []
        for table in raw:
            tables.append(
                {
                    hist: (counts, sum(counts.values()), len(counts))
                    for hist, counts in table.items()
                }
            )
        return cls(order=order, vocab=vocab, tables=tables)

    def _map(self, token: str) -> str:
        if token == EOT or token in self.vocab:
            return token
        return UNK

    def _prob(self, token: str, history: tuple[str, ...]) -> float:
        token = self._map(token)
        history = tuple(self._map(t) for t in history)
        k = min(self.order - 1, len(history))
        history = history[len(history) - k :]
        p = 1.0 / self._num_events
        for j in range(k + 1):
            hist = history[len(history) - j :] if j else ()
            entry = self._tables[j].get(hist)
            if entry is None:
                continue
            counts, total, distinct = entry
            if total == 0:
                continue
            c = counts.get(token, 0)
            p = max(c - DISCOUNT, 0.0) / total + (DISCOUNT * distinct / total) * p
        return p

    def score(self, context: str, targets) -> list[float]:
        out = []
        ctx = tuple(context.split())
        for target in targets:
            hist = ctx
            total = 0.0
            for tok in target.split():
                total += math.log(self._prob(tok, hist))
                hist = hist + (tok,)
            total += math.log(self._prob(EOT, hist))
            out.append(total)
        return out
