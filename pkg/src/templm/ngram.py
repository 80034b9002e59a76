"""Self-contained n-gram backend with absolute discounting and backoff.

Conditioning on the input data is realized by prepending its linearization
to the scored text, so higher orders let the model "see" the data while
scoring early output tokens. Infill mode derives its distributions from the
same left-to-right model: gap tokens score as ordinary continuations of
(left context + gap prefix), and the gap-closing END event scores as the
left-to-right probability of the whole right context, renormalized over
the vocabulary.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .backend import (
    END_TOKEN,
    LMBackend,
    MODE_INFILL,
    MODE_LTR,
    ConditioningContext,
    TokenDistribution,
    UNKNOWN_FLOOR,
    linearize_data,
)
from .core import DataInput, tokenize
from .errors import EmptyCorpus

NGRAM_FORMAT = "templm-ngram"
NGRAM_VERSION = 1


@dataclass
class NGramModel:
    """Count tables for all context lengths 0..order-1 plus smoothing knobs."""

    order: int
    discount: float = 0.4
    counts: dict[tuple[str, ...], dict[str, int]] = field(default_factory=dict)
    vocab: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        self._totals: dict[tuple[str, ...], int] | None = None

    def add_sequence(self, tokens: Sequence[str]) -> None:
        """Count (context, token) pairs for every backoff level."""
        seq = tuple(tokens) + (END_TOKEN,)
        self.vocab.update(tokens)
        self._totals = None
        for i, token in enumerate(seq):
            for length in range(min(self.order - 1, i) + 1):
                ctx = seq[i - length : i]
                bucket = self.counts.setdefault(ctx, {})
                bucket[token] = bucket.get(token, 0) + 1

    def scoring_vocab(self) -> tuple[str, ...]:
        return tuple(sorted(self.vocab)) + (END_TOKEN,)

    def _context_totals(self) -> dict[tuple[str, ...], int]:
        if self._totals is None:
            self._totals = {
                ctx: sum(bucket.values()) for ctx, bucket in self.counts.items()
            }
        return self._totals

    def probability(self, context: Sequence[str], token: str) -> float:
        """Absolute-discounted backoff probability of one continuation token.

        Tokens outside vocabulary + END score the flat 1e-7 floor, matching
        TokenDistribution's lookup fallback so chain-rule sums agree with
        distribution lookups on held-out tokens.
        """
        if token != END_TOKEN and token not in self.vocab:
            return UNKNOWN_FLOOR
        h = tuple(context)[max(0, len(context) - (self.order - 1)) :]
        totals = self._context_totals()
        prob = 0.0
        weight = 1.0
        for length in range(len(h), -1, -1):
            ctx = h[len(h) - length :]
            bucket = self.counts.get(ctx)
            if not bucket:
                continue
            total = totals[ctx]
            c = bucket.get(token, 0)
            if c:
                prob += weight * (c - self.discount) / total
            weight *= self.discount * len(bucket) / total
        size = len(self.vocab) + 1  # vocabulary plus END
        prob += weight * (1.0 - UNKNOWN_FLOOR) / size
        return prob

    def save(self, path: str) -> None:
        payload = {
            "format": NGRAM_FORMAT,
            "version": NGRAM_VERSION,
            "order": self.order,
            "discount": self.discount,
            "vocab": sorted(self.vocab),
            "counts": [
                [list(ctx), {t: bucket[t] for t in sorted(bucket)}]
                for ctx, bucket in sorted(self.counts.items())
            ],
        }
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str) -> NGramModel:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != NGRAM_FORMAT:
            raise ValueError(f"{path} is not a {NGRAM_FORMAT} file")
        model = cls(order=payload["order"], discount=payload["discount"])
        model.vocab = set(payload["vocab"])
        model.counts = {
            tuple(ctx): dict(bucket) for ctx, bucket in payload["counts"]
        }
        return model


def train_ngram(
    corpus: Iterable[tuple[DataInput, str]],
    order: int,
    discount: float = 0.4,
) -> NGramModel:
    """Count a model over (data, text) pairs, data linearization prepended."""
    model = NGramModel(order=order, discount=discount)
    seen = 0
    for d, text in corpus:
        seen += 1
        model.add_sequence(linearize_data(d) + tokenize(text))
    if not seen:
        raise EmptyCorpus("cannot train an n-gram model on an empty corpus")
    return model


class NGramBackend(LMBackend):
    """LMBackend over an NGramModel, with per-context distribution caching.

    Read-only after construction; safe to share across threads (the caches
    are only ever extended with values that are deterministic functions of
    their keys).
    """

    def __init__(self, model: NGramModel):
        self.model = model
        self._ltr_cache: dict[tuple[str, ...], TokenDistribution] = {}
        self._infill_cache: dict[tuple, TokenDistribution] = {}

    def vocabulary(self) -> frozenset[str]:
        return frozenset(self.model.vocab)

    # -- scoring ----------------------------------------------------------

    def _effective_context(
        self, ctx: ConditioningContext, prefix: Sequence[str]
    ) -> tuple[str, ...]:
        if ctx.mode == MODE_INFILL:
            full = linearize_data(ctx.data) + ctx.infill_left + tuple(prefix)
        else:
            full = linearize_data(ctx.data) + tuple(prefix)
        return full[max(0, len(full) - (self.model.order - 1)) :]

    def token_logprob(
        self, ctx: ConditioningContext, prefix: Sequence[str], token: str
    ) -> float:
        if ctx.mode == MODE_LTR:
            return math.log(self.model.probability(self._effective_context(ctx, prefix), token))
        return self.next_token_logprobs(ctx, prefix).logprob(token)

    def next_token_logprobs(
        self, ctx: ConditioningContext, prefix: Sequence[str]
    ) -> TokenDistribution:
        tail = self._effective_context(ctx, prefix)
        if ctx.mode == MODE_LTR:
            dist = self._ltr_cache.get(tail)
            if dist is None:
                dist = TokenDistribution(
                    {
                        token: math.log(self.model.probability(tail, token))
                        for token in self.model.scoring_vocab()
                    }
                )
                self._ltr_cache[tail] = dist
            return dist
        key = (tail, ctx.infill_right)
        dist = self._infill_cache.get(key)
        if dist is None:
            dist = self._infill_distribution(tail, ctx.infill_right)
            self._infill_cache[key] = dist
        return dist

    def _chain_probability(
        self, context: tuple[str, ...], tokens: Sequence[str]
    ) -> float:
        prob = 1.0
        ctx = list(context)
        for token in tokens:
            prob *= self.model.probability(ctx, token)
            ctx.append(token)
        return prob

    def _infill_distribution(
        self, tail: tuple[str, ...], right: tuple[str, ...]
    ) -> TokenDistribution:
        """Next-gap-token distribution: the gap either continues with a word
        (plain left-to-right conditional) or closes, in which case the whole
        right context must follow at once. Charging the right-context chain
        only on the closing step keeps multi-token gap scores coherent;
        charging every candidate its own right chain at every step would
        double-count boundary mismatch and drown multi-token repairs."""
        raw: dict[str, float] = {}
        for token in self.model.scoring_vocab():
            if token == END_TOKEN:
                if right:
                    raw[token] = self._chain_probability(tail, right)
                else:
                    raw[token] = self.model.probability(tail, END_TOKEN)
            else:
                raw[token] = self.model.probability(tail, token)
        total = math.fsum(raw.values())
        norm = math.log(total) - math.log1p(-UNKNOWN_FLOOR)
        return TokenDistribution(
            {token: math.log(p) - norm for token, p in raw.items()}
        )
