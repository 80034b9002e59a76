"""Language-model backend contract shared by every scoring and search step.

A backend answers one question: given conditioning data and a token prefix,
what is the distribution over the next token? Everything else (sequence
scoring, beam generation) is derived from that answer, so alternative
backends stay interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import DataInput, tokenize
from .errors import UnknownMode

END_TOKEN = "__end__"
SEP_TOKEN = "[SEP]"

MODE_LTR = "ltr"
MODE_INFILL = "infill"

# Collective probability mass reserved for tokens outside the vocabulary.
UNKNOWN_FLOOR = 1e-7
LOG_UNKNOWN_FLOOR = math.log(UNKNOWN_FLOOR)


def linearize_data(d: DataInput) -> tuple[str, ...]:
    """Flatten an input to tokens: fields sorted, values joined with " | "."""
    parts: list[str] = []
    for i, name in enumerate(sorted(d.entries)):
        if i:
            parts.append(SEP_TOKEN)
        parts.append(name)
        parts.append(":")
        for k, value in enumerate(d.entries[name]):
            if k:
                parts.append("|")
            parts.extend(tokenize(value))
    return tuple(parts)


@dataclass(frozen=True)
class ConditioningContext:
    """What a backend conditions on: the input data, plus infill surroundings."""

    data: DataInput
    mode: str = MODE_LTR
    infill_left: tuple[str, ...] = ()
    infill_right: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in (MODE_LTR, MODE_INFILL):
            raise UnknownMode(f"unknown conditioning mode {self.mode!r}")
        object.__setattr__(self, "infill_left", tuple(self.infill_left))
        object.__setattr__(self, "infill_right", tuple(self.infill_right))

    @staticmethod
    def left_to_right(d: DataInput) -> ConditioningContext:
        return ConditioningContext(data=d, mode=MODE_LTR)

    @staticmethod
    def infill(
        d: DataInput, left: Sequence[str], right: Sequence[str]
    ) -> ConditioningContext:
        return ConditioningContext(
            data=d, mode=MODE_INFILL, infill_left=tuple(left), infill_right=tuple(right)
        )


@dataclass(frozen=True)
class TokenDistribution:
    """Log-probabilities over the vocabulary plus the reserved END token."""

    logprobs: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "logprobs", dict(self.logprobs))

    def logprob(self, token: str) -> float:
        return self.logprobs.get(token, LOG_UNKNOWN_FLOOR)

    def total_mass(self) -> float:
        return math.fsum(math.exp(lp) for lp in self.logprobs.values())

    def items(self):
        return self.logprobs.items()

    def argmax(self) -> str:
        """Most probable token; ties broken lexicographically."""
        return min(self.logprobs, key=lambda t: (-self.logprobs[t], t))


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[str, ...]
    score: float
    finished: bool = False


class LMBackend:
    """Scoring contract. Subclasses implement next_token_logprobs; the
    chain-rule and search operations below are shared derivations."""

    def next_token_logprobs(
        self, ctx: ConditioningContext, prefix: Sequence[str]
    ) -> TokenDistribution:
        raise NotImplementedError

    def token_logprob(
        self, ctx: ConditioningContext, prefix: Sequence[str], token: str
    ) -> float:
        """Log-probability of one continuation token (floor for unknowns)."""
        return self.next_token_logprobs(ctx, prefix).logprob(token)

    def sequence_logprob(self, ctx: ConditioningContext, tokens: Sequence[str]) -> float:
        """Chain-rule log-probability of `tokens` followed by END."""
        tokens = tuple(tokens)
        total = 0.0
        for j in range(len(tokens)):
            total += self.token_logprob(ctx, tokens[:j], tokens[j])
        total += self.token_logprob(ctx, tokens, END_TOKEN)
        return total

    def beam_generate(
        self, ctx: ConditioningContext, k: int, max_len: int
    ) -> tuple[str, ...]:
        """Highest-scoring completed hypothesis within `max_len` steps.

        Hypotheses that emit END freeze and keep competing for beam slots on
        their total sequence log-probability. If nothing in the final beam is
        finished, the best live prefix wins (k=1 therefore reduces to greedy
        decoding, END included in each argmax).
        """
        if k < 1 or max_len < 1:
            raise ValueError("beam size and max length must be >= 1")
        rank = lambda h: (-h.score, h.tokens, not h.finished)  # noqa: E731
        beam: list[BeamHypothesis] = [BeamHypothesis(tokens=(), score=0.0)]
        for _ in range(max_len):
            candidates: list[BeamHypothesis] = []
            live = 0
            for hyp in beam:
                if hyp.finished:
                    candidates.append(hyp)
                    continue
                live += 1
                dist = self.next_token_logprobs(ctx, hyp.tokens)
                for token, lp in dist.items():
                    if token == END_TOKEN:
                        candidates.append(
                            BeamHypothesis(hyp.tokens, hyp.score + lp, finished=True)
                        )
                    else:
                        candidates.append(
                            BeamHypothesis(hyp.tokens + (token,), hyp.score + lp)
                        )
            if not live:
                break
            candidates.sort(key=rank)
            beam = candidates[:k]
        finished = [h for h in beam if h.finished]
        best = min(finished or beam, key=rank)
        return best.tokens

    def vocabulary(self) -> frozenset[str]:
        """Terminal vocabulary (END excluded); may be empty if unknown."""
        return frozenset()
