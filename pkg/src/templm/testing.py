"""Reusable backend contract checks.

Any scoring backend (the built-in n-gram model, the remote client in front
of a live bridge) must pass the same assertions; only the numeric values
differ. Import and run these from a test suite with representative inputs.
"""

from __future__ import annotations

import math
from typing import Sequence

from .backend import END_TOKEN, ConditioningContext, LMBackend
from .core import DataInput


def check_normalization(
    backend: LMBackend,
    d: DataInput,
    prefixes: Sequence[Sequence[str]] = ((),),
    tolerance: float = 1e-6,
) -> None:
    """Every reachable distribution sums to one and carries END."""
    contexts = [ConditioningContext.left_to_right(d)]
    contexts.append(ConditioningContext.infill(d, ("the",), ("end",)))
    for ctx in contexts:
        for prefix in prefixes:
            dist = backend.next_token_logprobs(ctx, tuple(prefix))
            assert END_TOKEN in dist.logprobs, "distribution must include END"
            mass = dist.total_mass()
            assert abs(mass - 1.0) <= tolerance, (
                f"distribution mass {mass} off by more than {tolerance}"
            )


def check_chain_rule(
    backend: LMBackend,
    d: DataInput,
    tokens: Sequence[str],
    tolerance: float = 1e-9,
) -> None:
    """sequence_logprob equals the sum of per-step lookups."""
    ctx = ConditioningContext.left_to_right(d)
    tokens = tuple(tokens)
    total = 0.0
    for j in range(len(tokens)):
        total += backend.next_token_logprobs(ctx, tokens[:j]).logprob(tokens[j])
    total += backend.next_token_logprobs(ctx, tokens).logprob(END_TOKEN)
    got = backend.sequence_logprob(ctx, tokens)
    assert abs(got - total) <= tolerance, (
        f"sequence_logprob {got} drifts from chain sum {total}"
    )


def check_greedy_beam(
    backend: LMBackend,
    d: DataInput,
    max_len: int = 8,
) -> tuple[str, ...]:
    """beam_generate with k=1 equals greedy decoding; returns the sequence."""
    ctx = ConditioningContext.left_to_right(d)
    greedy: list[str] = []
    for _ in range(max_len):
        token = backend.next_token_logprobs(ctx, tuple(greedy)).argmax()
        if token == END_TOKEN:
            break
        greedy.append(token)
    got = backend.beam_generate(ctx, k=1, max_len=max_len)
    assert got == tuple(greedy), f"k=1 beam {got} != greedy {tuple(greedy)}"
    return got


def check_monotone_extension(
    backend: LMBackend,
    d: DataInput,
    tokens: Sequence[str],
) -> None:
    """Appending a sub-certain token cannot raise the prefix log-mass."""
    ctx = ConditioningContext.left_to_right(d)
    tokens = tuple(tokens)
    mass = 0.0
    for j in range(len(tokens)):
        step = backend.next_token_logprobs(ctx, tokens[:j]).logprob(tokens[j])
        assert step <= 0.0 or math.isclose(step, 0.0, abs_tol=1e-12)
        mass += step
        assert mass <= 1e-12


def run_contract_suite(
    backend: LMBackend,
    d: DataInput,
    probe_tokens: Sequence[str],
    normalization_tolerance: float = 1e-6,
) -> None:
    """The full shared contract: normalization, chain rule, greedy beam."""
    prefixes = [(), tuple(probe_tokens[:1]), tuple(probe_tokens[:2])]
    check_normalization(backend, d, prefixes, tolerance=normalization_tolerance)
    check_chain_rule(backend, d, probe_tokens)
    check_greedy_beam(backend, d)
    check_monotone_extension(backend, d, probe_tokens)
