"""Initial template candidates: generate with the backend, delexicalize,
and widen coverage by recombining field values within a cluster."""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from typing import Sequence

from .backend import ConditioningContext, LMBackend
from .core import (
    ClusterKey,
    DataInput,
    Template,
    TemplateToken,
    tokenize,
)


@dataclass(frozen=True)
class RecombinationPlan:
    """How many inputs a cluster should grow to, and which fields may swap."""

    cluster: ClusterKey
    target_count: int
    swap_fields: frozenset[str] = dc_field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "swap_fields", frozenset(self.swap_fields))


def delexicalize(x: Sequence[str], d: DataInput) -> Template:
    """Abstract value spans of `x` into nonterminal field slots.

    Every maximal token span exactly matching some value of some field
    (case-insensitive) becomes that field's nonterminal. Matching runs
    longest-span-first, left-to-right; span-length ties go to the
    alphabetically first field name.
    """
    x = tuple(x)
    lowered = tuple(tok.lower() for tok in x)
    matches: list[tuple[int, int, str]] = []  # (length, start, field)
    for name in d.entries:
        for value in d.entries[name]:
            val_toks = tuple(t.lower() for t in tokenize(value))
            width = len(val_toks)
            for start in range(len(x) - width + 1):
                if lowered[start : start + width] == val_toks:
                    matches.append((width, start, name))
    matches.sort(key=lambda m: (-m[0], m[1], m[2]))
    taken = [False] * len(x)
    chosen: dict[int, tuple[int, str]] = {}  # start -> (length, field)
    for width, start, name in matches:
        if any(taken[start : start + width]):
            continue
        if start in chosen:  # same span already claimed by an earlier field
            continue
        for i in range(start, start + width):
            taken[i] = True
        chosen[start] = (width, name)
    tokens: list[TemplateToken] = []
    i = 0
    while i < len(x):
        if i in chosen:
            width, name = chosen[i]
            tokens.append(TemplateToken.nonterminal(name))
            i += width
        else:
            tokens.append(TemplateToken.terminal(x[i]))
            i += 1
    return Template(tokens=tuple(tokens))


def recombine(
    examples: Sequence[DataInput], plan: RecombinationPlan
) -> list[DataInput]:
    """Grow a cluster to plan.target_count inputs by swapping field values.

    Originals always come first. Each synthetic input starts from a random
    base example and, independently for every swap field, takes that field's
    value list from a uniformly random example of the cluster. Reproducible
    for a fixed plan seed.
    """
    if not examples:
        raise ValueError("cannot recombine an empty cluster")
    if plan.target_count < len(examples):
        raise ValueError("target_count must cover the original examples")
    rng = random.Random(plan.seed)
    out = list(examples)
    for i in range(plan.target_count - len(examples)):
        base = rng.choice(examples)
        entries = dict(base.entries)
        for name in sorted(plan.swap_fields):
            if name in entries:
                donor = rng.choice(examples)
                if name in donor.entries:
                    entries[name] = donor.entries[name]
        out.append(
            DataInput(entries=entries, id=f"{base.id}~r{i}")
        )
    return out


def extract_initial(
    examples: Sequence[DataInput],
    backend: LMBackend,
    k: int,
    max_len: int,
    cluster: ClusterKey | None = None,
) -> list[Template]:
    """Generate, delexicalize, and deduplicate one cluster's candidates."""
    seen: set[tuple[TemplateToken, ...]] = set()
    out: list[Template] = []
    for d in examples:
        generated = backend.beam_generate(ConditioningContext.left_to_right(d), k, max_len)
        if not generated:
            continue
        t = delexicalize(generated, d)
        if t.tokens in seen:
            continue
        seen.add(t.tokens)
        out.append(Template(tokens=t.tokens, source_id=d.id, cluster=cluster))
    return out
