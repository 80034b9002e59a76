"""Template validation: keep the templates that stay probable when filled
with every other input of their cluster."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backend import ConditioningContext, LMBackend
from .core import DataInput, STATUS_VALIDATED, Template, tokenize
from .inference import select_content


@dataclass(frozen=True)
class GeneralizabilityScore:
    """Sum and per-example breakdown of a template's cluster log-probability."""

    template_ref: str
    total: float
    per_example: dict[str, float]

    def __post_init__(self):
        object.__setattr__(self, "per_example", dict(self.per_example))
        drift = abs(self.total - math.fsum(self.per_example.values()))
        if drift > 1e-9:
            raise ValueError(f"total drifts from per-example sum by {drift}")

    @property
    def mean(self) -> float:
        return self.total / len(self.per_example) if self.per_example else 0.0


def template_generalizability(
    t: Template,
    cluster_examples: Sequence[DataInput],
    backend: LMBackend,
) -> GeneralizabilityScore:
    """Score a template by the log-probability of its content-selected fill
    on every example of the cluster."""
    per_example: dict[str, float] = {}
    for d in cluster_examples:
        out = select_content(t, d, backend)
        per_example[d.id] = backend.sequence_logprob(
            ConditioningContext.left_to_right(d), out.text_tokens
        )
    return GeneralizabilityScore(
        template_ref=t.id,
        total=math.fsum(per_example.values()),
        per_example=per_example,
    )


def suspected_value_terminals(t: Template, cluster_examples: Sequence[DataInput]) -> int:
    """Terminal tokens that look like leaked data values within the cluster."""
    value_tokens: set[str] = set()
    for d in cluster_examples:
        for values in d.entries.values():
            for value in values:
                value_tokens.update(w.lower() for w in tokenize(value))
    return sum(1 for tok in t.tokens if tok.is_terminal and tok.text.lower() in value_tokens)


def validate_cluster(
    candidates: Sequence[Template],
    cluster_examples: Sequence[DataInput],
    backend: LMBackend,
    top_k: int,
) -> tuple[list[Template], list[tuple[Template, GeneralizabilityScore]]]:
    """Rank candidates by total cluster score and keep the best `top_k`.

    Ties break toward templates with fewer terminals that match cluster data
    values, then lexicographic surface text. Returns the survivors (status
    promoted to validated) plus the full ranking for reporting.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    scored = []
    for t in candidates:
        score = template_generalizability(t, cluster_examples, backend)
        scored.append((t, score))
    scored.sort(
        key=lambda pair: (
            -pair[1].total,
            suspected_value_terminals(pair[0], cluster_examples),
            pair[0].surface(),
        )
    )
    survivors = [t.with_status(STATUS_VALIDATED) for t, _ in scored[:top_k]]
    return survivors, scored
