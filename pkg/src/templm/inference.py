"""Inference: fill templates for a new input and pick the best realization.

Content selection resolves multi-valued fields with a greedy first-token
probe under the backend; surface realization ranks the filled templates of
the input's cluster by full sequence log-probability. Both steps only ever
copy terminals or input values, which is what makes outputs faithful by
construction.
"""

from __future__ import annotations

from typing import Sequence

from .backend import ConditioningContext, LMBackend
from .core import (
    DataInput,
    FilledOutput,
    Template,
    cluster_key,
    fields_of,
    tokenize,
)
from .errors import NoTemplateForCluster, TemplmError
from .templateset import TemplateSet


def select_content(
    t: Template,
    d: DataInput,
    backend: LMBackend,
    exact: bool = False,
) -> FilledOutput:
    """Fill `t` left-to-right, choosing each nonterminal's value greedily.

    At a nonterminal the value whose first token scores highest under the
    backend (given the realized prefix) wins; ties go to the lowest value
    index. With exact=True the full value roll-out is scored instead of the
    first token only.
    """
    ctx = ConditioningContext.left_to_right(d)
    out_tokens: list[str] = []
    alignment: list[tuple[int, int]] = []
    for tok in t.tokens:
        start = len(out_tokens)
        if tok.is_terminal:
            out_tokens.append(tok.text)
        else:
            values = d.values_for(tok.text)
            best_idx = 0
            if len(values) > 1:
                best_score = float("-inf")
                prefix = tuple(out_tokens)
                for idx, value in enumerate(values):
                    val_toks = tokenize(value)
                    if exact:
                        score = 0.0
                        for m, vt in enumerate(val_toks):
                            score += backend.token_logprob(ctx, prefix + val_toks[:m], vt)
                    else:
                        score = backend.token_logprob(ctx, prefix, val_toks[0])
                    if score > best_score:
                        best_score = score
                        best_idx = idx
            out_tokens.extend(tokenize(values[best_idx]))
        alignment.append((start, len(out_tokens)))
    return FilledOutput(
        text_tokens=tuple(out_tokens),
        alignment=tuple(alignment),
        template_ref=t.id,
        data_ref=d.id,
    )


def output_is_faithful(out: FilledOutput, t: Template, d: DataInput) -> bool:
    """Check token provenance: every output token is a template terminal or
    part of a value present in the input data."""
    if len(out.alignment) != len(t.tokens):
        return False
    for j, tok in enumerate(t.tokens):
        span = out.span_tokens(j)
        if tok.is_terminal:
            if span != (tok.text,):
                return False
        else:
            if tok.text not in d.entries:
                return False
            if span not in {tokenize(v) for v in d.entries[tok.text]}:
                return False
    return True


def realize(
    d: DataInput,
    ts: TemplateSet,
    backend: LMBackend,
    fallback: bool = False,
) -> tuple[FilledOutput, Template, float]:
    """Fill every usable template of the input's cluster and keep the one
    the backend prefers.

    Raises NoTemplateForCluster for an unseen field combination unless
    `fallback` allows borrowing the largest cluster whose fields are a
    subset of the input's.
    """
    key = cluster_key(d, ts.policy)
    templates = ts.usable_templates(key)
    if not templates and fallback:
        templates = _fallback_templates(d, ts)
    if not templates:
        raise NoTemplateForCluster(key.canonical())
    ctx = ConditioningContext.left_to_right(d)
    best: tuple[float, str] | None = None
    best_out: FilledOutput | None = None
    best_t: Template | None = None
    for t in templates:
        out = select_content(t, d, backend)
        score = backend.sequence_logprob(ctx, out.text_tokens)
        rank = (-score, t.id)
        if best is None or rank < best:
            best = rank
            best_out, best_t = out, t
    assert best_out is not None and best_t is not None and best is not None
    if not output_is_faithful(best_out, best_t, d):
        raise TemplmError(
            f"provenance check failed for template {best_t.id} on input {d.id}"
        )
    return best_out, best_t, -best[0]


def _fallback_templates(d: DataInput, ts: TemplateSet) -> list[Template]:
    """Largest usable cluster whose field requirements d can satisfy."""
    available = d.fields()
    candidates: list[tuple[int, str, list[Template]]] = []
    for key in ts.cluster_keys():
        templates = ts.usable_templates(key)
        if not templates:
            continue
        needed = set()
        for t in templates:
            needed |= fields_of(t)
        if needed <= available:
            candidates.append((len(needed), key.canonical(), templates))
    if not candidates:
        return []
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[0][2]


def realize_batch(
    inputs: Sequence[DataInput],
    ts: TemplateSet,
    backend: LMBackend,
    fallback: bool = False,
) -> list[tuple[FilledOutput, Template, float]]:
    return [realize(d, ts, backend, fallback=fallback) for d in inputs]
