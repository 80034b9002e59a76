"""Template refinement: find spans that stay improbable across a cluster,
cut them out along constituent boundaries, and regrow each gap with a beam
search whose step scores are aggregated over every input in the cluster
(terminal candidates score as themselves; field candidates score as the
value they would be filled with, per input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .backend import (
    END_TOKEN,
    ConditioningContext,
    LMBackend,
)
from .core import (
    DataInput,
    STATUS_REFINED,
    Template,
    TemplateToken,
    tokenize,
)
from .errors import NoValidField
from .inference import select_content
from .validation import template_generalizability

GAP_FIELD = "__gap__"

ParseProvider = Callable[[Sequence[str]], Sequence[tuple[int, int]]]

DEFAULT_STOP_WORDS = frozenset(
    """a an the and or but nor so yet is are was were be been being am do does
    did has have had to of in on at by for with from as that this these those
    it its if then than when while near not no . , ! ? ; :""".split()
)

_SENTENCE_FINAL = frozenset({".", "!", "?"})


@dataclass(frozen=True)
class TokenGeneralizability:
    """Per-template-token mean log-probability across a cluster."""

    template_ref: str
    scores: tuple[float, ...]
    counts: tuple[int, ...]  # aligned output tokens per template token


@dataclass(frozen=True)
class SpanRemovalResult:
    """A template with ungeneralizable spans cut out.

    The partial template carries one reserved `[__gap__]` marker per removed
    span; removed_spans holds (start, end, mean score) in original indices.
    """

    partial_template: Template
    removed_spans: tuple[tuple[int, int, float], ...]


@dataclass(frozen=True)
class GapContext:
    """One input's view of a gap: realized left/right context plus the data."""

    left: tuple[str, ...]
    right: tuple[str, ...]
    data: DataInput


def heuristic_chunker(
    tokens: Sequence[str], stop_words: frozenset[str] = DEFAULT_STOP_WORDS
) -> list[tuple[int, int]]:
    """Constituent stand-in: token leaves, maximal runs between function-word
    boundaries, and sentence spans. Spans are well-nested by construction."""
    n = len(tokens)
    spans: set[tuple[int, int]] = {(i, i + 1) for i in range(n)}
    run_start: int | None = None
    for i, tok in enumerate(list(tokens) + ["."]):  # sentinel closes last run
        if tok.lower() in stop_words or tok in _SENTENCE_FINAL:
            if run_start is not None:
                spans.add((run_start, i))
                run_start = None
        elif run_start is None:
            run_start = i
    sent_start = 0
    for i, tok in enumerate(tokens):
        if tok in _SENTENCE_FINAL:
            spans.add((sent_start, i + 1))
            sent_start = i + 1
    if sent_start < n:
        spans.add((sent_start, n))
    return sorted(spans, key=lambda s: (s[0], -(s[1] - s[0])))


def token_generalizability(
    t: Template,
    cluster_examples: Sequence[DataInput],
    backend: LMBackend,
) -> TokenGeneralizability:
    """Chain-rule scores of each filled output, mapped back through the fill
    alignment and averaged per template token across the cluster."""
    if not cluster_examples:
        raise ValueError("token generalizability needs at least one example")
    sums = [0.0] * len(t.tokens)
    counts = [0] * len(t.tokens)
    for d in cluster_examples:
        out = select_content(t, d, backend)
        ctx = ConditioningContext.left_to_right(d)
        token_lps = [
            backend.token_logprob(ctx, out.text_tokens[:pos], out.text_tokens[pos])
            for pos in range(len(out.text_tokens))
        ]
        for j in range(len(t.tokens)):
            start, end = out.alignment[j]
            sums[j] += math.fsum(token_lps[start:end])
            counts[j] += end - start
    n = len(cluster_examples)
    return TokenGeneralizability(
        template_ref=t.id,
        scores=tuple(s / n for s in sums),
        counts=tuple(counts),
    )


def find_ungeneralizable_spans(
    t: Template,
    tg: TokenGeneralizability,
    parser: ParseProvider,
    threshold: float,
) -> SpanRemovalResult:
    """Cut every maximal constituent whose mean token score falls below
    `threshold`; adjacent cuts coalesce into one gap."""
    if threshold >= 0:
        raise ValueError("threshold must be negative (log-probability scale)")
    if len(tg.scores) != len(t.tokens):
        raise ValueError("score vector does not match template length")
    n = len(t.tokens)
    spans = [(int(s), int(e)) for s, e in parser([tok.surface() for tok in t.tokens])]
    for s, e in spans:
        if not (0 <= s < e <= n):
            raise ValueError(f"parse span ({s}, {e}) out of bounds for {n} tokens")
    flagged = [
        (s, e)
        for s, e in spans
        if math.fsum(tg.scores[s:e]) / (e - s) < threshold
    ]
    # Outermost flagged constituents only.
    maximal = [
        (s, e)
        for s, e in flagged
        if not any((s2 <= s and e <= e2) and (s2, e2) != (s, e) for s2, e2 in flagged)
    ]
    maximal.sort()
    merged: list[list[int]] = []
    for s, e in maximal:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    removed = tuple(
        (s, e, math.fsum(tg.scores[s:e]) / (e - s)) for s, e in merged
    )
    tokens: list[TemplateToken] = []
    cursor = 0
    for s, e, _ in removed:
        tokens.extend(t.tokens[cursor:s])
        tokens.append(TemplateToken.nonterminal(GAP_FIELD))
        cursor = e
    tokens.extend(t.tokens[cursor:])
    partial = Template(
        tokens=tuple(tokens) if tokens else t.tokens,
        source_id=t.source_id,
        cluster=t.cluster,
        status=t.status,
    )
    if not removed:
        partial = t
    return SpanRemovalResult(partial_template=partial, removed_spans=removed)


@dataclass(frozen=True)
class _Hypothesis:
    tokens: tuple[TemplateToken, ...]
    realized: tuple[tuple[str, ...], ...]  # per input
    totals: tuple[float, ...]  # per input cumulative log-prob
    steps: int
    finished: bool = False

    def mean_total(self) -> float:
        return math.fsum(self.totals) / len(self.totals)

    def step_score(self) -> float:
        return self.mean_total() / self.steps if self.steps else 0.0

    def rank_key(self):
        return (-self.step_score(), tuple(tok.surface() for tok in self.tokens))


def _best_value(d: DataInput, field_name: str, dist) -> tuple[str, ...]:
    """Greedy field-value selection by first-token probability."""
    values = d.entries.get(field_name)
    if not values:
        raise NoValidField(field_name)
    best_idx, best_lp = 0, float("-inf")
    for idx, value in enumerate(values):
        lp = dist.logprob(tokenize(value)[0])
        if lp > best_lp:
            best_idx, best_lp = idx, lp
    return tokenize(values[best_idx])


def consensus_beam_search(
    contexts: Sequence[GapContext],
    backend: LMBackend,
    k: int,
    max_len: int,
    fields: Sequence[str] | None = None,
    vocab: Sequence[str] | None = None,
) -> tuple[TemplateToken, ...]:
    """Search for gap content that scores well for every context at once.

    Each step aggregates per-input infill log-probabilities by arithmetic
    mean; a field candidate contributes the joint log-probability of the
    value it would be filled with in each input. Hypotheses that emit END
    freeze; the final winner is the hypothesis with the best mean per-step
    score, so finished and still-open hypotheses compare without length bias.
    """
    if not contexts:
        raise ValueError("consensus beam search needs at least one context")
    if k < 1 or max_len < 1:
        raise ValueError("beam size and max length must be >= 1")
    if fields is None:
        shared = set(contexts[0].data.fields())
        for gc in contexts[1:]:
            shared &= gc.data.fields()
        fields = sorted(shared)
    terminals = tuple(sorted(vocab if vocab is not None else backend.vocabulary()))
    n = len(contexts)
    infill_ctxs = [
        ConditioningContext.infill(gc.data, gc.left, gc.right) for gc in contexts
    ]
    beam = [
        _Hypothesis(tokens=(), realized=((),) * n, totals=(0.0,) * n, steps=0)
    ]
    for _ in range(max_len):
        candidates: list[_Hypothesis] = []
        live = 0
        for hyp in beam:
            if hyp.finished:
                candidates.append(hyp)
                continue
            live += 1
            dists = [
                backend.next_token_logprobs(infill_ctxs[i], hyp.realized[i])
                for i in range(n)
            ]
            candidates.append(
                _Hypothesis(
                    tokens=hyp.tokens,
                    realized=hyp.realized,
                    totals=tuple(
                        hyp.totals[i] + dists[i].logprob(END_TOKEN) for i in range(n)
                    ),
                    steps=hyp.steps + 1,
                    finished=True,
                )
            )
            for word in terminals:
                candidates.append(
                    _Hypothesis(
                        tokens=hyp.tokens + (TemplateToken.terminal(word),),
                        realized=tuple(hyp.realized[i] + (word,) for i in range(n)),
                        totals=tuple(
                            hyp.totals[i] + dists[i].logprob(word) for i in range(n)
                        ),
                        steps=hyp.steps + 1,
                    )
                )
            for field_name in fields:
                try:
                    chosen = [
                        _best_value(contexts[i].data, field_name, dists[i])
                        for i in range(n)
                    ]
                except NoValidField:
                    continue  # pruned, not an abort
                totals = []
                realized = []
                for i in range(n):
                    lp = dists[i].logprob(chosen[i][0])
                    prefix = hyp.realized[i] + chosen[i][:1]
                    for extra in chosen[i][1:]:
                        lp += backend.next_token_logprobs(infill_ctxs[i], prefix).logprob(extra)
                        prefix += (extra,)
                    totals.append(hyp.totals[i] + lp)
                    realized.append(hyp.realized[i] + chosen[i])
                candidates.append(
                    _Hypothesis(
                        tokens=hyp.tokens + (TemplateToken.nonterminal(field_name),),
                        realized=tuple(realized),
                        totals=tuple(totals),
                        steps=hyp.steps + 1,
                    )
                )
        if not live:
            break
        candidates.sort(key=_Hypothesis.rank_key)
        beam = candidates[:k]

    def closed(hyp: _Hypothesis) -> _Hypothesis:
        # Every returned gap eventually closes, so open hypotheses pay the
        # gap-closing term before the final comparison; otherwise a length-M
        # hypothesis that merely replicates the right context rides free.
        if hyp.finished:
            return hyp
        return _Hypothesis(
            tokens=hyp.tokens,
            realized=hyp.realized,
            totals=tuple(
                hyp.totals[i]
                + backend.next_token_logprobs(infill_ctxs[i], hyp.realized[i]).logprob(
                    END_TOKEN
                )
                for i in range(n)
            ),
            steps=hyp.steps + 1,
            finished=True,
        )

    best = min((closed(h) for h in beam), key=_Hypothesis.rank_key)
    return best.tokens


def _realize_tokens(
    tokens: Sequence[TemplateToken],
    d: DataInput,
    backend: LMBackend,
    prefix: tuple[str, ...] = (),
) -> tuple[str, ...]:
    """Greedy-first-token realization of a token run, given a realized prefix."""
    ctx = ConditioningContext.left_to_right(d)
    out: list[str] = list(prefix)
    for tok in tokens:
        if tok.is_terminal:
            out.append(tok.text)
            continue
        values = d.values_for(tok.text)
        best_idx = 0
        if len(values) > 1:
            best_lp = float("-inf")
            for idx, value in enumerate(values):
                lp = backend.token_logprob(ctx, tuple(out), tokenize(value)[0])
                if lp > best_lp:
                    best_idx, best_lp = idx, lp
        out.extend(tokenize(values[best_idx]))
    return tuple(out[len(prefix):])


def refine(
    t: Template,
    cluster_examples: Sequence[DataInput],
    backend: LMBackend,
    parser: ParseProvider = heuristic_chunker,
    threshold: float = -2.0,
    k: int = 5,
    max_len: int = 10,
) -> Template:
    """Remove ungeneralizable spans and regrow each gap by consensus search.

    Gaps fill left-to-right, re-realizing contexts after each fill. If the
    searched result scores worse than simply dropping the spans, the dropped
    variant wins, so refinement never falls below the empty-gap baseline.
    Returns `t` unchanged when nothing falls below the threshold.
    """
    tg = token_generalizability(t, cluster_examples, backend)
    removal = find_ungeneralizable_spans(t, tg, parser, threshold)
    if not removal.removed_spans:
        return t

    shared_fields = set(cluster_examples[0].fields())
    for d in cluster_examples[1:]:
        shared_fields &= d.fields()
    field_order = sorted(shared_fields)

    # Spans repair one at a time, left to right: the gap being searched sees
    # earlier repairs on its left and the still-original template on its
    # right, and every context is re-realized per input at each step.
    current = t.tokens
    offset = 0
    base_tokens: list[TemplateToken] = []
    cursor = 0
    for s, e, _ in removal.removed_spans:
        base_tokens.extend(t.tokens[cursor:s])
        cursor = e
        left = current[: s + offset]
        right = current[e + offset :]
        contexts = []
        for d in cluster_examples:
            left_real = _realize_tokens(left, d, backend)
            right_real = _realize_tokens(right, d, backend, left_real)
            contexts.append(GapContext(left=left_real, right=right_real, data=d))
        gap_tokens = consensus_beam_search(
            contexts, backend, k=k, max_len=max_len, fields=field_order
        )
        current = left + gap_tokens + right
        offset += len(gap_tokens) - (e - s)
    base_tokens.extend(t.tokens[cursor:])

    refined_tokens = tuple(current)
    if not refined_tokens:
        return t
    chosen = refined_tokens
    if base_tokens and tuple(base_tokens) != refined_tokens:
        refined_score = template_generalizability(
            Template(refined_tokens, t.source_id, t.cluster), cluster_examples, backend
        )
        base_score = template_generalizability(
            Template(tuple(base_tokens), t.source_id, t.cluster),
            cluster_examples,
            backend,
        )
        if base_score.total > refined_score.total:
            chosen = tuple(base_tokens)
    return Template(
        tokens=chosen,
        source_id=t.source_id,
        cluster=t.cluster,
        status=STATUS_REFINED,
    )
