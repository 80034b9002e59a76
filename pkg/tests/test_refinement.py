from __future__ import annotations

import random

import pytest

from templm.backend import ConditioningContext
from templm.core import ClusterKey, DataInput, Template, parse_template_tokens
from templm.errors import NoValidField
from templm.ngram import NGramBackend, train_ngram
from templm.refinement import (
    GAP_FIELD,
    GapContext,
    consensus_beam_search,
    find_ungeneralizable_spans,
    heuristic_chunker,
    refine,
    token_generalizability,
    _best_value,
)
from templm.validation import template_generalizability

from oracles import enumerate_gap_argmax, score_gap_hypothesis


def T(surface, cluster=None):
    return Template(tokens=parse_template_tokens(surface), cluster=cluster)


def trained(rows, order=16):
    return NGramBackend(train_ngram(rows, order=order))


class TestTokenGeneralizability:
    def test_singleton_cluster_matches_chain_rule(self):
        d = DataInput({"name": ["Aromi"]}, id="d0")
        backend = trained([(d, "Aromi is good")])
        t = T("[name] is good")
        tg = token_generalizability(t, [d], backend)
        ctx = ConditioningContext.left_to_right(d)
        tokens = ("Aromi", "is", "good")
        expected = [
            backend.token_logprob(ctx, tokens[:j], tokens[j]) for j in range(3)
        ]
        assert len(tg.scores) == 3
        for got, want in zip(tg.scores, expected):
            assert got == pytest.approx(want, abs=1e-12)
        assert tg.counts == (1, 1, 1)

    def test_multitoken_value_scores_jointly(self):
        d = DataInput({"rating": ["5 out of 5"]}, id="d0")
        backend = trained([(d, "rated 5 out of 5")])
        t = T("rated [rating]")
        tg = token_generalizability(t, [d], backend)
        ctx = ConditioningContext.left_to_right(d)
        tokens = ("rated", "5", "out", "of", "5")
        joint = sum(
            backend.token_logprob(ctx, tokens[:j], tokens[j]) for j in range(1, 5)
        )
        assert tg.scores[1] == pytest.approx(joint, abs=1e-12)
        assert tg.counts == (1, 4)

    def test_two_example_average(self):
        d0 = DataInput({"name": ["Aromi"]}, id="d0")
        d1 = DataInput({"name": ["Zizzi"]}, id="d1")
        backend = trained([(d0, "Aromi is good"), (d1, "Zizzi is good")], order=4)
        t = T("[name] is good")
        tg = token_generalizability(t, [d0, d1], backend)
        per_example = []
        for d in (d0, d1):
            ctx = ConditioningContext.left_to_right(d)
            toks = (d.entries["name"][0], "is", "good")
            per_example.append(
                [backend.token_logprob(ctx, toks[:j], toks[j]) for j in range(3)]
            )
        for j in range(3):
            want = (per_example[0][j] + per_example[1][j]) / 2
            assert tg.scores[j] == pytest.approx(want, abs=1e-12)

    def test_scores_nonpositive(self):
        d = DataInput({"name": ["Aromi"]}, id="d0")
        backend = trained([(d, "Aromi is good")])
        tg = token_generalizability(T("[name] is good"), [d], backend)
        assert all(s <= 0 for s in tg.scores)


class TestHeuristicChunker:
    def test_leaves_runs_and_sentence(self):
        spans = heuristic_chunker(["big", "dogs", "in", "paris", "."])
        assert (0, 2) in spans  # run before the stop word
        assert (3, 4) in spans  # run after
        assert (0, 5) in spans  # sentence
        assert all((i, i + 1) in spans for i in range(5))

    def test_spans_well_nested(self):
        toks = "the cat sat . a dog ran .".split()
        spans = heuristic_chunker(toks)
        for a in spans:
            for b in spans:
                s1, e1 = a
                s2, e2 = b
                overlap = max(s1, s2) < min(e1, e2)
                nested = (s1 <= s2 and e2 <= e1) or (s2 <= s1 and e1 <= e2)
                assert not overlap or nested

    def test_multi_sentence_spans(self):
        spans = heuristic_chunker("one . two .".split())
        assert (0, 2) in spans and (2, 4) in spans


class FixedParse:
    def __init__(self, spans):
        self.spans = spans

    def __call__(self, tokens):
        return self.spans


def tg_for(t, scores):
    from templm.refinement import TokenGeneralizability

    return TokenGeneralizability(
        template_ref=t.id, scores=tuple(scores), counts=(1,) * len(scores)
    )


class TestFindUngeneralizableSpans:
    def test_no_spans_below_threshold(self):
        t = T("a nice meal .")
        tg = tg_for(t, [-0.5, -1.0, -0.3, -0.1])
        res = find_ungeneralizable_spans(t, tg, heuristic_chunker, threshold=-2.0)
        assert res.removed_spans == ()
        assert res.partial_template is t

    def test_single_bad_constituent_removed(self):
        t = T("w x y z")
        parse = FixedParse([(0, 1), (1, 3), (3, 4)])
        tg = tg_for(t, [-0.1, -5.0, -5.0, -0.1])
        res = find_ungeneralizable_spans(t, tg, parse, threshold=-2.0)
        assert [(s, e) for s, e, _ in res.removed_spans] == [(1, 3)]
        assert res.removed_spans[0][2] == pytest.approx(-5.0)
        assert res.partial_template.surface() == f"w [{GAP_FIELD}] z"

    def test_nested_bad_spans_report_outer_only(self):
        t = T("w x y z")
        parse = FixedParse([(1, 2), (1, 3), (0, 4)])
        tg = tg_for(t, [-0.1, -4.0, -3.0, -0.1])
        res = find_ungeneralizable_spans(t, tg, parse, threshold=-2.0)
        assert [(s, e) for s, e, _ in res.removed_spans] == [(1, 3)]

    def test_adjacent_spans_coalesce(self):
        t = T("w x y z")
        parse = FixedParse([(0, 2), (2, 4)])
        tg = tg_for(t, [-9.0, -9.0, -9.0, -9.0])
        res = find_ungeneralizable_spans(t, tg, parse, threshold=-2.0)
        assert [(s, e) for s, e, _ in res.removed_spans] == [(0, 4)]
        assert res.partial_template.surface() == f"[{GAP_FIELD}]"

    def test_threshold_monotone(self):
        t = T("w x y z .")
        tg = tg_for(t, [-0.5, -3.0, -1.5, -4.5, -0.2])
        loose = find_ungeneralizable_spans(t, tg, heuristic_chunker, threshold=-1.0)
        strict = find_ungeneralizable_spans(t, tg, heuristic_chunker, threshold=-4.0)
        loose_tokens = set()
        for s, e, _ in loose.removed_spans:
            loose_tokens.update(range(s, e))
        strict_tokens = set()
        for s, e, _ in strict.removed_spans:
            strict_tokens.update(range(s, e))
        assert strict_tokens <= loose_tokens


BIO_TAIL = "and grew up near the old harbour ."


def bio_cluster(n, cities=None, rng=None):
    rng = rng or random.Random(0)
    names = ["kim", "lee", "ana", "omar", "ravi", "sara", "finn", "mira", "tomo", "ines"]
    pool = cities or [
        "paris", "seoul", "tokyo", "cairo", "quito", "oslo", "lima", "bonn", "turin", "kyoto"
    ]
    years = [str(1960 + 3 * i) for i in range(10)]
    cluster = []
    for i in range(n):
        cluster.append(
            DataInput(
                {
                    "name": [names[i % len(names)]],
                    "birth_place": [pool[i % len(pool)]],
                    "birth_year": [years[i % len(years)]],
                },
                id=f"b{i}",
            )
        )
    rows = [
        (
            d,
            f"{d.entries['name'][0]} was born in {d.entries['birth_place'][0]} "
            f"in {d.entries['birth_year'][0]} {BIO_TAIL}",
        )
        for d in cluster
    ]
    return cluster, rows


class TestConsensusBeamSearch:
    def test_single_context_no_fields_matches_enumeration(self):
        d = DataInput({"f": ["x"]}, id="d0")
        backend = trained([(d, "x p q"), (d, "x p r")], order=3)
        gc = GapContext(left=("x",), right=("q",), data=d)
        vocab = sorted(backend.vocabulary())
        got = consensus_beam_search(
            [gc], backend, k=200, max_len=3, fields=[], vocab=vocab
        )
        want, want_score = enumerate_gap_argmax([gc], backend, 3, [], vocab)
        got_score = score_gap_hypothesis([gc], backend, got, finished=True)
        assert got_score == pytest.approx(want_score, abs=1e-9)

    def test_exhaustive_matches_enumeration_with_fields(self):
        cluster, rows = bio_cluster(3)
        backend = trained(rows, order=16)
        vocab = ["was", "born", "in", "."]
        tail = tuple(BIO_TAIL.split())
        contexts = [
            GapContext(
                left=(d.entries["name"][0], "was", "born", "in"),
                right=("in", d.entries["birth_year"][0]) + tail,
                data=d,
            )
            for d in cluster
        ]
        fields = ["birth_place", "birth_year", "name"]
        got = consensus_beam_search(
            contexts, backend, k=10_000, max_len=2, fields=fields, vocab=vocab
        )
        want, want_score = enumerate_gap_argmax(contexts, backend, 2, fields, vocab)
        got_score = score_gap_hypothesis(
            contexts, backend, got, finished=True
        )
        assert got_score == pytest.approx(want_score, abs=1e-9)
        assert [t.surface() for t in got] == [t.surface() for t in want]

    def test_field_token_beats_any_single_terminal(self):
        cluster, rows = bio_cluster(5)
        backend = trained(rows, order=16)
        tail = tuple(BIO_TAIL.split())
        contexts = [
            GapContext(
                left=(d.entries["name"][0], "was", "born", "in"),
                right=("in", d.entries["birth_year"][0]) + tail,
                data=d,
            )
            for d in cluster
        ]
        got = consensus_beam_search(
            contexts, backend, k=8, max_len=2, fields=["birth_place"]
        )
        assert [t.surface() for t in got] == ["[birth_place]"]

    def test_identical_contexts_equal_single_context(self):
        d = DataInput({"f": ["x"]}, id="d0")
        backend = trained([(d, "x p q"), (d, "x r q")], order=3)
        gc = GapContext(left=("x",), right=("q",), data=d)
        one = consensus_beam_search([gc], backend, k=5, max_len=3, fields=[])
        three = consensus_beam_search([gc] * 3, backend, k=5, max_len=3, fields=[])
        assert one == three
        s1 = score_gap_hypothesis([gc], backend, one, finished=True)
        s3 = score_gap_hypothesis([gc] * 3, backend, three, finished=True)
        assert s1 == pytest.approx(s3, abs=1e-9)

    def test_missing_field_pruned_not_fatal(self):
        d0 = DataInput({"name": ["kim"], "city": ["oslo"]}, id="d0")
        d1 = DataInput({"name": ["lee"]}, id="d1")
        backend = trained([(d0, "kim lives in oslo"), (d1, "lee lives here")], order=4)
        contexts = [
            GapContext(left=("kim", "lives", "in"), right=(), data=d0),
            GapContext(left=("lee", "lives", "in"), right=(), data=d1),
        ]
        out = consensus_beam_search(
            contexts, backend, k=4, max_len=2, fields=["city", "name"]
        )
        assert all(tok.text != "city" for tok in out if tok.is_nonterminal)

    def test_best_value_raises_for_absent_field(self):
        d = DataInput({"name": ["kim"]}, id="d0")
        backend = trained([(d, "kim is here")], order=3)
        dist = backend.next_token_logprobs(ConditioningContext.left_to_right(d), ())
        with pytest.raises(NoValidField):
            _best_value(d, "city", dist)


class TestRefine:
    def test_fixed_point_above_threshold(self):
        cluster, rows = bio_cluster(5)
        backend = trained(rows, order=16)
        t = T(f"[name] was born in [birth_place] in [birth_year] {BIO_TAIL}",
              cluster=ClusterKey.from_fields(["name", "birth_place", "birth_year"]))
        out = refine(t, cluster, backend, threshold=-2.0, k=5, max_len=6)
        assert out is t

    def test_lexicalized_city_replaced_by_field(self):
        cluster, rows = bio_cluster(8)
        backend = trained(rows, order=16)
        t = T(f"[name] was born in paris in [birth_year] {BIO_TAIL}",
              cluster=ClusterKey.from_fields(["name", "birth_place", "birth_year"]))
        out = refine(t, cluster, backend, threshold=-2.0, k=5, max_len=6)
        assert out.surface() == f"[name] was born in [birth_place] in [birth_year] {BIO_TAIL}"
        assert out.status == "refined"

    def test_refined_score_at_least_pre_removal(self):
        cluster, rows = bio_cluster(8)
        backend = trained(rows, order=16)
        t = T(f"[name] was born in paris in [birth_year] {BIO_TAIL}",
              cluster=ClusterKey.from_fields(["name", "birth_place", "birth_year"]))
        out = refine(t, cluster, backend, threshold=-2.0, k=5, max_len=6)
        before = template_generalizability(t, cluster, backend).total
        after = template_generalizability(out, cluster, backend).total
        assert after >= before

    def test_disfluent_span_repaired_by_insertion(self):
        names = ["kim", "lee", "ana", "omar", "ravi", "sara", "finn", "mira"]
        spouses = ["noa", "idris", "vera", "kofi", "lena", "amir", "rosa", "dev"]
        cluster = [
            DataInput({"name": [n], "spouse": [s]}, id=f"m{i}")
            for i, (n, s) in enumerate(zip(names, spouses))
        ]
        rows = [
            (
                d,
                f"{d.entries['name'][0]} was married to {d.entries['spouse'][0]} "
                "for ten long happy years .",
            )
            for d in cluster
        ]
        backend = trained(rows, order=12)
        t = T("[name] married to [spouse] for ten long happy years .",
              cluster=ClusterKey.from_fields(["name", "spouse"]))
        out = refine(t, cluster, backend, threshold=-2.0, k=8, max_len=6)
        assert out.surface() == "[name] was married to [spouse] for ten long happy years ."
