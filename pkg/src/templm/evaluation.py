"""Faithfulness and fluency metrics.

The faithfulness metric is matching-based: a phrase table maps (field,
value) pairs to surface paraphrases, an output is scanned for paraphrase
occurrences, and anything that matches a pair not supported by the input
counts as a precision error. Recall errors count input pairs that no
paraphrase (nor the raw value) verbalizes. BLEU-4 and ROUGE-L cover
reference-based fluency.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Mapping, Sequence

from .core import DataInput, tokenize
from .templateset import TemplateSet


@dataclass(frozen=True)
class PhraseTable:
    """(field, value) -> surface paraphrases; values always match themselves."""

    entries: Mapping[tuple[str, str], tuple[str, ...]]

    def __post_init__(self):
        frozen: dict[tuple[str, str], tuple[str, ...]] = {}
        for (field_name, value), phrasings in self.entries.items():
            cleaned = tuple(p for p in phrasings if p.strip())
            frozen[(field_name, value)] = cleaned
        object.__setattr__(self, "entries", frozen)

    def phrasings(self, field_name: str, value: str) -> tuple[str, ...]:
        """All paraphrases for a pair, the raw value included."""
        listed = self.entries.get((field_name, value), ())
        if any(p.lower() == value.lower() for p in listed):
            return listed
        return (value,) + listed

    def fields(self) -> set[str]:
        return {f for f, _ in self.entries}

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(self.entries)

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, Sequence[str]]]) -> PhraseTable:
        entries = {}
        for field_name, values in data.items():
            for value, phrasings in values.items():
                entries[(field_name, value)] = tuple(phrasings)
        return cls(entries=entries)

    def to_dict(self) -> dict:
        out: dict[str, dict[str, list[str]]] = {}
        for (field_name, value), phrasings in sorted(self.entries.items()):
            out.setdefault(field_name, {})[value] = list(phrasings)
        return out

    @classmethod
    def load(cls, path: str) -> PhraseTable:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _occurs(haystack: Sequence[str], needle: Sequence[str]) -> list[int]:
    """Start offsets where needle occurs as a contiguous token run."""
    n, m = len(haystack), len(needle)
    return [i for i in range(n - m + 1) if tuple(haystack[i : i + m]) == tuple(needle)]


def match_phrasings(output: str | Sequence[str], table: PhraseTable) -> set[tuple[str, str]]:
    """All (field, value) pairs with a paraphrase occurring in the output.

    Matching is case-insensitive on token subsequences. Within one field,
    longer paraphrases claim their tokens first so a value cannot also be
    credited through a substring of an already-matched phrasing.
    """
    tokens = tuple(
        t.lower() for t in (tokenize(output) if isinstance(output, str) else output)
    )
    matched: set[tuple[str, str]] = set()
    for field_name in sorted({f for f, _ in table.entries}):
        consumed = [False] * len(tokens)
        candidates = []
        for (f, value), _ in sorted(table.entries.items()):
            if f != field_name:
                continue
            for phrase in table.phrasings(field_name, value):
                phrase_toks = tuple(w.lower() for w in tokenize(phrase))
                if phrase_toks:
                    candidates.append((-len(phrase_toks), value, phrase_toks))
        candidates.sort()
        for neg_len, value, phrase_toks in candidates:
            width = -neg_len
            for start in _occurs(tokens, phrase_toks):
                if any(consumed[start : start + width]):
                    continue
                for i in range(start, start + width):
                    consumed[i] = True
                matched.add((field_name, value))
    return matched


def precision_errors(
    output: str | Sequence[str], d: DataInput, table: PhraseTable
) -> int:
    """Matched pairs whose field is absent from the input (hallucination) or
    present with a different value (inconsistency)."""
    errors = 0
    values_lower = {
        f: {v.lower() for v in vs} for f, vs in d.entries.items()
    }
    for field_name, value in match_phrasings(output, table):
        if field_name not in values_lower:
            errors += 1
        elif value.lower() not in values_lower[field_name]:
            errors += 1
    return errors


def recall_errors(
    output: str | Sequence[str],
    d: DataInput,
    table: PhraseTable,
    skip_fields: Iterable[str] = (),
) -> int:
    """Input fields no value of which is verbalized in the output.

    A field is verbalized when any of its values' paraphrases (or the raw
    value itself) occurs in the output. Returns the number of missed fields;
    `skip_fields` exempts augmentation-only fields.
    """
    tokens = tuple(
        t.lower() for t in (tokenize(output) if isinstance(output, str) else output)
    )
    skip = set(skip_fields)
    misses = 0
    for field_name in sorted(d.entries):
        if field_name in skip:
            continue
        found = False
        for value in d.entries[field_name]:
            for phrase in table.phrasings(field_name, value):
                phrase_toks = tuple(w.lower() for w in tokenize(phrase))
                if phrase_toks and _occurs(tokens, phrase_toks):
                    found = True
                    break
            if found:
                break
        if not found:
            misses += 1
    return misses


def flag_lexicalized(
    ts: TemplateSet, table: PhraseTable, corpus: Sequence[DataInput]
) -> set[str]:
    """Ids of templates whose terminal runs leak a data value.

    A template is flagged when any paraphrase or raw value of a (field,
    value) pair observed anywhere in the corpus occurs inside one of its
    terminal token runs.
    """
    phrases: set[tuple[str, ...]] = set()
    seen_pairs: set[tuple[str, str]] = set()
    for d in corpus:
        for field_name, values in d.entries.items():
            for value in values:
                seen_pairs.add((field_name, value))
    for field_name, value in seen_pairs:
        for phrase in table.phrasings(field_name, value):
            toks = tuple(w.lower() for w in tokenize(phrase))
            if toks:
                phrases.add(toks)
    flagged: set[str] = set()
    for t in ts.all_templates():
        runs: list[list[str]] = [[]]
        for tok in t.tokens:
            if tok.is_terminal:
                runs[-1].append(tok.text.lower())
            elif runs[-1]:
                runs.append([])
        if any(
            _occurs(run, phrase)
            for run in runs
            if run
            for phrase in phrases
            if len(phrase) <= len(run)
        ):
            flagged.add(t.id)
    return flagged


def audit_lexicalized(
    ts: TemplateSet, table: PhraseTable, corpus: Sequence[DataInput]
) -> float:
    """Fraction of templates flagged by flag_lexicalized."""
    templates = ts.all_templates()
    if not templates:
        return 0.0
    return len(flag_lexicalized(ts, table, corpus)) / len(templates)


# -- reference-based metrics -------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidates: Sequence[str | Sequence[str]],
    references: Sequence[Sequence[str | Sequence[str]]],
    max_order: int = 4,
) -> float:
    """Corpus-level BLEU-4 with brevity penalty, in [0, 100].

    `references[i]` lists the acceptable references for candidate i;
    modified n-gram precision clips against the per-reference maximum.
    """
    if len(candidates) != len(references):
        raise ValueError("need one reference list per candidate")
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_toks = [t.lower() for t in (tokenize(cand) if isinstance(cand, str) else cand)]
        ref_toks = [
            [t.lower() for t in (tokenize(r) if isinstance(r, str) else r)] for r in refs
        ]
        if not ref_toks:
            raise ValueError("every candidate needs at least one reference")
        cand_len += len(cand_toks)
        # closest reference length; ties to the shorter
        ref_len += min((abs(len(r) - len(cand_toks)), len(r)) for r in ref_toks)[1]
        for n in range(1, max_order + 1):
            cand_counts = _ngrams(cand_toks, n)
            max_ref: Counter = Counter()
            for r in ref_toks:
                for gram, count in _ngrams(r, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            totals[n - 1] += max(len(cand_toks) - n + 1, 0)
            matches[n - 1] += sum(
                min(count, max_ref[gram]) for gram, count in cand_counts.items()
            )
    # Orders no candidate is long enough to produce drop out of the mean
    # (effective order); a produced-but-unmatched order still zeroes the score.
    produced = [(m, t) for m, t in zip(matches, totals) if t > 0]
    if not produced or any(m == 0 for m, _ in produced):
        return 0.0
    log_precision = math.fsum(math.log(m / t) for m, t in produced) / len(produced)
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        row = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[len(b)]


def rouge_l(
    candidates: Sequence[str | Sequence[str]],
    references: Sequence[Sequence[str | Sequence[str]]],
    beta: float = 1.2,
) -> float:
    """Corpus ROUGE-L F-measure (mean over examples, max over references)."""
    if len(candidates) != len(references):
        raise ValueError("need one reference list per candidate")
    if not candidates:
        return 0.0
    scores = []
    for cand, refs in zip(candidates, references):
        cand_toks = [t.lower() for t in (tokenize(cand) if isinstance(cand, str) else cand)]
        best = 0.0
        for r in refs:
            ref_toks = [t.lower() for t in (tokenize(r) if isinstance(r, str) else r)]
            lcs = _lcs_length(cand_toks, ref_toks)
            if lcs == 0:
                continue
            precision = lcs / len(cand_toks)
            recall = lcs / len(ref_toks)
            f = (1 + beta**2) * precision * recall / (recall + beta**2 * precision)
            best = max(best, f)
        scores.append(best)
    return 100.0 * math.fsum(scores) / len(scores)


@dataclass
class FaithfulnessReport:
    """Per-example matches and corpus-level error totals."""

    examples: list[dict] = dc_field(default_factory=list)
    e_precision: int = 0
    e_recall: int = 0

    def add(
        self,
        example_id: str,
        output: str,
        d: DataInput,
        table: PhraseTable,
        skip_fields: Iterable[str] = (),
    ) -> dict:
        matched = sorted(match_phrasings(output, table))
        p_err = precision_errors(output, d, table)
        r_err = recall_errors(output, d, table, skip_fields)
        row = {
            "id": example_id,
            "matched": [list(pair) for pair in matched],
            "precision_errors": p_err,
            "recall_errors": r_err,
        }
        self.examples.append(row)
        self.e_precision += p_err
        self.e_recall += r_err
        return row

    def summary(self) -> dict:
        return {
            "examples": len(self.examples),
            "E_precision": self.e_precision,
            "E_recall": self.e_recall,
        }


def load_starter_table() -> PhraseTable:
    """The restaurant-domain starter phrase table shipped with the package."""
    import importlib.resources as resources

    ref = resources.files("templm").joinpath("data/e2e_phrase_table.json")
    with ref.open(encoding="utf-8") as fh:
        return PhraseTable.from_dict(json.load(fh))
