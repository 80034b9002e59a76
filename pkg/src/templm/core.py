"""Shared data model: inputs, templates, cluster keys, filled outputs.

All values here are immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field as dc_field, replace
from typing import Iterable, Mapping, Sequence

from .errors import IndexOutOfRange, MissingField

TERMINAL = "terminal"
NONTERMINAL = "nonterminal"

STATUS_CANDIDATE = "candidate"
STATUS_VALIDATED = "validated"
STATUS_REFINED = "refined"
STATUS_APPROVED = "approved"
STATUS_REJECTED = "rejected"

TEMPLATE_STATUSES = (
    STATUS_CANDIDATE,
    STATUS_VALIDATED,
    STATUS_REFINED,
    STATUS_APPROVED,
    STATUS_REJECTED,
)

# Statuses realize() may draw from: everything human-approved or machine-vetted.
USABLE_STATUSES = frozenset({STATUS_VALIDATED, STATUS_REFINED, STATUS_APPROVED})


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace tokenization of already space-separated text."""
    return tuple(text.split())


@dataclass(frozen=True)
class DataInput:
    """One input: field names mapped to ordered lists of candidate values."""

    entries: Mapping[str, tuple[str, ...]]
    id: str = ""

    def __post_init__(self):
        frozen = {}
        for name, values in self.entries.items():
            if not name:
                raise ValueError("field names must be non-empty")
            vals = tuple(values)
            if not vals or any(not v.strip() for v in vals):
                raise ValueError(f"field {name!r} needs at least one non-empty value")
            frozen[name] = vals
        object.__setattr__(self, "entries", frozen)

    def fields(self) -> frozenset[str]:
        return frozenset(self.entries)

    def values_for(self, field_name: str) -> tuple[str, ...]:
        try:
            return self.entries[field_name]
        except KeyError:
            raise MissingField(field_name) from None

    def with_entries(self, extra: Mapping[str, Sequence[str]]) -> DataInput:
        merged = dict(self.entries)
        merged.update({k: tuple(v) for k, v in extra.items()})
        return DataInput(entries=merged, id=self.id)


@dataclass(frozen=True)
class TemplateToken:
    """Either a literal word (terminal) or a field slot (nonterminal)."""

    kind: str
    text: str

    @staticmethod
    def terminal(word: str) -> TemplateToken:
        return TemplateToken(TERMINAL, word)

    @staticmethod
    def nonterminal(field_name: str) -> TemplateToken:
        return TemplateToken(NONTERMINAL, field_name)

    @property
    def is_terminal(self) -> bool:
        return self.kind == TERMINAL

    @property
    def is_nonterminal(self) -> bool:
        return self.kind == NONTERMINAL

    def surface(self) -> str:
        """File/display form: nonterminals as [field], `[` escaped as `[[`."""
        if self.is_nonterminal:
            return f"[{self.text}]"
        return self.text.replace("[", "[[")


@dataclass(frozen=True)
class ClusterKey:
    """Canonical cluster identity: a field combination or one field's value."""

    kind: str  # "fields" | "field_value"
    parts: tuple[str, ...]

    @staticmethod
    def from_fields(fields: Iterable[str]) -> ClusterKey:
        return ClusterKey("fields", tuple(sorted(set(fields))))

    @staticmethod
    def from_field_value(field_name: str, value: str | None) -> ClusterKey:
        if value is None:
            return ClusterKey("field_value", (field_name, "∅"))
        return ClusterKey("field_value", (field_name, value))

    def canonical(self) -> str:
        if self.kind == "fields":
            return "|".join(self.parts) if self.parts else "∅"
        return f"{self.parts[0]}={self.parts[1]}"

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class Template:
    """A sequence of terminals and field slots, plus provenance."""

    tokens: tuple[TemplateToken, ...]
    source_id: str = ""
    cluster: ClusterKey | None = None
    status: str = STATUS_CANDIDATE

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("a template needs at least one token")
        if self.status not in TEMPLATE_STATUSES:
            raise ValueError(f"unknown template status {self.status!r}")

    def surface(self) -> str:
        return " ".join(tok.surface() for tok in self.tokens)

    @property
    def id(self) -> str:
        """Stable content-derived identifier (used for review and tie-breaks)."""
        cluster = self.cluster.canonical() if self.cluster else ""
        digest = hashlib.sha1(f"{cluster}\x00{self.surface()}".encode("utf-8"))
        return "t" + digest.hexdigest()[:12]

    def with_status(self, status: str) -> Template:
        return replace(self, status=status)


_SURFACE_TOKEN = re.compile(r"\[\[|\[([^\[\]\s]+)\]")


def parse_template_tokens(surface: str) -> tuple[TemplateToken, ...]:
    """Inverse of Template.surface() for whitespace-separated token strings."""
    out = []
    for raw in surface.split():
        m = _SURFACE_TOKEN.fullmatch(raw)
        if m and m.group(1):
            out.append(TemplateToken.nonterminal(m.group(1)))
        else:
            out.append(TemplateToken.terminal(raw.replace("[[", "[")))
    return tuple(out)


@dataclass(frozen=True)
class FilledOutput:
    """A template fill: output tokens plus per-template-token alignment spans."""

    text_tokens: tuple[str, ...]
    alignment: tuple[tuple[int, int], ...]  # per template token: [start, end)
    template_ref: str = ""
    data_ref: str = ""

    @property
    def text(self) -> str:
        return " ".join(self.text_tokens)

    def span_tokens(self, j: int) -> tuple[str, ...]:
        start, end = self.alignment[j]
        return self.text_tokens[start:end]


@dataclass(frozen=True)
class ClusterPolicy:
    """How inputs map to clusters; `exclude` lists augmentation-only fields."""

    kind: str = "field_combination"  # or "field_value"
    field: str | None = None
    exclude: frozenset[str] = dc_field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in ("field_combination", "field_value"):
            raise ValueError(f"unknown cluster policy {self.kind!r}")
        if self.kind == "field_value" and not self.field:
            raise ValueError("field_value policy needs a field name")
        object.__setattr__(self, "exclude", frozenset(self.exclude))


def fields_of(t: Template) -> frozenset[str]:
    """The set of field names a template's nonterminals reference."""
    return frozenset(tok.text for tok in t.tokens if tok.is_nonterminal)


def cluster_key(d: DataInput, policy: ClusterPolicy) -> ClusterKey:
    """Deterministic canonical cluster key for an input under a policy."""
    if policy.kind == "field_combination":
        return ClusterKey.from_fields(f for f in d.fields() if f not in policy.exclude)
    values = d.entries.get(policy.field or "")
    return ClusterKey.from_field_value(policy.field or "", values[0] if values else None)


def fill(
    t: Template,
    d: DataInput,
    choice: Mapping[int, int] | None = None,
) -> FilledOutput:
    """Substitute every nonterminal with a chosen value of its field.

    `choice` maps a template token index to an index into that field's value
    list; omitted occurrences take value 0. Terminals are copied verbatim and
    every template token records the contiguous output span it produced.
    """
    choice = choice or {}
    out_tokens: list[str] = []
    alignment: list[tuple[int, int]] = []
    for j, tok in enumerate(t.tokens):
        start = len(out_tokens)
        if tok.is_terminal:
            out_tokens.append(tok.text)
        else:
            values = d.values_for(tok.text)
            idx = choice.get(j, 0)
            if not 0 <= idx < len(values):
                raise IndexOutOfRange(
                    f"value index {idx} out of range for field {tok.text!r} "
                    f"({len(values)} values)"
                )
            out_tokens.extend(tokenize(values[idx]))
        alignment.append((start, len(out_tokens)))
    return FilledOutput(
        text_tokens=tuple(out_tokens),
        alignment=tuple(alignment),
        template_ref=t.id,
        data_ref=d.id,
    )
