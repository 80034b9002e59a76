"""Corpus loading, text normalization, and input augmentation.

Corpus files are JSON lines: {"id": ..., "data": {field: [values...]},
"text": "..."} with text optional. Text is normalized so sentence
punctuation stands alone as tokens; values are left byte-exact.

Augmentation adds template-friendly fields to every input at load time:
constant multi-value fields (articles, forms of "be", small numbers),
gender-resolved pronoun/relation fields, per-value replacements for binary
fields, and day/month/year sub-fields for date-valued fields. Augmented
field names are reported so clustering can ignore them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Mapping

from .core import DataInput
from .errors import CorpusFormatError

_PUNCT = re.compile(r"\s*([.,!?;:])\s*")

MONTHS = [
    "january", "february", "march", "april", "may", "june",
    "july", "august", "september", "october", "november", "december",
]

PRONOUN_TABLE = {
    "male": {"pronoun_a": "he", "pronoun_b": "him", "pronoun_c": "his", "relation": "son"},
    "female": {"pronoun_a": "she", "pronoun_b": "her", "pronoun_c": "her", "relation": "daughter"},
    "other": {"pronoun_a": "they", "pronoun_b": "them", "pronoun_c": "their", "relation": "child"},
}


def normalize_text(text: str) -> str:
    """Space-separate sentence punctuation, collapse runs of whitespace."""
    return " ".join(_PUNCT.sub(r" \1 ", text).split())


@dataclass(frozen=True)
class AugmentationConfig:
    constant_fields: Mapping[str, tuple[str, ...]] = dc_field(default_factory=dict)
    replacements: Mapping[str, Mapping[str, tuple[str, ...]]] = dc_field(default_factory=dict)
    pronouns: bool = False
    dates: bool = False

    def __post_init__(self):
        object.__setattr__(
            self,
            "constant_fields",
            {k: tuple(v) for k, v in self.constant_fields.items()},
        )
        object.__setattr__(
            self,
            "replacements",
            {
                f: {value: tuple(alts) for value, alts in repl.items()}
                for f, repl in self.replacements.items()
            },
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> AugmentationConfig:
        return cls(
            constant_fields=data.get("constant", {}),
            replacements=data.get("replacements", {}),
            pronouns=bool(data.get("pronouns", False)),
            dates=bool(data.get("dates", False)),
        )

    def to_dict(self) -> dict:
        return {
            "constant": {k: list(v) for k, v in sorted(self.constant_fields.items())},
            "replacements": {
                f: {value: list(alts) for value, alts in sorted(repl.items())}
                for f, repl in sorted(self.replacements.items())
            },
            "pronouns": self.pronouns,
            "dates": self.dates,
        }


@dataclass(frozen=True)
class CorpusRecord:
    data: DataInput
    text: str | None = None

    @property
    def id(self) -> str:
        return self.data.id


def _parse_date(value: str) -> tuple[str, str, str] | None:
    """Recognize '15 August 1947', 'August 15, 1947', '1947-08-15'."""
    toks = value.replace(",", " ").split()
    if len(toks) == 3:
        day, month, year = None, None, None
        for tok in toks:
            low = tok.lower()
            if low in MONTHS:
                month = tok
            elif tok.isdigit() and len(tok) == 4:
                year = tok
            elif tok.isdigit():
                day = tok
        if day and month and year:
            return day, month, year
    m = re.fullmatch(r"(\d{4})-(\d{2})-(\d{2})", value.strip())
    if m:
        year, month_num, day = m.groups()
        month = MONTHS[int(month_num) - 1].capitalize()
        return str(int(day)), month, year
    return None


def augment_input(
    d: DataInput, config: AugmentationConfig
) -> tuple[DataInput, set[str]]:
    """Apply augmentation; returns the new input plus the added field names."""
    entries: dict[str, tuple[str, ...]] = dict(d.entries)
    added: set[str] = set()
    for field_name, repl in config.replacements.items():
        if field_name in entries:
            new_values: list[str] = []
            for value in entries[field_name]:
                alts = repl.get(value)
                new_values.extend(alts if alts else (value,))
            entries[field_name] = tuple(new_values)
    for field_name, values in config.constant_fields.items():
        if field_name not in entries:
            entries[field_name] = values
            added.add(field_name)
    if config.pronouns and "gender" in entries:
        gender = entries["gender"][0].lower()
        row = PRONOUN_TABLE.get(gender, PRONOUN_TABLE["other"])
        for field_name, value in row.items():
            if field_name not in entries:
                entries[field_name] = (value,)
                added.add(field_name)
    if config.dates:
        for field_name in sorted(d.entries):
            parsed = [_parse_date(v) for v in d.entries[field_name]]
            if all(parsed):
                for idx, part in enumerate(("day", "month", "year")):
                    sub = f"{field_name}_{part}"
                    if sub not in entries:
                        entries[sub] = tuple(p[idx] for p in parsed)  # type: ignore[index]
                        added.add(sub)
    return DataInput(entries=entries, id=d.id), added


def load_corpus(
    path: str, augmentation: AugmentationConfig | None = None
) -> tuple[list[CorpusRecord], set[str]]:
    """Read a JSONL corpus; returns records plus all augmentation-added fields."""
    records: list[CorpusRecord] = []
    added: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict) or "data" not in row:
                raise CorpusFormatError(line_no, "expected an object with a 'data' key")
            raw = row["data"]
            if not isinstance(raw, dict) or not raw:
                raise CorpusFormatError(line_no, "'data' must be a non-empty object")
            try:
                entries = {
                    f: tuple(v) if isinstance(v, list) else (str(v),)
                    for f, v in raw.items()
                }
                d = DataInput(entries=entries, id=str(row.get("id", f"line{line_no}")))
            except (TypeError, ValueError) as exc:
                raise CorpusFormatError(line_no, str(exc)) from exc
            if augmentation is not None:
                d, new_fields = augment_input(d, augmentation)
                added |= new_fields
            text = row.get("text")
            if text is not None:
                text = normalize_text(str(text))
            records.append(CorpusRecord(data=d, text=text))
    return records, added


def write_corpus(path: str, records: Iterable[CorpusRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row: dict = {"id": rec.id, "data": {f: list(v) for f, v in rec.data.entries.items()}}
            if rec.text is not None:
                row["text"] = rec.text
            fh.write(json.dumps(row, sort_keys=True) + "\n")
