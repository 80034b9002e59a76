"""The deployable artifact: clustered templates with status and provenance.

Persists to a single JSON file that round-trips losslessly and emits
byte-identical bytes for identical content (sorted clusters, stable key
order), which is what makes pipeline runs reproducible.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field as dc_field
from typing import Iterable

from .core import (
    ClusterKey,
    ClusterPolicy,
    Template,
    USABLE_STATUSES,
    parse_template_tokens,
)

TEMPLATESET_FORMAT = "templm-templates"
TEMPLATESET_VERSION = 1


@dataclass
class TemplateSet:
    policy: ClusterPolicy
    clusters: dict[ClusterKey, list[Template]] = dc_field(default_factory=dict)
    config: dict = dc_field(default_factory=dict)
    scores: dict[str, dict[str, float]] = dc_field(default_factory=dict)
    notes: dict[str, str] = dc_field(default_factory=dict)

    def add(self, templates: Iterable[Template]) -> None:
        for t in templates:
            if t.cluster is None:
                raise ValueError(f"template {t.id} has no cluster key")
            self.clusters.setdefault(t.cluster, []).append(t)

    def cluster_keys(self) -> list[ClusterKey]:
        return sorted(self.clusters, key=lambda k: k.canonical())

    def all_templates(self) -> list[Template]:
        return [t for key in self.cluster_keys() for t in self.clusters[key]]

    def usable_templates(self, key: ClusterKey) -> list[Template]:
        return [t for t in self.clusters.get(key, []) if t.status in USABLE_STATUSES]

    def template_count(self) -> int:
        return sum(len(ts) for ts in self.clusters.values())

    def set_status(self, template_id: str, status: str, note: str | None = None) -> bool:
        """Update one template's review status; returns False if id unknown."""
        for key, templates in self.clusters.items():
            for i, t in enumerate(templates):
                if t.id == template_id:
                    templates[i] = t.with_status(status)
                    if note:
                        self.notes[template_id] = note
                    return True
        return False

    # -- persistence --------------------------------------------------------

    def to_payload(self) -> dict:
        clusters = []
        for key in self.cluster_keys():
            rows = []
            for t in self.clusters[key]:
                row: dict = {
                    "id": t.id,
                    "tokens": t.surface(),
                    "status": t.status,
                    "source_id": t.source_id,
                }
                if t.id in self.scores:
                    row["scores"] = self.scores[t.id]
                if t.id in self.notes:
                    row["note"] = self.notes[t.id]
                rows.append(row)
            clusters.append(
                {"key": {"kind": key.kind, "parts": list(key.parts)}, "templates": rows}
            )
        policy: dict = {"kind": self.policy.kind, "exclude": sorted(self.policy.exclude)}
        if self.policy.field is not None:
            policy["field"] = self.policy.field
        return {
            "format": TEMPLATESET_FORMAT,
            "version": TEMPLATESET_VERSION,
            "policy": policy,
            "config": self.config,
            "clusters": clusters,
        }

    def save(self, path: str) -> None:
        payload = self.to_payload()
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, indent=1)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def from_payload(cls, payload: dict) -> TemplateSet:
        if payload.get("format") != TEMPLATESET_FORMAT:
            raise ValueError(f"not a {TEMPLATESET_FORMAT} payload")
        p = payload["policy"]
        policy = ClusterPolicy(
            kind=p["kind"],
            field=p.get("field"),
            exclude=frozenset(p.get("exclude", [])),
        )
        ts = cls(policy=policy, config=payload.get("config", {}))
        for entry in payload["clusters"]:
            key = ClusterKey(entry["key"]["kind"], tuple(entry["key"]["parts"]))
            for row in entry["templates"]:
                t = Template(
                    tokens=parse_template_tokens(row["tokens"]),
                    source_id=row.get("source_id", ""),
                    cluster=key,
                    status=row.get("status", "candidate"),
                )
                ts.clusters.setdefault(key, []).append(t)
                if "scores" in row:
                    ts.scores[t.id] = dict(row["scores"])
                if "note" in row:
                    ts.notes[t.id] = row["note"]
        return ts

    @classmethod
    def load(cls, path: str) -> TemplateSet:
        with open(path, encoding="utf-8") as fh:
            return cls.from_payload(json.load(fh))
