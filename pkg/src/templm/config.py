"""Pipeline configuration: one file, documented keys, flag overrides win."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Mapping

from .core import ClusterPolicy
from .corpus import AugmentationConfig

DEFAULT_TOP_K = {"field_combination": 5, "field_value": 10}


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "ngram"  # "ngram" | "remote"
    order: int = 12
    discount: float = 0.4
    model: str | None = None  # persisted n-gram model path
    train: str | None = None  # corpus to train on when no model is given
    url: str | None = None  # remote bridge URL

    def __post_init__(self):
        if self.kind not in ("ngram", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.order < 1 or not 0.0 < self.discount < 1.0:
            raise ValueError("backend order must be >= 1 and discount in (0, 1)")

    @classmethod
    def from_dict(cls, data: Mapping) -> BackendConfig:
        return cls(
            kind=data.get("kind", "ngram"),
            order=int(data.get("order", 12)),
            discount=float(data.get("discount", 0.4)),
            model=data.get("model"),
            train=data.get("train"),
            url=data.get("url"),
        )

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "order": self.order, "discount": self.discount}
        for key in ("model", "train", "url"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class PipelineConfig:
    cluster_policy: str = "field_combination"
    cluster_field: str | None = None
    augmentation: AugmentationConfig = dc_field(default_factory=AugmentationConfig)
    recombination_target: int = 50
    top_k: int | None = None  # None -> policy default (5 / 10)
    refine_threshold: float = -2.0
    beam_k: int = 5
    max_len: int = 30
    cbs_max_len: int = 10
    seed: int = 13
    backend: BackendConfig = dc_field(default_factory=BackendConfig)

    def __post_init__(self):
        if self.recombination_target < 1:
            raise ValueError("recombination_target must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.refine_threshold >= 0:
            raise ValueError("refine_threshold must be negative")
        if min(self.beam_k, self.max_len, self.cbs_max_len) < 1:
            raise ValueError("beam_k, max_len and cbs_max_len must be positive")
        if self.cluster_policy == "field_value" and not self.cluster_field:
            raise ValueError("field_value clustering needs cluster_field")

    def effective_top_k(self) -> int:
        if self.top_k is not None:
            return self.top_k
        return DEFAULT_TOP_K[self.cluster_policy]

    def policy(self, exclude: set[str] | None = None) -> ClusterPolicy:
        return ClusterPolicy(
            kind=self.cluster_policy,
            field=self.cluster_field,
            exclude=frozenset(exclude or set()),
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> PipelineConfig:
        cluster = data.get("cluster", {})
        return cls(
            cluster_policy=cluster.get("policy", "field_combination"),
            cluster_field=cluster.get("field"),
            augmentation=AugmentationConfig.from_dict(data.get("augmentation", {})),
            recombination_target=int(data.get("recombination_target", 50)),
            top_k=data.get("top_k"),
            refine_threshold=float(data.get("refine_threshold", -2.0)),
            beam_k=int(data.get("beam_k", 5)),
            max_len=int(data.get("max_len", 30)),
            cbs_max_len=int(data.get("cbs_max_len", 10)),
            seed=int(data.get("seed", 13)),
            backend=BackendConfig.from_dict(data.get("backend", {})),
        )

    def to_dict(self) -> dict:
        cluster: dict = {"policy": self.cluster_policy}
        if self.cluster_field is not None:
            cluster["field"] = self.cluster_field
        return {
            "cluster": cluster,
            "augmentation": self.augmentation.to_dict(),
            "recombination_target": self.recombination_target,
            "top_k": self.top_k,
            "refine_threshold": self.refine_threshold,
            "beam_k": self.beam_k,
            "max_len": self.max_len,
            "cbs_max_len": self.cbs_max_len,
            "seed": self.seed,
            "backend": self.backend.to_dict(),
        }

    @classmethod
    def load(cls, path: str) -> PipelineConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
