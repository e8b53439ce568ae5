"""Pipeline configuration: one flat record of every tunable, JSON round-trippable.

Unknown keys are rejected rather than ignored so a typo in a config file
cannot silently fall back to a default. Every artifact the CLI writes embeds
the full snapshot via ``to_dict``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .chunking import ChunkingConfig
from .errors import UsageError
from .providers import ProviderConfig
from .retrieval import HierarchicalWeights, RetrievalConfig


@dataclass(frozen=True)
class PipelineConfig:
    theta1: float = 0.60
    theta2: float = 0.75
    max_chunk_chars: int = 1200
    max_chunk_sentences: int = 10
    k_seeds: int = 3
    iterations: int = 2
    branch: int = 2
    alpha: float = 1.0
    rng_seed: int = 0
    weights: HierarchicalWeights = field(default_factory=HierarchicalWeights)
    topk_themes: int = 2
    topk_abstracts: int = 3
    topk_chunks: int = 5
    max_themes: int = 6
    per_theme: int = 2
    paper_evidence_chars: int = 12000
    related_evidence_chars: int = 12000
    max_comment_chars: int | None = None
    paper_source_index: str | None = None
    prune: bool = True
    jobs: int = 1
    fake_dim: int = 64
    embedding_provider: ProviderConfig | None = None
    chat_provider: ProviderConfig | None = None

    def chunking(self) -> ChunkingConfig:
        return ChunkingConfig(
            theta1=self.theta1,
            max_chunk_chars=self.max_chunk_chars,
            max_chunk_sentences=self.max_chunk_sentences,
        )

    def retrieval(self, rng_seed: int | None = None) -> RetrievalConfig:
        return RetrievalConfig(
            k_seeds=self.k_seeds,
            iterations=self.iterations,
            branch=self.branch,
            alpha=self.alpha,
            rng_seed=self.rng_seed if rng_seed is None else rng_seed,
        )

    @property
    def topk(self) -> tuple[int, int, int]:
        return (self.topk_themes, self.topk_abstracts, self.topk_chunks)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        if not isinstance(payload, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values = dict(payload)
        if "weights" in values and values["weights"] is not None:
            values["weights"] = _nested(HierarchicalWeights, values["weights"], "weights")
        for key in ("embedding_provider", "chat_provider"):
            if values.get(key) is not None:
                values[key] = _nested(ProviderConfig, values[key], key)
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid config file {path}: {exc}") from exc
        return cls.from_dict(payload)


def _nested(cls, payload: dict, label: str):
    if not isinstance(payload, dict):
        raise UsageError(f"config section {label!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise UsageError(f"unknown config keys under {label!r}: {', '.join(unknown)}")
    return cls(**payload)
