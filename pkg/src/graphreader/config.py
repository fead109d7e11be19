"""Run configuration: every hyperparameter and ablation switch in one place.

Configs serialize to/from a flat JSON object; unknown keys are rejected
and command-line overrides are type-checked against the field types.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

_VALID_BLOCK_KINDS = {"sub", "rea", "men", "sup", "can",
                      "subject", "reasoning", "mention", "support", "candidate"}


@dataclass
class RunConfig:
    seed: int = 0
    hidden_size: int = 64          # per-direction LSTM width; node width is 2x
    heads: int = 4                 # attention heads, must divide 2*hidden_size
    hops: int = 5                  # graph attention hops
    gamma: float = 1.0             # candidate-head weight in the output mix
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 4            # samples accumulated per optimizer step
    max_doc_tokens: int = 300
    max_query_tokens: int = 30
    node_cap: int = 500
    complete_edge_cap: int = 20000
    dropout: float = 0.1           # between hops, training only
    gat_off: bool = False          # skip message passing; score initial features
    blocked_node_kinds: list[str] = field(default_factory=list)
    trainable_embeddings: bool = False
    word_dim: int = 300
    char_dim: int = 100
    char_buckets: int = 32768
    embeddings_path: str | None = None
    eval_every: int = 1            # epochs between dev evaluations
    patience: int = 5              # dev evaluations without improvement before stopping
    neighbor_mean: bool = True     # keep the 1/|neighborhood| factor in aggregation

    def __post_init__(self):
        if self.hops < 1:
            raise ConfigError("hops must be >= 1")
        if self.hidden_size < 1 or (2 * self.hidden_size) % self.heads != 0:
            raise ConfigError("heads must divide 2*hidden_size")
        bad = set(self.blocked_node_kinds) - _VALID_BLOCK_KINDS
        if bad:
            raise ConfigError(f"unknown blocked node kinds: {sorted(bad)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        for name in ("epochs", "batch_size", "eval_every", "patience",
                     "max_doc_tokens", "max_query_tokens", "node_cap",
                     "complete_edge_cap", "word_dim", "char_dim", "char_buckets"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def node_width(self) -> int:
        return 2 * self.hidden_size

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def with_overrides(self, pairs) -> "RunConfig":
        """Apply "key=value" strings, coercing to the field's type."""
        obj = self.to_dict()
        types = {f.name: f.type for f in dataclasses.fields(self)}
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            key, value = pair.split("=", 1)
            if key not in types:
                raise ConfigError(f"unknown config key: {key!r}")
            obj[key] = _coerce(key, value, types[key])
        return RunConfig.from_dict(obj)


def _coerce(key: str, value: str, ftype: str):
    base = str(ftype)
    if "bool" in base:
        low = value.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot parse {value!r} as bool")
    if "list" in base:
        return [v.strip() for v in value.split(",") if v.strip()]
    if "int" in base:
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} as int") from exc
    if "float" in base:
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} as float") from exc
    if value.strip().lower() in ("none", "null"):
        return None
    return value


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a flat JSON object")
    return RunConfig.from_dict(obj)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
