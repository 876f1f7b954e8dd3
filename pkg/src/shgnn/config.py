from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Model and optimisation settings; ``config.json`` uses these field names."""

    d1: int = 64
    learning_rate: float = 0.005
    epochs: int = 200
    layers: int = 1
    seed: int = 0
    patience: int = 30
    weight_decay: float = 0.0
    use_centrality_c: bool = True
    use_centrality_cplus: bool = True
    use_tree_attention: bool = True
    tree_sigma: bool = False
    metapaths: list = field(default_factory=list)  # empty -> B-X-B for each neighbor type X
    centrality_bucketing: str = "clamp"
    instance_cap: int | None = None

    def __post_init__(self):
        if self.d1 < 1:
            raise ConfigError("d1 must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.centrality_bucketing not in ("clamp", "log"):
            raise ConfigError("centrality_bucketing must be 'clamp' or 'log'")
        if self.instance_cap is not None and self.instance_cap < 1:
            raise ConfigError("instance_cap must be positive or null")
        self.metapaths = [p if isinstance(p, str) else "-".join(p) for p in self.metapaths]

    @property
    def use_centrality(self):
        return self.use_centrality_c or self.use_centrality_cplus

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return TrainConfig.from_dict(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()
