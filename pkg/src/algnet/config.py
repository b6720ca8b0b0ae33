"""Training configuration and ablation variants."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path


class ConfigError(ValueError):
    pass


class Variant(str, Enum):
    ALGNET = "ALGNET"
    RNN_LGNET = "RNN_LGNET"
    LSTM_LGNET = "LSTM_LGNET"
    A_LGNET_NO_RNN = "A_LGNET_NO_RNN"
    A_LSTM_LGNET = "A_LSTM_LGNET"
    RNN_GCN = "RNN_GCN"
    LSTM_GCN = "LSTM_GCN"
    A_GCN = "A_GCN"
    A_LSTM_GCN = "A_LSTM_GCN"
    A_RNN_GCN = "A_RNN_GCN"

    @property
    def sequence(self) -> str | None:
        """'gru', 'lstm' or None."""
        return _LAYOUT[self][0]

    @property
    def attention(self) -> bool:
        return _LAYOUT[self][1]

    @property
    def graph(self) -> str:
        """'lgc' or 'gcn'."""
        return _LAYOUT[self][2]

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, name: str) -> Variant:
        key = name.strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown variant {name!r}; choose from {[v.value for v in cls]}") from None


_LAYOUT = {
    Variant.ALGNET: ("gru", True, "lgc"),
    Variant.RNN_LGNET: ("gru", False, "lgc"),
    Variant.LSTM_LGNET: ("lstm", False, "lgc"),
    Variant.A_LGNET_NO_RNN: (None, True, "lgc"),
    Variant.A_LSTM_LGNET: ("lstm", True, "lgc"),
    Variant.RNN_GCN: ("gru", False, "gcn"),
    Variant.LSTM_GCN: ("lstm", False, "gcn"),
    Variant.A_GCN: (None, True, "gcn"),
    Variant.A_LSTM_GCN: ("lstm", True, "gcn"),
    Variant.A_RNN_GCN: ("gru", True, "gcn"),
}

_LABELS = {
    Variant.ALGNET: "ALGNet",
    Variant.RNN_LGNET: "RNN-LGNet",
    Variant.LSTM_LGNET: "LSTM-LGNet",
    Variant.A_LGNET_NO_RNN: "A-LGNet^-RNN",
    Variant.A_LSTM_LGNET: "A-LSTM-LGNet",
    Variant.RNN_GCN: "RNN-GCN (GAMENet)",
    Variant.LSTM_GCN: "LSTM-GCN",
    Variant.A_GCN: "A-GCN",
    Variant.A_LSTM_GCN: "A-LSTM-GCN",
    Variant.A_RNN_GCN: "A-RNN-GCN",
}


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 64
    heads: int = 8
    lgc_layers: int = 2
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 1.0
    theta0: float = 0.95
    theta1: float = 0.05
    w_ddi: float = 0.0
    lr: float = 2e-4
    epochs: int = 60
    seed: int = 0
    split: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)
    threshold: float = 0.5
    variant: str = "ALGNET"
    include_layer0: bool = False
    pooling: str = "last"
    step_per: str = "patient"
    history_source: str = "truth"
    bootstrap_rounds: int = 10

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(x) for x in self.split))
        object.__setattr__(self, "variant", Variant.parse(self.variant).value)
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.dim < 1 or self.heads < 1 or self.lgc_layers < 1:
            raise ConfigError("dim, heads and lgc_layers must be positive")
        if self.theta0 < 0 or self.theta1 < 0 or abs(self.theta0 + self.theta1 - 1.0) > 1e-9:
            raise ConfigError(f"theta0 + theta1 must equal 1 (got {self.theta0} + {self.theta1})")
        if self.w_ddi < 0:
            raise ConfigError("w_ddi must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError(f"split must be three positive ratios summing to 1, got {self.split}")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.pooling not in ("last", "mean"):
            raise ConfigError(f"pooling must be 'last' or 'mean', got {self.pooling!r}")
        if self.step_per not in ("patient", "visit"):
            raise ConfigError(f"step_per must be 'patient' or 'visit', got {self.step_per!r}")
        if self.history_source not in ("truth", "prediction"):
            raise ConfigError(f"history_source must be 'truth' or 'prediction', got {self.history_source!r}")
        if self.bootstrap_rounds < 0:
            raise ConfigError("bootstrap_rounds must be >= 0")

    @property
    def model_dim(self) -> int:
        return self.dim * self.heads

    @property
    def variant_enum(self) -> Variant:
        return Variant(self.variant)

    def to_json(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> TrainConfig:
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_json(obj)

    def updated(self, **overrides) -> TrainConfig:
        overrides = {k: v for k, v in overrides.items() if v is not None}
        try:
            return replace(self, **overrides)
        except TypeError as e:
            raise ConfigError(str(e)) from None
