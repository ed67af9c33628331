"""Run configuration.

TrainConfig carries every knob a training run needs. Config files are plain
`key = value` lines (# comments allowed); values are coerced to the field's
type, unknown keys are rejected, and the full resolved config is echoed into
run reports so a run can be reproduced from its report alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .losses import VARIANTS, LossWeights

__all__ = ["TrainConfig", "DISTANCE_LOSSES", "parse_config_file"]

DISTANCE_LOSSES = ("symmetric-kl-means", "mmd-rbf")


@dataclass
class TrainConfig:
    variant: str = "DAS"
    distance_loss: str = "symmetric-kl-means"
    lambda1: float = 200.0
    lambda2: float = 1.0
    lambda3: float = 3.0
    alpha: float = 0.5
    learning_rate: float = 5e-4
    epochs: int = 30
    batch_size: int = 50
    seed: int = 0
    window: int = 3
    hidden: int = 300
    embedding_dim: int = 300
    dropout_rate: float = 0.5
    max_norm: float = 3.0
    vocab_size: int = 10000
    n_dev: int = 1000
    max_doc_len: int = 400
    balance_source: bool = True
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    l1_eps: float = 1e-6
    eval_batch: int = 256
    mmd_sigma: float | None = None  # None -> median heuristic per batch
    bootstrap_from_epoch1: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if self.distance_loss not in DISTANCE_LOSSES:
            raise ConfigError(f"unknown distance_loss {self.distance_loss!r}; expected one of {DISTANCE_LOSSES}")
        if self.variant == "MMD-baseline" and self.distance_loss != "mmd-rbf":
            raise ConfigError("variant MMD-baseline requires distance_loss = mmd-rbf")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (0.0 <= self.alpha < 1.0):
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("epochs", "batch_size", "hidden", "embedding_dim", "vocab_size",
                     "n_dev", "max_doc_len", "eval_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 1, got {self.window}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.max_norm <= 0:
            raise ConfigError("max_norm must be positive")
        if not (0.0 <= self.rmsprop_rho < 1.0):
            raise ConfigError("rmsprop_rho must be in [0, 1)")
        if self.rmsprop_eps <= 0 or self.l1_eps < 0:
            raise ConfigError("rmsprop_eps must be > 0 and l1_eps >= 0")
        if self.mmd_sigma is not None and self.mmd_sigma <= 0:
            raise ConfigError("mmd_sigma must be positive (or unset for the median heuristic)")

    def effective_weights(self) -> LossWeights:
        """Configured lambdas after the variant's zero-forcing."""
        return LossWeights.for_variant(self.variant, self.lambda1, self.lambda2, self.lambda3)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, mapping: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_strings(cls, mapping: dict[str, str]) -> "TrainConfig":
        """Build from raw string values (config files, CLI overrides)."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        coerced: dict = {}
        for key, raw in mapping.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            coerced[key] = _coerce(key, raw.strip())
        return cls(**coerced)


def _coerce(key: str, raw: str):
    int_fields = {"epochs", "batch_size", "seed", "window", "hidden", "embedding_dim",
                  "vocab_size", "n_dev", "max_doc_len", "eval_batch"}
    float_fields = {"lambda1", "lambda2", "lambda3", "alpha", "learning_rate",
                    "dropout_rate", "max_norm", "rmsprop_rho", "rmsprop_eps", "l1_eps"}
    bool_fields = {"balance_source", "bootstrap_from_epoch1"}
    try:
        if key in int_fields:
            return int(raw)
        if key in float_fields:
            return float(raw)
        if key in bool_fields:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if key == "mmd_sigma":
            return None if raw.lower() in ("", "none", "median") else float(raw)
    except ValueError as e:
        raise ConfigError(f"config key {key!r}: cannot parse value {raw!r}") from e
    return raw  # string fields: variant, distance_loss


def parse_config_file(path) -> dict[str, str]:
    """Read `key = value` lines; blank lines and # comments are skipped."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{p}: line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{p}: line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
