"""Run configuration: model architecture, training hyperparameters, paths."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration. `field_path` names the offending field."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass
class ModelConfig:
    """Architecture ledger. Dimensions follow the usual decoder-only naming."""

    n_layers: int = 4            # L
    d_model: int = 64            # D
    n_heads: int = 4             # H
    d_ff: int = 256
    vocab_size: int = 257        # V
    t_max: int = 128             # max sequence length
    n_max: int = 3               # max loop iterations per layer
    m_local: int = 32            # local memory slots per layer
    m_global: int = 16           # shared global memory slots
    alpha_init: float = -7.0     # loop-scale init (softplus(-7) ~ 9.1e-4)
    gate_bias_init: float = -3.0
    ponder_lambda: float = 0.0
    loops_enabled: bool = True
    memory_enabled: bool = True
    ln_eps: float = 1e-5

    def validate(self, prefix: str = "model") -> None:
        if self.n_layers < 1:
            raise ConfigError(f"{prefix}.n_layers", "must be >= 1")
        if self.d_model < 1:
            raise ConfigError(f"{prefix}.d_model", "must be >= 1")
        if self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError(f"{prefix}.n_heads",
                              f"d_model={self.d_model} must be divisible by n_heads={self.n_heads}")
        if self.vocab_size < 1:
            raise ConfigError(f"{prefix}.vocab_size", "must be >= 1")
        if self.t_max < 1:
            raise ConfigError(f"{prefix}.t_max", "must be >= 1")
        if self.n_max < 1:
            raise ConfigError(f"{prefix}.n_max", "must be >= 1")
        if self.m_local < 0 or self.m_global < 0:
            raise ConfigError(f"{prefix}.m_local", "slot counts must be >= 0")
        if self.memory_enabled and self.m_local + self.m_global == 0:
            raise ConfigError(f"{prefix}.memory_enabled",
                              "memory enabled but m_local + m_global == 0")
        if self.ponder_lambda < 0:
            raise ConfigError(f"{prefix}.ponder_lambda", "must be >= 0")
        if self.ln_eps <= 0:
            raise ConfigError(f"{prefix}.ln_eps", "must be > 0")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def local_enabled(self) -> bool:
        return self.memory_enabled and self.m_local > 0

    @property
    def global_enabled(self) -> bool:
        return self.memory_enabled and self.m_global > 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "model") -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        cfg = cls(**d)
        cfg.validate(prefix)
        return cfg


@dataclass
class TrainConfig:
    total_steps: int = 1000
    warmup_steps: int | None = None      # default: 1% of total, at least 1
    peak_lr: float = 3.0e-3
    min_lr: float | None = None          # default: 0.1 * peak_lr
    batch_size: int = 16                 # B
    seq_len: int = 128                   # T
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    grad_clip: float = 1.0
    adam_eps: float = 1e-8
    seed: int = 0
    eval_interval: int = 100

    def resolved_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, round(0.01 * self.total_steps))

    def resolved_min_lr(self) -> float:
        if self.min_lr is not None:
            return self.min_lr
        return 0.1 * self.peak_lr

    @property
    def batch_tokens(self) -> int:
        return self.batch_size * self.seq_len

    def validate(self, prefix: str = "train") -> None:
        if self.total_steps < 1:
            raise ConfigError(f"{prefix}.total_steps", "must be >= 1")
        if not 0 <= self.resolved_warmup() < self.total_steps:
            raise ConfigError(f"{prefix}.warmup_steps",
                              f"must satisfy 0 <= warmup < total_steps={self.total_steps}")
        if not self.peak_lr > self.resolved_min_lr() >= 0:
            raise ConfigError(f"{prefix}.peak_lr", "need peak_lr > min_lr >= 0")
        if self.batch_size < 1 or self.seq_len < 1:
            raise ConfigError(f"{prefix}.batch_size", "batch_size and seq_len must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"{prefix}.beta1", "betas must lie in [0, 1)")
        if self.grad_clip <= 0:
            raise ConfigError(f"{prefix}.grad_clip", "must be > 0")
        if self.eval_interval < 1:
            raise ConfigError(f"{prefix}.eval_interval", "must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "train") -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        tc = cls(**d)
        tc.validate(prefix)
        return tc


@dataclass
class RunConfig:
    """Top-level config consumed by the CLI: model + train + I/O paths."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_paths: list[str] = field(default_factory=list)
    val_fraction: float = 0.1
    eval_set_path: str | None = None
    out_dir: str = "runs/out"
    telemetry_interval: int | None = None  # default: train.eval_interval

    def resolved_telemetry_interval(self) -> int:
        return self.telemetry_interval or self.train.eval_interval

    def validate(self, check_paths: bool = True) -> None:
        self.model.validate("model")
        self.train.validate("train")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction", "must lie in [0, 1)")
        if check_paths:
            for i, p in enumerate(self.data_paths):
                if not Path(p).exists():
                    raise ConfigError(f"data_paths[{i}]", f"file not found: {p}")
            if self.eval_set_path is not None and not Path(self.eval_set_path).exists():
                raise ConfigError("eval_set_path", f"file not found: {self.eval_set_path}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        model = ModelConfig.from_dict(d.pop("model", {}))
        train = TrainConfig.from_dict(d.pop("train", {}))
        return cls(model=model, train=train, **d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
