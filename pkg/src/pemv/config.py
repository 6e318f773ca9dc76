"""Run configuration: dataclasses, the flat ``section.key=value`` text format,
override handling, the ablation ladder, and config hashing.

The ablation level (AB1..AB5) is an input-level convenience: parsing it sets
the four component toggles (MVFE, PBC, IP, Lf). The materialized config text
contains only concrete fields, so two levels that differ in a single toggle
hash apart by exactly that line.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError

# Cumulative component ladder: level -> (enable_mvfe, enable_pbc, enable_ip, enable_lf)
ABLATION_LEVELS = {
    "AB1": (False, False, False, False),
    "AB2": (True, False, False, False),
    "AB3": (True, True, False, False),
    "AB4": (True, True, True, False),
    "AB5": (True, True, True, True),
}


@dataclass
class ModelConfig:
    """Architecture hyperparameters for the multi-view network."""

    num_views: int = 3
    d_g: int = 256
    d_v: int = 128
    gamma_align: float = 0.5
    gamma_contrast: float = 0.1
    prototype_momentum: float = 0.9
    num_classes: int = 2
    enable_mvfe: bool = True
    enable_pbc: bool = True

    @property
    def d_mediator(self) -> int:
        return self.num_views * self.d_v

    def validate(self):
        if self.num_views < 1:
            raise ConfigError(f"num_views must be >= 1, got {self.num_views}")
        if self.d_g < 1 or self.d_v < 1:
            raise ConfigError(f"d_g and d_v must be positive, got d_g={self.d_g}, d_v={self.d_v}")
        for name in ("gamma_align", "gamma_contrast", "prototype_momentum"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.num_classes != 2:
            raise ConfigError(f"num_classes must be 2, got {self.num_classes}")
        if self.enable_pbc and not self.enable_mvfe:
            raise ConfigError("enable_pbc requires enable_mvfe (no mediator to correct)")


@dataclass
class LossConfig:
    """Weights and toggles for the joint objective."""

    lambda_f: float = 0.5
    mu_ip: float = 0.1
    enable_lf: bool = True
    enable_ip: bool = True

    def validate(self):
        for name in ("lambda_f", "mu_ip"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be a finite non-negative real, got {v}")


@dataclass
class DataConfig:
    """Dataset location, preprocessing constants, and augmentation knobs."""

    dataset: str = "tn3k"
    root: str = ""
    split_dir: str = ""
    augment: bool = True
    norm_mean: float = 0.5
    norm_std: float = 0.25
    hflip_prob: float = 0.5
    rotate_degrees: float = 10.0
    jitter: float = 0.1
    num_workers: int = 0

    def validate(self):
        if self.norm_std <= 0:
            raise ConfigError(f"norm_std must be positive, got {self.norm_std}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        if self.num_workers < 0:
            raise ConfigError(f"num_workers must be >= 0, got {self.num_workers}")


@dataclass
class TrainConfig:
    """Optimizer and schedule settings."""

    optimizer: str = "adamw"
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 100
    weight_decay: float = 1e-4
    device: str = "auto"
    stop_at_train_loss: float = 0.0  # 0 disables early stopping

    def validate(self):
        if self.optimizer != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}; only 'adamw' is available")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.stop_at_train_loss < 0:
            raise ConfigError(f"stop_at_train_loss must be >= 0, got {self.stop_at_train_loss}")


@dataclass
class ExperimentConfig:
    """Everything a run needs, fully materialized."""

    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out_dir: str = "runs"

    def validate(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        self.data.validate()
        self.model.validate()
        self.loss.validate()
        self.train.validate()

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


def with_ablation(cfg: ExperimentConfig, level: str) -> ExperimentConfig:
    """Return a copy of ``cfg`` with component toggles set per the ladder."""
    if level not in ABLATION_LEVELS:
        raise ConfigError(f"unknown ablation level {level!r}; expected one of {sorted(ABLATION_LEVELS)}")
    mvfe, pbc, ip, lf = ABLATION_LEVELS[level]
    return cfg.replace(
        model=dataclasses.replace(cfg.model, enable_mvfe=mvfe, enable_pbc=pbc),
        loss=dataclasses.replace(cfg.loss, enable_ip=ip, enable_lf=lf),
    )


# --- flat text format -------------------------------------------------------

_SECTIONS = {"data": DataConfig, "model": ModelConfig, "loss": LossConfig, "train": TrainConfig}

# Component toggles are driven by the ablation ladder, never set directly.
_HIDDEN_KEYS = {"model.enable_mvfe", "model.enable_pbc", "loss.enable_lf", "loss.enable_ip"}


def _registry() -> dict[str, type]:
    """All settable dotted keys mapped to their python type."""
    reg: dict[str, type] = {}
    for section, cls in _SECTIONS.items():
        defaults = cls()
        for f in fields(cls):
            key = f"{section}.{f.name}"
            if key not in _HIDDEN_KEYS:
                reg[key] = type(getattr(defaults, f.name))
    reg["seeds"] = list
    reg["out_dir"] = str
    reg["ablation"] = str
    return reg


VALID_KEYS = sorted(_registry())


def _parse_value(key: str, raw: str, typ: type):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is list:  # seeds
            return [int(tok) for tok in raw.split(",") if tok.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {typ.__name__}") from None


def parse_config_text(text: str) -> dict[str, object]:
    """Parse flat key=value lines into a {dotted_key: value} mapping."""
    reg = _registry()
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in reg:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}; valid keys: {', '.join(VALID_KEYS)}")
        out[key] = _parse_value(key, raw, reg[key])
    return out


def apply_overrides(mapping: dict[str, object], overrides: list[str]) -> dict[str, object]:
    """Apply repeatable ``--set key=value`` overrides on top of file values."""
    reg = _registry()
    merged = dict(mapping)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in reg:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(VALID_KEYS)}")
        merged[key] = _parse_value(key, raw, reg[key])
    return merged


def build_config(mapping: dict[str, object]) -> ExperimentConfig:
    """Materialize an ExperimentConfig from a parsed mapping and validate it."""
    cfg = ExperimentConfig()
    sections = {name: cls() for name, cls in _SECTIONS.items()}
    ablation = None
    for key, value in mapping.items():
        if key == "seeds":
            cfg.seeds = list(value)
        elif key == "out_dir":
            cfg.out_dir = str(value)
        elif key == "ablation":
            ablation = str(value)
        else:
            section, _, name = key.partition(".")
            setattr(sections[section], name, value)
    cfg = cfg.replace(
        data=sections["data"], model=sections["model"], loss=sections["loss"], train=sections["train"]
    )
    if ablation is not None:
        cfg = with_ablation(cfg, ablation)
    cfg.validate()
    return cfg


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        mapping = parse_config_text(fh.read())
    if overrides:
        mapping = apply_overrides(mapping, overrides)
    return build_config(mapping)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize every concrete field (toggles included) in sorted key order."""
    lines = []
    for section, sub in (("data", cfg.data), ("model", cfg.model), ("loss", cfg.loss), ("train", cfg.train)):
        for f in fields(sub):
            lines.append(f"{section}.{f.name}={getattr(sub, f.name)}")
    lines.append("out_dir=" + cfg.out_dir)
    lines.append("seeds=" + ",".join(str(s) for s in cfg.seeds))
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()


def model_config_hash(model_cfg: ModelConfig) -> str:
    text = "\n".join(f"{f.name}={getattr(model_cfg, f.name)}" for f in fields(ModelConfig))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
