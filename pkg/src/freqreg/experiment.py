"""Experiment configuration: a tree of frozen dataclasses loaded from JSON.

JSON files map one-to-one onto the tree. Dotted overrides
(`freq.kernel_size=7`) replace single keys and are coerced to the type of
the key's default. Unknown keys raise ConfigError. `resolved()` returns
the full tree with every default filled in plus a `config_hash`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from . import io
from .config import get_output_dir, join
from .errors import ConfigError
from .frequency import FrequencyConfig
from .models import ModelConfig
from .models.base import InputSpec
from .models.training import TrainConfig
from .scoring import NLL_DENOMINATORS, SCORERS

RESOLVED_NAME = "config.resolved.json"


@dataclass(frozen=True)
class DataConfig:
    manifest: str = "manifest.json"
    train: str = "train"
    test: str = "test"  # held-out ID set for evaluation
    ood: tuple[str, ...] = ("noise", "constant")
    ood_manifest: str | None = None  # defaults to `manifest`
    train_limit: int | None = None


@dataclass(frozen=True)
class EvalConfig:
    k: int = 20
    seed: int = 0
    workers: int | None = None
    bins: int = 50
    tpr: float = 0.95
    warmup: int = 1
    limit: int | None = None


@dataclass(frozen=True)
class ComplexityConfig:
    weight: float = 1.0


@dataclass(frozen=True)
class ScoringConfig:
    weight: float = 1.0  # high-frequency channel weight, VAE only
    nll_denominator: str = "input"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    freq: FrequencyConfig = field(default_factory=FrequencyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    scorer: str = "frl"
    seed: int = 0
    output_dir: str = "out"
    checkpoint: str | None = None  # defaults to <output_dir>/model.frl

    @property
    def checkpoint_uri(self) -> str:
        return self.checkpoint or join(self.output_dir, "model.frl")

    def input_spec(self, resolution: tuple[int, int, int]) -> InputSpec:
        h, w, c = resolution
        return InputSpec(h, w, c, self.model.quant_levels, self.freq)

    def scoring_options(self, weight: float | None = None) -> dict:
        return {
            "k": self.eval.k,
            "seed": self.eval.seed,
            "weight": self.scoring.weight if weight is None else weight,
            "complexity_weight": self.complexity.weight,
            "nll_denominator": self.scoring.nll_denominator,
        }

    def validate(self) -> "ExperimentConfig":
        self.model.validate()
        self.freq.validate()
        self.train.validate()
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; expected one of {SCORERS}")
        if self.scorer == "frl" and not self.freq.enabled:
            raise ConfigError("scorer 'frl' needs a frequency-trained model; set freq.method")
        if self.scorer == "ic" and self.freq.enabled:
            raise ConfigError("scorer 'ic' needs a plain model; set freq.method=none")
        if self.scoring.nll_denominator not in NLL_DENOMINATORS:
            raise ConfigError(f"scoring.nll_denominator must be one of {NLL_DENOMINATORS}")
        if self.scoring.weight != 1.0 and self.model.family != "vae":
            raise ConfigError("scoring.weight applies to VAE models only")
        if self.eval.k < 1:
            raise ConfigError(f"eval.k must be >= 1, got {self.eval.k}")
        if self.eval.bins < 2:
            raise ConfigError(f"eval.bins must be >= 2, got {self.eval.bins}")
        if not 0 < self.eval.tpr <= 1:
            raise ConfigError(f"eval.tpr must lie in (0, 1], got {self.eval.tpr}")
        return self


# =============================================================================
# dict <-> dataclass
# =============================================================================

def _build(cls, data: dict, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys {[f'{path}{k}' for k in unknown]}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if name in known else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{name}.")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    data = {k: v for k, v in data.items() if k != "config_hash"}
    return _build(ExperimentConfig, data)


def to_dict(cfg) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    return plain(dataclasses.asdict(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def resolved(cfg: ExperimentConfig) -> dict:
    return {**to_dict(cfg), "config_hash": config_hash(cfg)}


# =============================================================================
# Overrides
# =============================================================================

def _coerce(raw: str, default: Any, key: str) -> Any:
    text = raw.strip()
    if isinstance(default, str):
        return text
    if text.lower() in ("none", "null"):
        return None
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"--{key}: cannot read {raw!r} as {type(default).__name__}") from None
    # default None: accept the first reading that parses
    for parse in (int, float):
        try:
            return parse(text)
        except ValueError:
            pass
    return text


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Replace dotted keys, e.g. {"freq.kernel_size": "7"}."""
    data = to_dict(cfg)
    for key, raw in overrides.items():
        parts = key.split(".")
        node: Any = cfg
        section = data
        for part in parts[:-1]:
            if not dataclasses.is_dataclass(node) or part not in {f.name for f in dataclasses.fields(node)}:
                raise ConfigError(f"unknown config key {key!r}")
            node = getattr(node, part)
            section = section[part]
        leaf = parts[-1]
        if not dataclasses.is_dataclass(node) or leaf not in {f.name for f in dataclasses.fields(node)}:
            raise ConfigError(f"unknown config key {key!r}")
        default = getattr(node, leaf)
        if dataclasses.is_dataclass(default):
            raise ConfigError(f"config key {key!r} is a section; override one of its fields")
        section[leaf] = _coerce(raw, default, key)
    return from_dict(data)


def parse_overrides(args: list[str]) -> dict[str, str]:
    """['--freq.kernel_size=7', '--seed', '3'] -> {'freq.kernel_size': '7', 'seed': '3'}"""
    out: dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif i + 1 < len(args):
            i += 1
            value = args[i]
        else:
            raise ConfigError(f"--{key} needs a value")
        out[key] = value
        i += 1
    return out


# =============================================================================
# Loading and snapshots
# =============================================================================

def load_config(uri: str | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Load a JSON config (or the defaults) and apply overrides.

    Manifest paths are taken relative to the working directory, so a
    resolved snapshot loads the same data from wherever it is stored.
    FRL_OUT replaces the output directory here, once.
    """
    cfg = from_dict(io.load_json(uri)) if uri else ExperimentConfig()
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    cfg = dataclasses.replace(cfg, output_dir=get_output_dir(cfg.output_dir))
    return cfg.validate()


def save_resolved(cfg: ExperimentConfig, output_dir: str | None = None) -> str:
    return io.save_json(resolved(cfg), join(output_dir or cfg.output_dir, RESOLVED_NAME))
