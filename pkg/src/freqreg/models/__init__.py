"""Generative model families over the frequency-augmented input."""

from __future__ import annotations

from dataclasses import dataclass

from .. import checkpoint
from ..errors import CheckpointError, ConfigError
from .autoregressive import ArModel, ar_nll
from .base import GenerativeModel, InputSpec
from .flow import FlowModel, flow_nll
from .training import TrainConfig, TrainResult, train
from .vae import VaeModel, vae_channel_weighted_nll, vae_elbo, vae_iwae_nll, vae_reconstruct

FAMILIES = {"vae": VaeModel, "flow": FlowModel, "ar": ArModel}
DEFAULT_LAYERS = {"vae": 4, "flow": 8, "ar": 5}
DEFAULT_FILTERS = {"vae": 32, "flow": 32, "ar": 64}


@dataclass(frozen=True)
class ModelConfig:
    family: str = "vae"
    latent_dim: int | None = None
    layers: int | None = None
    filters: int | None = None
    quant_levels: int = 256
    channel_order: str = "hf_first"

    def validate(self) -> "ModelConfig":
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model.family {self.family!r}; expected one of {sorted(FAMILIES)}")
        if self.quant_levels < 2:
            raise ConfigError(f"model.quant_levels must be >= 2, got {self.quant_levels}")
        return self

    def kwargs(self) -> dict:
        layers = self.layers if self.layers is not None else DEFAULT_LAYERS[self.family]
        filters = self.filters or DEFAULT_FILTERS[self.family]
        if self.family == "vae":
            return {"latent_dim": self.latent_dim, "n_conv": layers, "filters": filters}
        if self.family == "flow":
            return {"n_layers": layers, "filters": filters}
        return {"n_layers": layers, "filters": filters, "channel_order": self.channel_order}


def build_model(cfg: ModelConfig, spec: InputSpec, seed: int = 0) -> GenerativeModel:
    cfg.validate()
    return FAMILIES[cfg.family](spec, seed=seed, **cfg.kwargs())


def save_model(model: GenerativeModel, uri: str) -> str:
    meta = {"family": model.family, "spec": model.spec.to_dict(), "config": model.config(), "seed": model.seed}
    return checkpoint.save_checkpoint(model.state_dict(), uri, meta)


def load_model(uri: str) -> GenerativeModel:
    """Rebuild a model from a checkpoint and its model.json sidecar (trainable, float32)."""
    meta = checkpoint.load_meta(uri)
    family = meta.get("family")
    if family not in FAMILIES:
        raise CheckpointError(f"checkpoint {uri}: unknown model family {family!r}")
    model = FAMILIES[family](InputSpec.from_dict(meta["spec"]), seed=meta.get("seed", 0), **meta["config"])
    model.load_state_dict(checkpoint.load_checkpoint(uri))
    model.trained = True
    return model


__all__ = [
    "GenerativeModel", "InputSpec", "ModelConfig",
    "VaeModel", "FlowModel", "ArModel", "FAMILIES",
    "build_model", "save_model", "load_model",
    "TrainConfig", "TrainResult", "train",
    "vae_elbo", "vae_iwae_nll", "vae_channel_weighted_nll", "vae_reconstruct",
    "flow_nll", "ar_nll",
]
