"""Shared model plumbing: input spec, parameter store, frozen copies."""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import frequency
from ..errors import CheckpointError, DomainError, ShapeError
from ..frequency import FrequencyConfig
from ..tensor import Tensor

LN2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class InputSpec:
    """What a model consumes: quantized (N, H, W, C_tot) integers in [0, Q)."""

    height: int
    width: int
    channels: int  # image channels C, before augmentation
    quant_levels: int = 256
    freq: FrequencyConfig = field(default_factory=lambda: FrequencyConfig(method="none"))

    @property
    def total_channels(self) -> int:
        return self.channels + (1 if self.freq.enabled else 0)

    @property
    def dims(self) -> int:
        return self.height * self.width * self.total_channels

    @property
    def image_dims(self) -> int:
        return self.height * self.width * self.channels

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.height, self.width, self.total_channels

    def prepare(self, images: np.ndarray) -> np.ndarray:
        """uint8 images (N, H, W, C) -> quantized model input (N, H, W, C_tot)."""
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        if images.shape[1:] != (self.height, self.width, self.channels):
            raise ShapeError(
                f"images of shape {images.shape[1:]} do not match model input "
                f"{(self.height, self.width, self.channels)}"
            )
        x = images.astype(np.float64) / 255.0
        if self.freq.enabled:
            x = frequency.augment(x, self.freq)
        return frequency.quantize_augmented(x, self.quant_levels)

    def to_dict(self) -> dict:
        return {**asdict(self), "freq": self.freq.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "InputSpec":
        return cls(**{**d, "freq": FrequencyConfig(**d["freq"])})


class GenerativeModel:
    """Parameter store plus the scoring surface every family implements.

    Subclasses register parameters with `_param` in a fixed order, implement
    `nll_nats` (per-sample negative log-likelihood of quantized input, inference
    only) and `training_loss` (scalar Tensor in bits/dim, recorded on the active
    tape).
    """

    family: str = ""

    def __init__(self, spec: InputSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self.frozen = False
        self.trained = False
        self._rng = np.random.default_rng(seed)

    # -------------------------------------------------------------------------
    # Parameters
    # -------------------------------------------------------------------------

    def _param(self, name: str, shape: tuple[int, ...], fan_in: int | None = None,
               zero: bool = False) -> Tensor:
        if zero or fan_in is None:
            data = np.zeros(shape, dtype=np.float32)
        else:
            bound = math.sqrt(6.0 / fan_in)
            data = self._rng.uniform(-bound, bound, size=shape).astype(np.float32)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def p(self, name: str) -> Tensor:
        return self.params[name]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype if self.params else np.dtype(np.float32)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(arrays))
        extra = sorted(set(arrays) - set(self.params))
        if missing or extra:
            raise CheckpointError(f"parameter names differ (missing={missing}, unexpected={extra})")
        for name, t in self.params.items():
            if arrays[name].shape != t.shape:
                raise CheckpointError(f"parameter {name}: shape {arrays[name].shape} != model shape {t.shape}")
            t.data = np.array(arrays[name], dtype=t.dtype)

    def freeze(self) -> "GenerativeModel":
        """Immutable float64 copy for scoring; shareable across workers."""
        clone = copy.copy(self)
        clone.params = {}
        for name, t in self.params.items():
            data = t.data.astype(np.float64)
            data.flags.writeable = False
            clone.params[name] = Tensor(data, name=name)
        clone.frozen = True
        clone._rng = None
        return clone

    def config(self) -> dict:
        """Constructor arguments beyond the spec (stored in model.json)."""
        return {}

    # -------------------------------------------------------------------------
    # Input handling
    # -------------------------------------------------------------------------

    def check_input(self, xq: np.ndarray) -> np.ndarray:
        xq = np.asarray(xq)
        if xq.ndim == 3:
            xq = xq[None]
        if xq.shape[1:] != self.spec.shape:
            raise ShapeError(f"input shape {xq.shape[1:]} does not match model spec {self.spec.shape}")
        if not np.issubdtype(xq.dtype, np.integer):
            if not np.array_equal(xq, np.round(xq)):
                raise DomainError("model input must be quantized integers")
            xq = xq.astype(np.int64)
        if xq.size and (xq.min() < 0 or xq.max() >= self.spec.quant_levels):
            raise DomainError(f"input values must lie in 0..{self.spec.quant_levels - 1}")
        return xq.astype(np.int64)

    def to_nchw(self, xq: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(xq.transpose(0, 3, 1, 2))

    # -------------------------------------------------------------------------
    # Scoring surface
    # -------------------------------------------------------------------------

    def nll_nats(self, xq: np.ndarray, seed: int = 0, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def nll_bits(self, xq: np.ndarray, seed: int = 0, dims: int | None = None, **kwargs) -> np.ndarray:
        """Per-sample NLL in bits per dimension of the model input (or of `dims`)."""
        return self.nll_nats(xq, seed=seed, **kwargs) / ((dims or self.spec.dims) * LN2)

    def training_loss(self, xq: np.ndarray, rng: np.random.Generator) -> Tensor:
        raise NotImplementedError

