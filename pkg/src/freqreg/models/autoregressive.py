"""Masked-convolution autoregressive model (PixelCNN-style, categorical head).

Pixels are ordered in raster scan; within a pixel, channels are ordered
with x_H first (`hf_first`) or last (`hf_last`). Every layer's channels are
split into one group per input channel, as evenly as the count allows. Mask type A lets output group g see
input groups < g at the current pixel; type B also allows group g. Earlier
pixels are fully visible and later ones never are. Padding is zero.

Layers: type A 5x5, then type B 3x3 layers, then a type B 1x1 head with
C_tot * Q outputs, grouped channel-major so logits reshape to
(N, C_tot, Q, H, W).
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..errors import ConfigError
from ..tensor import Tensor
from .base import LN2, GenerativeModel, InputSpec

CHANNEL_ORDERS = ("hf_first", "hf_last")


def channel_groups(n: int, groups: int) -> np.ndarray:
    """Group id of each of `n` channels; earlier groups take the remainder."""
    return np.concatenate([np.full(len(part), g) for g, part in enumerate(np.array_split(np.arange(n), groups))])


def causal_mask(c_out: int, c_in: int, k: int, groups: int, mask_type: str) -> np.ndarray:
    """Weight mask (c_out, c_in, k, k) for raster-and-channel ordering."""
    g_out = channel_groups(c_out, groups)
    g_in = channel_groups(c_in, groups)
    mask = np.zeros((c_out, c_in, k, k))
    center = k // 2
    mask[:, :, :center, :] = 1
    mask[:, :, center, :center] = 1
    allowed = g_in[None, :] < g_out[:, None] if mask_type == "A" else g_in[None, :] <= g_out[:, None]
    mask[:, :, center, center] = allowed
    return mask


class ArModel(GenerativeModel):
    family = "ar"

    def __init__(self, spec: InputSpec, n_layers: int = 5, filters: int = 64,
                 channel_order: str = "hf_first", seed: int = 0):
        super().__init__(spec, seed)
        c, q = spec.total_channels, spec.quant_levels
        if q < 2:
            raise ConfigError(f"quant_levels must be >= 2, got {q}")
        if n_layers < 2:
            raise ConfigError(f"AR model needs at least 2 layers, got {n_layers}")
        if filters < c:
            raise ConfigError(f"filters ({filters}) must be at least the channel count ({c})")
        if channel_order not in CHANNEL_ORDERS:
            raise ConfigError(f"channel_order must be one of {CHANNEL_ORDERS}, got {channel_order!r}")
        self.n_layers = n_layers
        self.filters = filters
        self.channel_order = channel_order

        order = list(range(c))
        if spec.freq.enabled and channel_order == "hf_first":
            order = [c - 1] + list(range(c - 1))
        self.order = order

        self._layers: list[tuple[str, int, np.ndarray]] = []
        shapes = [(filters, c, 5, "A")]
        shapes += [(filters, filters, 3, "B")] * (n_layers - 2)
        shapes += [(c * q, filters, 1, "B")]
        for i, (c_out, c_in, k, kind) in enumerate(shapes):
            self._param(f"conv{i}.w", (c_out, c_in, k, k), fan_in=c_in * k * k)
            self._param(f"conv{i}.b", (1, c_out, 1, 1))
            self._layers.append((f"conv{i}", k // 2, causal_mask(c_out, c_in, k, c, kind)))

    def config(self) -> dict:
        return {"n_layers": self.n_layers, "filters": self.filters, "channel_order": self.channel_order}

    def _ordered(self, xq: np.ndarray) -> np.ndarray:
        """(N, H, W, C_tot) -> (N, C_tot, H, W) in modeling order."""
        return self.to_nchw(xq)[:, self.order]

    def _logits(self, xo: np.ndarray) -> Tensor:
        n, c, h, w = xo.shape
        x = Tensor(xo.astype(self.dtype) / (self.spec.quant_levels - 1))
        last = len(self._layers) - 1
        for i, (name, pad, mask) in enumerate(self._layers):
            x = T.add(T.conv2d(x, self.p(f"{name}.w"), padding=pad, mask=mask), self.p(f"{name}.b"))
            if i < last:
                x = T.relu(x)
        return T.reshape(x, (n, c, self.spec.quant_levels, h, w))

    def logits(self, xq: np.ndarray) -> np.ndarray:
        """Logits (N, C_tot, Q, H, W), channel axis in modeling order."""
        return self._logits(self._ordered(self.check_input(xq))).data

    def _log_likelihood(self, xo: np.ndarray) -> Tensor:
        ll = T.gather(T.log_softmax(self._logits(xo), axis=2), xo[:, :, None], axis=2)
        return T.sum(T.reshape(ll, (xo.shape[0], -1)), axis=1)

    def nll_nats(self, xq: np.ndarray, seed: int = 0, **_) -> np.ndarray:
        xo = self._ordered(self.check_input(xq))
        return -self._log_likelihood(xo).data.astype(np.float64)

    def training_loss(self, xq: np.ndarray, rng: np.random.Generator) -> Tensor:
        xo = self._ordered(self.check_input(xq))
        return T.mul(T.mean(self._log_likelihood(xo)), -1.0 / (self.spec.dims * LN2))


def ar_nll(model: ArModel, x_f: np.ndarray) -> np.ndarray:
    return model.nll_bits(x_f)
