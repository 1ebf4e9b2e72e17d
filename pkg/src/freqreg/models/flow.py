"""Affine coupling flow with fixed masks and permutations.

Each step: actnorm (per-channel log-scale and bias, zero-initialized), then
an affine coupling

    y = x * m + (1 - m) * (x * exp(s) + t),   s = tanh(raw_s)

where (raw_s, t) come from a 3-layer conv net applied to x * m, then a
channel reversal. Masks alternate between checkerboard and channel halves
(checkerboard only for single-channel input). The last conv of every
coupling net starts at zero, so an untrained flow is the identity.

Quantized input is dequantized to y = (x_q + u) / Q - 0.5 with u ~ U[0, 1);
scoring shares one seeded u across the batch.
"""

from __future__ import annotations

import math

import numpy as np

from .. import tensor as T
from ..errors import ConfigError, NonFiniteError
from ..tensor import Tensor
from .base import LN2, LOG_2PI, GenerativeModel, InputSpec


class FlowModel(GenerativeModel):
    family = "flow"

    def __init__(self, spec: InputSpec, n_layers: int = 8, filters: int = 32, seed: int = 0):
        super().__init__(spec, seed)
        if n_layers < 1:
            raise ConfigError(f"flow needs at least one coupling layer, got {n_layers}")
        self.n_layers = n_layers
        self.filters = filters
        c, f = spec.total_channels, filters
        self.masks = [self._mask(i) for i in range(n_layers)]
        for i in range(n_layers):
            self._param(f"step{i}.an.logs", (1, c, 1, 1))
            self._param(f"step{i}.an.bias", (1, c, 1, 1))
            self._param(f"step{i}.nn0.w", (f, c, 3, 3), fan_in=c * 9)
            self._param(f"step{i}.nn0.b", (1, f, 1, 1))
            self._param(f"step{i}.nn1.w", (f, f, 1, 1), fan_in=f)
            self._param(f"step{i}.nn1.b", (1, f, 1, 1))
            self._param(f"step{i}.nn2.w", (2 * c, f, 3, 3), zero=True)
            self._param(f"step{i}.nn2.b", (1, 2 * c, 1, 1))

    def config(self) -> dict:
        return {"n_layers": self.n_layers, "filters": self.filters}

    def _mask(self, layer: int) -> np.ndarray:
        h, w, c = self.spec.shape
        if c >= 2 and layer % 2 == 1:
            m = np.zeros((1, c, 1, 1))
            m[:, : c // 2] = 1
            m = np.broadcast_to(m, (1, c, h, w))
            if (layer // 2) % 2:
                m = 1 - m
            return np.ascontiguousarray(m)
        parity = (layer // 2) % 2 if c >= 2 else layer % 2
        ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        board = ((ii + jj + parity) % 2).astype(np.float64)
        return np.ascontiguousarray(np.broadcast_to(board, (1, c, h, w)))

    # -------------------------------------------------------------------------
    # Transform
    # -------------------------------------------------------------------------

    def _coupling_params(self, i: int, x_masked: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        c = self.spec.total_channels
        h = T.relu(T.add(T.conv2d(x_masked, self.p(f"step{i}.nn0.w"), padding=1), self.p(f"step{i}.nn0.b")))
        h = T.relu(T.add(T.conv2d(h, self.p(f"step{i}.nn1.w")), self.p(f"step{i}.nn1.b")))
        raw = T.add(T.conv2d(h, self.p(f"step{i}.nn2.w"), padding=1), self.p(f"step{i}.nn2.b"))
        inv = (1.0 - mask).astype(raw.dtype)
        log_s = T.mul(T.tanh(T.slice(raw, (slice(None), slice(0, c)))), inv)
        shift = T.mul(T.slice(raw, (slice(None), slice(c, 2 * c))), inv)
        return log_s, shift

    def _reverse_channels(self, x: Tensor) -> Tensor:
        c = x.shape[1]
        if c < 2:
            return x
        return T.concat_channels([T.slice(x, (slice(None), slice(j, j + 1))) for j in reversed(range(c))])

    def forward(self, y: Tensor) -> tuple[Tensor, Tensor]:
        """y (N, C, H, W) -> (z, per-sample log|det dz/dy|)."""
        n = y.shape[0]
        hw = self.spec.height * self.spec.width
        h = y
        logdet = Tensor(np.zeros(n, dtype=y.dtype))
        for i, mask in enumerate(self.masks):
            logs = self.p(f"step{i}.an.logs")
            h = T.add(T.mul(h, T.exp(logs)), self.p(f"step{i}.an.bias"))
            logdet = T.add(logdet, T.mul(T.sum(logs), float(hw)))

            m = mask.astype(h.dtype)
            x_a = T.mul(h, m)
            log_s, shift = self._coupling_params(i, x_a, mask)
            h = T.add(x_a, T.mul(T.add(T.mul(h, T.exp(log_s)), shift), 1.0 - m))
            logdet = T.add(logdet, T.sum(T.reshape(log_s, (n, -1)), axis=1))
            h = self._reverse_channels(h)
        return h, logdet

    def inverse(self, z: np.ndarray) -> np.ndarray:
        """Exact inverse of `forward` on arrays (N, C, H, W)."""
        h = np.asarray(z, dtype=self.dtype)
        for i in reversed(range(self.n_layers)):
            mask = self.masks[i].astype(h.dtype)
            if h.shape[1] >= 2:
                h = h[:, ::-1].copy()
            x_a = h * mask
            log_s, shift = self._coupling_params(i, Tensor(x_a), self.masks[i])
            h = x_a + (1 - mask) * ((h - shift.data) * np.exp(-log_s.data))
            logs = self.p(f"step{i}.an.logs").data
            h = (h - self.p(f"step{i}.an.bias").data) * np.exp(-logs)
        return h

    def transform(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z, logdet = self.forward(Tensor(np.asarray(y, dtype=self.dtype)))
        return z.data, logdet.data

    # -------------------------------------------------------------------------
    # Likelihood
    # -------------------------------------------------------------------------

    def dequantize(self, xq: np.ndarray, u: np.ndarray) -> np.ndarray:
        return (self.to_nchw(xq) + u) / self.spec.quant_levels - 0.5

    def _nll_nats(self, y: Tensor) -> Tensor:
        z, logdet = self.forward(y)
        n = y.shape[0]
        log_pz = T.mul(T.sum(T.reshape(T.add(T.mul(z, z), LOG_2PI), (n, -1)), axis=1), -0.5)
        # Density of y is Q**D times the density of the dequantized levels.
        offset = self.spec.dims * math.log(self.spec.quant_levels)
        return T.add(T.mul(T.add(log_pz, logdet), -1.0), offset)

    def nll_nats(self, xq: np.ndarray, seed: int = 0, **_) -> np.ndarray:
        xq = self.check_input(xq)
        u = np.random.default_rng(seed).random((1, *self.to_nchw(xq[:1]).shape[1:]))
        y = self.dequantize(xq, u).astype(self.dtype)
        nll = self._nll_nats(Tensor(y)).data.astype(np.float64)
        if not np.isfinite(nll).all():
            raise NonFiniteError("flow log-determinant is not finite")
        return nll

    def training_loss(self, xq: np.ndarray, rng: np.random.Generator) -> Tensor:
        xq = self.check_input(xq)
        y = self.dequantize(xq, rng.random(self.to_nchw(xq).shape)).astype(self.dtype)
        return T.mul(T.mean(self._nll_nats(Tensor(y))), 1.0 / (self.spec.dims * LN2))


def flow_nll(model: FlowModel, x_f: np.ndarray, seed: int = 0) -> np.ndarray:
    return model.nll_bits(x_f, seed=seed)
