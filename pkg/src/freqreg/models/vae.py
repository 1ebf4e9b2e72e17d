"""Convolutional VAE with a Q-way categorical likelihood per pixel-channel.

Encoder: `n_conv` convolutions (kernel 4, stride 2, padding 1, no bias,
filters 32 * 2**i) with ReLU, then dense heads for the posterior mean and
log-variance (clamped to [-10, 10]). Decoder mirrors it: a dense layer back
to the deepest feature map, then transposed convolutions up to C_tot * Q
logits per pixel. `n_conv=0` gives a dense-only model for tiny inputs.

Scoring draws its reparameterization noise from `default_rng(seed)` once per
call, shape (K, d_z), and shares it across the batch, so a sample's score
does not depend on what else is in the batch. Training draws fresh noise per
sample.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .. import tensor as T
from ..errors import ConfigError, DomainError
from ..tensor import Tensor
from .base import LN2, LOG_2PI, GenerativeModel, InputSpec

LOGVAR_CLAMP = 10.0
# Upper bound on decoded samples held in memory at once during scoring.
SCORING_CHUNK = 16


class VaeModel(GenerativeModel):
    family = "vae"

    def __init__(self, spec: InputSpec, latent_dim: int | None = None, n_conv: int = 4,
                 filters: int = 32, seed: int = 0):
        super().__init__(spec, seed)
        self.latent_dim = latent_dim or (100 if spec.channels == 1 else 200)
        self.n_conv = n_conv
        self.filters = filters
        c, q = spec.total_channels, spec.quant_levels

        sizes = [(spec.height, spec.width)]
        for i in range(n_conv):
            h, w = sizes[-1]
            if h < 2 or w < 2:
                raise ConfigError(f"{n_conv} stride-2 convolutions do not fit a {spec.height}x{spec.width} input")
            sizes.append((h // 2, w // 2))
        self._sizes = sizes
        self._out_pad = []
        for i in range(n_conv):
            (h, w), (h2, w2) = sizes[i], sizes[i + 1]
            op_h, op_w = h - 2 * h2, w - 2 * w2
            if op_h != op_w:
                raise ConfigError(f"VAE needs matching height/width parity at every level, got {h}x{w}")
            self._out_pad.append(op_h)

        chans = [c] + [filters * 2 ** i for i in range(n_conv)]
        for i in range(n_conv):
            self._param(f"enc{i}.w", (chans[i + 1], chans[i], 4, 4), fan_in=chans[i] * 16)
        hz, wz = sizes[-1]
        flat = chans[-1] * hz * wz
        self._flat = (chans[-1], hz, wz)
        d = self.latent_dim
        self._param("mu.w", (flat, d), fan_in=flat)
        self._param("mu.b", (d,))
        self._param("logvar.w", (flat, d), fan_in=flat)
        self._param("logvar.b", (d,))

        out_flat = flat if n_conv else c * q * spec.height * spec.width
        self._param("dec_in.w", (d, out_flat), fan_in=d)
        self._param("dec_in.b", (out_flat,))
        for i in reversed(range(n_conv)):
            c_in = chans[i + 1]
            c_out = chans[i] if i > 0 else c * q
            self._param(f"dec{i}.w", (c_in, c_out, 4, 4), fan_in=c_in * 16)
        self._param("out.b", (c * q, 1, 1))

    def config(self) -> dict:
        return {"latent_dim": self.latent_dim, "n_conv": self.n_conv, "filters": self.filters}

    # -------------------------------------------------------------------------
    # Networks
    # -------------------------------------------------------------------------

    def _input(self, xq: np.ndarray) -> Tensor:
        x = self.to_nchw(xq).astype(self.dtype) / (self.spec.quant_levels - 1)
        return Tensor(x)

    def encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = x
        for i in range(self.n_conv):
            h = T.relu(T.conv2d(h, self.p(f"enc{i}.w"), stride=2, padding=1))
        h = T.reshape(h, (h.shape[0], -1))
        mu = T.add(T.matmul(h, self.p("mu.w")), self.p("mu.b"))
        logvar = T.add(T.matmul(h, self.p("logvar.w")), self.p("logvar.b"))
        return mu, T.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)

    def decode(self, z: Tensor) -> Tensor:
        """Latents (M, d_z) -> logits (M, C_tot, Q, H, W)."""
        m = z.shape[0]
        c, q = self.spec.total_channels, self.spec.quant_levels
        h = T.add(T.matmul(z, self.p("dec_in.w")), self.p("dec_in.b"))
        if self.n_conv:
            h = T.reshape(T.relu(h), (m, *self._flat))
            for i in reversed(range(self.n_conv)):
                h = T.conv_transpose2d(h, self.p(f"dec{i}.w"), stride=2, padding=1,
                                       output_padding=self._out_pad[i])
                if i > 0:
                    h = T.relu(h)
        else:
            h = T.reshape(h, (m, c * q, self.spec.height, self.spec.width))
        h = T.add(h, self.p("out.b"))
        return T.reshape(h, (m, c, q, self.spec.height, self.spec.width))

    def channel_log_likelihood(self, logits: Tensor, xq: np.ndarray) -> Tensor:
        """log p(x_F | z) summed over pixels, per channel: (M, C_tot)."""
        idx = self.to_nchw(xq)[:, :, None]
        ll = T.gather(T.log_softmax(logits, axis=2), idx, axis=2)
        return T.sum(T.reshape(ll, (ll.shape[0], ll.shape[1], -1)), axis=2)

    # -------------------------------------------------------------------------
    # Objectives
    # -------------------------------------------------------------------------

    def training_loss(self, xq: np.ndarray, rng: np.random.Generator) -> Tensor:
        """Negative analytic-KL ELBO, mean over the batch, in bits/dim."""
        xq = self.check_input(xq)
        mu, logvar = self.encode(self._input(xq))
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        z = T.add(mu, T.mul(T.exp(T.mul(logvar, 0.5)), eps))
        recon = T.sum(self.channel_log_likelihood(self.decode(z), xq), axis=1)
        kl = kl_divergence(mu, logvar)
        elbo = T.sub(recon, kl)
        return T.mul(T.mean(elbo), -1.0 / (self.spec.dims * LN2))

    def elbo(self, xq: np.ndarray, seed: int = 0, kl: str = "analytic") -> tuple[np.ndarray, Tensor]:
        """Single-sample ELBO.

        Returns:
            (per-sample bound in bits/dim, loss Tensor = -mean bound in bits/dim).
            The loss is recorded when a tape is active and parameters are trainable.
        """
        if kl not in ("analytic", "sample"):
            raise ConfigError(f"kl must be 'analytic' or 'sample', got {kl!r}")
        xq = self.check_input(xq)
        mu, logvar = self.encode(self._input(xq))
        eps = np.random.default_rng(seed).standard_normal((1, self.latent_dim)).astype(self.dtype)
        std = T.exp(T.mul(logvar, 0.5))
        z = T.add(mu, T.mul(std, eps))
        recon = T.sum(self.channel_log_likelihood(self.decode(z), xq), axis=1)
        if kl == "analytic":
            bound = T.sub(recon, kl_divergence(mu, logvar))
        else:
            log_pz = T.mul(T.sum(T.mul(z, z), axis=1), -0.5)
            log_qz = T.mul(T.sum(T.add(logvar, eps * eps), axis=1), -0.5)
            bound = T.add(recon, T.sub(log_pz, log_qz))
        scale = 1.0 / (self.spec.dims * LN2)
        return bound.data * scale, T.mul(T.mean(bound), -scale)

    def log_weights(self, xq: np.ndarray, k: int, seed: int, weight: float = 1.0) -> np.ndarray:
        """Importance log-weights (N, K), with x_H's log-likelihood scaled by `weight`."""
        if k < 1:
            raise DomainError(f"K must be >= 1, got {k}")
        if weight < 0:
            raise DomainError(f"weight must be >= 0, got {weight}")
        if weight != 1.0 and not self.spec.freq.enabled:
            raise ConfigError("a high-frequency weight needs a frequency-augmented model")
        xq = self.check_input(xq)
        eps = np.random.default_rng(seed).standard_normal((k, self.latent_dim))
        channel_w = np.ones(self.spec.total_channels)
        if self.spec.freq.enabled:
            channel_w[-1] = weight

        out = np.empty((xq.shape[0], k))
        per = max(1, SCORING_CHUNK // k)
        for start in range(0, xq.shape[0], per):
            xb = xq[start:start + per]
            mu, logvar = self.encode(self._input(xb))
            mu, logvar = mu.data.astype(np.float64), logvar.data.astype(np.float64)
            std = np.exp(0.5 * logvar)
            z = mu[:, None, :] + std[:, None, :] * eps[None]  # (n, K, d)
            n = xb.shape[0]
            flat_z = Tensor(z.reshape(n * k, -1).astype(self.dtype))
            ll = self.channel_log_likelihood(self.decode(flat_z), np.repeat(xb, k, axis=0)).data
            ll = (ll.astype(np.float64) @ channel_w).reshape(n, k)
            log_pz = -0.5 * np.sum(z * z + LOG_2PI, axis=2)
            log_qz = -0.5 * np.sum(eps[None] ** 2 + logvar[:, None, :] + LOG_2PI, axis=2)
            out[start:start + n] = ll + log_pz - log_qz
        return out

    def nll_nats(self, xq: np.ndarray, seed: int = 0, k: int = 20, weight: float = 1.0) -> np.ndarray:
        """-L_K per sample: -(logsumexp of K importance log-weights - log K)."""
        lw = self.log_weights(xq, k, seed, weight)
        return -(logsumexp(lw, axis=1) - math.log(k))

    def reconstruct(self, xq: np.ndarray) -> np.ndarray:
        """Decode the posterior mean; argmax levels in [0, 1], image channels only (N, H, W, C)."""
        if not self.trained:
            raise ConfigError("reconstruct needs a trained model")
        xq = self.check_input(xq)
        mu, _ = self.encode(self._input(xq))
        levels = np.argmax(self.decode(mu).data, axis=2)  # (N, C_tot, H, W)
        img = levels[:, :self.spec.channels].transpose(0, 2, 3, 1)
        return img.astype(np.float64) / (self.spec.quant_levels - 1)


def kl_divergence(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) per row, in nats."""
    terms = T.sub(T.add(T.mul(mu, mu), T.exp(logvar)), T.add(logvar, 1.0))
    return T.mul(T.sum(terms, axis=1), 0.5)


# =============================================================================
# Operation surface
# =============================================================================

def vae_elbo(model: VaeModel, x_f: np.ndarray, seed: int = 0, kl: str = "analytic"):
    return model.elbo(x_f, seed, kl)


def vae_iwae_nll(model: VaeModel, x_f: np.ndarray, k: int = 20, seed: int = 0) -> np.ndarray:
    return model.nll_bits(x_f, seed=seed, k=k)


def vae_channel_weighted_nll(model: VaeModel, x_f: np.ndarray, k: int = 20, weight: float = 1.0,
                             seed: int = 0) -> np.ndarray:
    return model.nll_bits(x_f, seed=seed, k=k, weight=weight)


def vae_reconstruct(model: VaeModel, x_f: np.ndarray) -> np.ndarray:
    return model.reconstruct(x_f)
