"""High-frequency extraction and the frequency-augmented model input.

Images are channels-last float arrays in [0, 1] with optional leading batch
axes: (H, W, C) or (N, H, W, C). The high-frequency channel x_H is always
computed from grayscale and returned as (..., H, W, 1) in [-1, 1].

Methods:
- gaussian: x_H = gray - blur(gray), normalized Gaussian kernel, reflect padding
- fft:      orthonormal 2-D DFT with radial frequencies below r * Nyquist zeroed
- haar:     l-level orthonormal Haar transform with the final LL band zeroed
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

METHODS = ("gaussian", "fft", "haar")
BT601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FrequencyConfig:
    """`method="none"` means a plain model trained on x alone."""

    method: str = "gaussian"
    kernel_size: int = 5
    sigma: float | None = None  # None: sigma = kernel_size / 4
    fft_radius: float = 0.0625
    haar_levels: int = 1

    @property
    def enabled(self) -> bool:
        return self.method != "none"

    @property
    def resolved_sigma(self) -> float:
        return self.sigma if self.sigma is not None else self.kernel_size / 4.0

    def validate(self, height: int | None = None, width: int | None = None) -> "FrequencyConfig":
        if self.method not in METHODS + ("none",):
            raise ConfigError(f"unknown freq.method {self.method!r}; expected one of {METHODS + ('none',)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"freq.kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.resolved_sigma <= 0:
            raise ConfigError(f"freq.sigma must be positive, got {self.resolved_sigma}")
        if not 0 < self.fft_radius <= 1:
            raise ConfigError(f"freq.fft_radius must lie in (0, 1], got {self.fft_radius}")
        if self.haar_levels < 1:
            raise ConfigError(f"freq.haar_levels must be >= 1, got {self.haar_levels}")
        if self.method == "haar" and height is not None and width is not None:
            if 2 ** self.haar_levels > min(height, width):
                raise ConfigError(
                    f"freq.haar_levels={self.haar_levels} exceeds log2(min({height}, {width}))"
                )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> dict:
        """Only the fields that affect x_H under this method."""
        if self.method == "gaussian":
            return {"method": self.method, "kernel_size": self.kernel_size, "sigma": self.resolved_sigma}
        if self.method == "fft":
            return {"method": self.method, "fft_radius": self.fft_radius}
        if self.method == "haar":
            return {"method": self.method, "haar_levels": self.haar_levels}
        return {"method": self.method}


# =============================================================================
# Gaussian
# =============================================================================

def gaussian_kernel(k: int, sigma: float) -> np.ndarray:
    """k x k Gaussian kernel normalized to sum to 1."""
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"kernel size must be odd and positive, got {k}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    r = (k - 1) // 2
    m = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(m[:, None] ** 2 + m[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _spatial(x: np.ndarray) -> np.ndarray:
    """(..., H, W, 1) or (H, W) -> (..., H, W)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim >= 3:
        if x.shape[-1] != 1:
            raise ShapeError(f"expected a single-channel image, got {x.shape[-1]} channels")
        return x[..., 0]
    if x.ndim != 2:
        raise ShapeError(f"expected an image, got shape {x.shape}")
    return x


def blur(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate a single-channel image with `kernel` under reflect padding.

    Returns the same shape as the input. The kernel is symmetric, so this is
    also the convolution.
    """
    keep_channel = np.ndim(x) >= 3
    g = _spatial(x)
    k = kernel.shape[0]
    p = (k - 1) // 2
    pad = [(0, 0)] * (g.ndim - 2) + [(p, p), (p, p)]
    padded = np.pad(g, pad, mode="reflect") if p else g
    windows = sliding_window_view(padded, (k, k), axis=(-2, -1))
    out = np.einsum("...ijkl,kl->...ij", windows, kernel)
    return out[..., None] if keep_channel else out


def rgb2gray(x: np.ndarray) -> np.ndarray:
    """(..., H, W, 3) -> (..., H, W, 1) with BT.601 weights."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3 or x.shape[-1] != 3:
        raise ShapeError(f"rgb2gray needs 3 channels, got shape {x.shape}")
    return (x @ BT601)[..., None]


def to_gray(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 3:
        return rgb2gray(x)
    if x.shape[-1] == 1:
        return x
    raise ShapeError(f"images must have 1 or 3 channels, got {x.shape[-1]}")


# =============================================================================
# FFT
# =============================================================================

def radial_frequency(height: int, width: int) -> np.ndarray:
    """Radial frequency of every DFT bin as a fraction of Nyquist (1.0 = Nyquist on an axis)."""
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    return np.sqrt(fx ** 2 + fy ** 2) / 0.5


def fft_highpass(g: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero spectrum bins below `radius` * Nyquist.

    Returns:
        (spatial high-pass image, masked orthonormal spectrum).
    """
    g = _spatial(g)
    spec = np.fft.fft2(g, norm="ortho")
    masked = spec * (radial_frequency(*g.shape[-2:]) >= radius)
    return np.fft.ifft2(masked, norm="ortho").real, masked


# =============================================================================
# Haar
# =============================================================================

def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    if h % 2 == 0 and w % 2 == 0:
        return x
    pad = [(0, 0)] * (x.ndim - 2) + [(0, h % 2), (0, w % 2)]
    return np.pad(x, pad, mode="edge")


def haar_forward(x: np.ndarray, levels: int) -> tuple[np.ndarray, list[tuple]]:
    """Multi-level 2-D orthonormal Haar analysis on the last two axes.

    Returns:
        (final LL band, per-level (LH, HL, HH, input shape) from finest to coarsest).
    """
    ll = np.asarray(x, dtype=np.float64)
    details = []
    for _ in range(levels):
        shape = ll.shape
        e = _pad_even(ll)
        a, b = e[..., 0::2, 0::2], e[..., 0::2, 1::2]
        c, d = e[..., 1::2, 0::2], e[..., 1::2, 1::2]
        details.append(((a - b + c - d) / 2, (a + b - c - d) / 2, (a - b - c + d) / 2, shape))
        ll = (a + b + c + d) / 2
    return ll, details


def haar_inverse(ll: np.ndarray, details: list[tuple]) -> np.ndarray:
    for lh, hl, hh, shape in reversed(details):
        h, w = ll.shape[-2:]
        out = np.empty(ll.shape[:-2] + (2 * h, 2 * w))
        out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2
        out[..., 0::2, 1::2] = (ll - lh + hl - hh) / 2
        out[..., 1::2, 0::2] = (ll + lh - hl - hh) / 2
        out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2
        ll = out[..., :shape[-2], :shape[-1]]
    return ll


def haar_highpass(g: np.ndarray, levels: int) -> np.ndarray:
    ll, details = haar_forward(_spatial(g), levels)
    return haar_inverse(np.zeros_like(ll), details)


# =============================================================================
# x_H and x_F
# =============================================================================

def high_freq(x: np.ndarray, cfg: FrequencyConfig, clamp: bool = True) -> np.ndarray:
    """High-frequency channel (..., H, W, 1) of a normalized image."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3:
        raise ShapeError(f"expected (..., H, W, C) image, got shape {x.shape}")
    cfg.validate(*x.shape[-3:-1])
    gray = to_gray(x)[..., 0]
    if cfg.method == "gaussian":
        xh = gray - blur(gray, gaussian_kernel(cfg.kernel_size, cfg.resolved_sigma))
    elif cfg.method == "fft":
        xh, _ = fft_highpass(gray, cfg.fft_radius)
    elif cfg.method == "haar":
        xh = haar_highpass(gray, cfg.haar_levels)
    else:
        raise ConfigError("high_freq needs a frequency method, not 'none'")
    if clamp:
        xh = np.clip(xh, -1.0, 1.0)
    return xh[..., None]


def augment(x: np.ndarray, cfg: FrequencyConfig) -> np.ndarray:
    """x_F = [x, (x_H + 1) / 2] along the channel axis."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([x, (high_freq(x, cfg) + 1.0) / 2.0], axis=-1)


def quantize_augmented(x_f: np.ndarray, quant_levels: int) -> np.ndarray:
    """Map [0, 1] values onto integer levels 0..Q-1, rounding half away from zero."""
    if quant_levels < 2:
        raise ConfigError(f"quant_levels must be >= 2, got {quant_levels}")
    y = np.clip(np.asarray(x_f, dtype=np.float64), 0.0, 1.0)
    return np.floor(y * (quant_levels - 1) + 0.5).astype(np.int64)
