"""Evaluation metrics: AUROC, score histograms, throughput, reconstruction quality."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .errors import DomainError, EmptyDatasetError, ShapeError
from .profiling import MemoryProfiler

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


# =============================================================================
# AUROC
# =============================================================================

def auroc(id_scores, ood_scores) -> float:
    """P(random OOD score > random ID score), ties counted 1/2. OOD is positive.

    Mann-Whitney U from midranks. U is carried as the integer 2U so that
    auroc(a, b) + auroc(b, a) == 1 holds exactly.
    """
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyDatasetError("auroc needs non-empty ID and OOD score lists")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("auroc scores must be finite")
    n1, n2 = a.size, b.size
    ranks = rankdata(np.concatenate([a, b]))  # midranks are multiples of 1/2
    u2 = int(round(2.0 * ranks[n1:].sum())) - n2 * (n2 + 1)
    total = 2 * n1 * n2
    if 2 * u2 <= total:
        return u2 / total
    return 1.0 - (total - u2) / total


# =============================================================================
# Histograms
# =============================================================================

@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray  # (bins + 1,) shared by every group
    counts: dict[str, np.ndarray]  # group name -> (bins,) integer counts


def histogram(groups: dict[str, np.ndarray], bins: int = 50) -> Histogram:
    """Bin each group's scores over one shared set of edges.

    A degenerate range (every score equal) is widened by 0.5 on both sides.
    """
    if bins < 2:
        raise DomainError(f"bins must be >= 2, got {bins}")
    arrays = {name: np.asarray(v, dtype=np.float64).ravel() for name, v in groups.items()}
    allv = np.concatenate(list(arrays.values())) if arrays else np.empty(0)
    if allv.size == 0:
        raise EmptyDatasetError("histogram needs at least one score")
    lo, hi = float(allv.min()), float(allv.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = {name: np.histogram(v, bins=edges)[0].astype(np.int64) for name, v in arrays.items()}
    return Histogram(edges, counts)


def histogram_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Shared-bin min-sum of two normalized count vectors, in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"count vectors differ in shape: {a.shape} vs {b.shape}")
    if a.sum() == 0 or b.sum() == 0:
        return 0.0
    return float(np.minimum(a / a.sum(), b / b.sum()).sum())


# =============================================================================
# Throughput
# =============================================================================

@dataclass(frozen=True)
class Throughput:
    images: int
    seconds: float
    images_per_sec: float
    sec_per_image: float
    peak_rss_mb: float


def rates(images: int, seconds: float) -> tuple[float, float]:
    if images <= 0:
        raise EmptyDatasetError("throughput needs at least one image")
    seconds = max(seconds, 1e-12)
    return images / seconds, seconds / images


def throughput(scorer, images: np.ndarray, warmup: int = 1) -> Throughput:
    """Time `scorer(images)` over the scoring loop only.

    The first `warmup` images are scored once beforehand and not timed. Data
    loading is the caller's and is never inside the timed region.
    """
    n = len(images)
    if n == 0:
        raise EmptyDatasetError("throughput needs a non-empty dataset")
    if warmup > 0:
        scorer(images[:warmup])
    with MemoryProfiler() as profiler:
        start = time.perf_counter()
        scorer(images)
        seconds = time.perf_counter() - start
    peak = profiler.peak_rss_mb
    ips, spi = rates(n, seconds)
    return Throughput(n, seconds, ips, spi, peak)


# =============================================================================
# Reconstruction quality
# =============================================================================

def _ssim_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean SSIM over all valid Gaussian windows and channels of (H, W, C) images in [0, 1].

    The window is 11x11 (sigma 1.5) or the image's smaller side, whichever is less.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    size = min(SSIM_WINDOW, x.shape[0], x.shape[1])
    w = _ssim_kernel(size, SSIM_SIGMA)

    def filt(img):
        win = sliding_window_view(img, (size, size), axis=(0, 1))  # (H', W', C, k, k)
        return np.einsum("ijckl,kl->ijc", win, w)

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class ReconMetrics:
    mse: float
    mae: float
    psnr: float
    ssim: float


def recon_metrics(x: np.ndarray, x_hat: np.ndarray) -> ReconMetrics:
    """MSE, MAE, PSNR (peak 1, capped at 100 dB) and SSIM for a batch or one image.

    Batched inputs (N, H, W, C) report the mean over images.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"reconstruction shape {x_hat.shape} != original {x.shape}")
    if x.size == 0:
        raise EmptyDatasetError("recon_metrics needs non-empty images")
    if x.min() < 0 or x.max() > 1 or x_hat.min() < 0 or x_hat.max() > 1:
        raise DomainError("recon_metrics expects values in [0, 1]")
    batch = x if x.ndim == 4 else x[None]
    batch_hat = x_hat if x_hat.ndim == 4 else x_hat[None]

    mse = float(np.mean((x - x_hat) ** 2))
    mae = float(np.mean(np.abs(x - x_hat)))
    psnr = PSNR_CAP if mse < 1e-10 else min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))
    s = float(np.mean([ssim(a, b) for a, b in zip(batch, batch_hat)]))
    return ReconMetrics(mse, mae, psnr, s)
