"""OOD scores: model likelihood fused with input complexity.

Orientation: higher score means more OOD. All quantities are bits per
dimension. The NLL of the model input (x_F for frequency-trained models) is
normalized by the input's dimension by default (`nll_denominator="input"`),
or by the image's (`"image"`). L(x) is always normalized by dim(x).

Scorers never set labels; the evaluation harness does (`label_records`).
"""

from __future__ import annotations

import math
import multiprocessing
import time
from dataclasses import dataclass, replace

import numpy as np
import pyarrow as pa

from . import debug
from .complexity import complexity_batch
from .config import get_parallelism
from .datasets import Dataset, to_gray_levels, to_rgb
from .errors import ConfigError, DomainError, EmptyDatasetError, FrequencyMismatchError, NonFiniteError, ShapeError
from .frequency import FrequencyConfig
from .models.base import GenerativeModel

SCORERS = ("nll", "ic", "frl")
LABELS = ("ID", "OOD")
NLL_DENOMINATORS = ("input", "image")

_MP_CTX = multiprocessing.get_context("fork")


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: int
    dataset: str
    nll_bpd: float
    complexity_bpd: float
    score: float
    label: str | None = None


# =============================================================================
# Shared plumbing
# =============================================================================

def _unpack(x) -> tuple[str, np.ndarray]:
    if isinstance(x, Dataset):
        return x.name, x.images
    arr = np.asarray(x)
    return "", arr[None] if arr.ndim == 3 else arr


def _match_channels(images: np.ndarray, channels: int) -> np.ndarray:
    have = images.shape[-1]
    if have == channels:
        return images
    if have == 1 and channels == 3:
        return to_rgb(images)
    if have == 3 and channels == 1:
        return to_gray_levels(images)
    raise ShapeError(f"cannot adapt {have}-channel images to a {channels}-channel model")


def _check_freq(model: GenerativeModel, freq_cfg: FrequencyConfig | None):
    if freq_cfg is not None and freq_cfg.fingerprint() != model.spec.freq.fingerprint():
        raise FrequencyMismatchError(
            f"frequency config {freq_cfg.fingerprint()} does not match the model's "
            f"training config {model.spec.freq.fingerprint()}"
        )


def _nll_bpd(model: GenerativeModel, images: np.ndarray, *, k: int, seed: int, weight: float,
             nll_denominator: str) -> np.ndarray:
    if nll_denominator not in NLL_DENOMINATORS:
        raise ConfigError(f"scoring.nll_denominator must be one of {NLL_DENOMINATORS}, got {nll_denominator!r}")
    kwargs = {}
    if model.family == "vae":
        kwargs = {"k": k, "weight": weight}
    elif weight != 1.0:
        raise ConfigError(f"a high-frequency weight applies to VAE models only, not {model.family!r}")
    xq = model.spec.prepare(images)
    dims = model.spec.image_dims if nll_denominator == "image" else None
    return model.nll_bits(xq, seed=seed, dims=dims, **kwargs)


def _records(dataset: str, first_id: int, nll: np.ndarray, comp: np.ndarray) -> list[ScoreRecord]:
    scores = nll - comp
    if not np.all(np.isfinite(scores)):
        bad = int(np.flatnonzero(~np.isfinite(scores))[0])
        raise NonFiniteError(f"non-finite score for sample {first_id + bad} of {dataset or 'input'}")
    return [
        ScoreRecord(first_id + i, dataset, float(nll[i]), float(comp[i]), float(scores[i]))
        for i in range(len(scores))
    ]


# =============================================================================
# Scorers
# =============================================================================

def score_nll(model: GenerativeModel, x, freq_cfg: FrequencyConfig | None = None, *, k: int = 20,
              seed: int = 0, weight: float = 1.0, nll_denominator: str = "input",
              first_id: int = 0, **_) -> list[ScoreRecord]:
    """score = NLL of the model's own input; complexity is zero."""
    _check_freq(model, freq_cfg)
    name, images = _unpack(x)
    images = _match_channels(images, model.spec.channels)
    nll = _nll_bpd(model, images, k=k, seed=seed, weight=weight, nll_denominator=nll_denominator)
    return _records(name, first_id, nll, np.zeros_like(nll))


def score_ic(model: GenerativeModel, x, *, k: int = 20, seed: int = 0, complexity_weight: float = 1.0,
             nll_denominator: str = "input", first_id: int = 0, **_) -> list[ScoreRecord]:
    """score = NLL(x) - L(x), for a model trained on plain x."""
    if model.spec.freq.enabled:
        raise FrequencyMismatchError("the ic scorer needs a model trained on plain x, not x_F")
    name, images = _unpack(x)
    images = _match_channels(images, model.spec.channels)
    nll = _nll_bpd(model, images, k=k, seed=seed, weight=1.0, nll_denominator=nll_denominator)
    comp = complexity_batch(images) * complexity_weight
    return _records(name, first_id, nll, comp)


def score_frl(model: GenerativeModel, x, freq_cfg: FrequencyConfig | None = None, *, k: int = 20,
              seed: int = 0, weight: float = 1.0, complexity_weight: float = 1.0,
              nll_denominator: str = "input", first_id: int = 0, **_) -> list[ScoreRecord]:
    """score = NLL(x_F) - L(x), for a model trained on x_F with `freq_cfg`.

    `weight` scales the high-frequency channel's log-likelihood (VAE only).
    """
    if not model.spec.freq.enabled:
        raise FrequencyMismatchError("the frl scorer needs a frequency-trained model")
    _check_freq(model, freq_cfg)
    name, images = _unpack(x)
    images = _match_channels(images, model.spec.channels)
    nll = _nll_bpd(model, images, k=k, seed=seed, weight=weight, nll_denominator=nll_denominator)
    comp = complexity_batch(images) * complexity_weight
    return _records(name, first_id, nll, comp)


SCORER_FNS = {"nll": score_nll, "ic": score_ic, "frl": score_frl}


def check_compatible(scorer: str, model: GenerativeModel) -> None:
    """Fail before scoring when the scorer cannot use this model."""
    if scorer not in SCORER_FNS:
        raise ConfigError(f"unknown scorer {scorer!r}; expected one of {SCORERS}")
    if scorer == "frl" and not model.spec.freq.enabled:
        raise FrequencyMismatchError("scorer 'frl' requires a frequency-trained model")
    if scorer == "ic" and model.spec.freq.enabled:
        raise FrequencyMismatchError("scorer 'ic' requires a model trained on plain x")


# =============================================================================
# Parallel scoring
# =============================================================================

_job: tuple | None = None


def _score_chunk(bounds: tuple[int, int]) -> list[ScoreRecord]:
    fn, model, name, images, opts = _job
    start, stop = bounds
    return fn(model, Dataset(name, images[start:stop]), first_id=start, **opts)


def score_dataset(scorer: str, model: GenerativeModel, x, workers: int | None = None,
                  **opts) -> list[ScoreRecord]:
    """Score a dataset, forking `workers` processes over contiguous chunks.

    Records come back sorted by sample_id, so the worker count never changes
    the result.
    """
    global _job
    check_compatible(scorer, model)
    fn = SCORER_FNS[scorer]
    name, images = _unpack(x)
    if len(images) == 0:
        raise EmptyDatasetError(f"cannot score empty dataset {name!r}")
    workers = min(get_parallelism(workers), len(images))

    start = time.perf_counter()
    if workers <= 1:
        records = fn(model, Dataset(name, images), **opts)
    else:
        cuts = np.linspace(0, len(images), workers + 1).astype(int)
        bounds = [(int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
        _job = (fn, model, name, images, opts)
        try:
            with _MP_CTX.Pool(len(bounds)) as pool:
                parts = pool.map(_score_chunk, bounds)
        finally:
            _job = None
        records = sorted((r for part in parts for r in part), key=lambda r: r.sample_id)
    debug.log_scoring(name, scorer, len(records), time.perf_counter() - start)
    return records


# =============================================================================
# Decision rule
# =============================================================================

def label_records(records: list[ScoreRecord], label: str) -> list[ScoreRecord]:
    if label not in LABELS:
        raise DomainError(f"label must be one of {LABELS}, got {label!r}")
    return [replace(r, label=label) for r in records]


def threshold_classify(records, lam: float) -> list[str]:
    """score <= lam -> ID, else OOD. Accepts records or raw scores."""
    if math.isnan(lam):
        raise DomainError("threshold must not be NaN")
    scores = [r.score if isinstance(r, ScoreRecord) else float(r) for r in records]
    return ["ID" if s <= lam else "OOD" for s in scores]


def calibrate_threshold(id_scores, tpr: float = 0.95) -> float:
    """Smallest observed ID score with at least `tpr` of ID scores at or below it."""
    scores = np.asarray([r.score if isinstance(r, ScoreRecord) else r for r in id_scores], dtype=np.float64)
    if scores.size == 0:
        raise EmptyDatasetError("cannot calibrate a threshold without ID scores")
    if not 0 < tpr <= 1:
        raise DomainError(f"tpr must lie in (0, 1], got {tpr}")
    rank = max(math.ceil(tpr * scores.size - 1e-9), 1)
    return float(np.sort(scores)[rank - 1])


# =============================================================================
# Tables
# =============================================================================

def records_to_table(records: list[ScoreRecord]) -> pa.Table:
    return pa.table({
        "sample_id": pa.array([r.sample_id for r in records], pa.int64()),
        "dataset": pa.array([r.dataset for r in records], pa.string()),
        "label": pa.array([r.label for r in records], pa.string()),
        "nll_bpd": pa.array([r.nll_bpd for r in records], pa.float64()),
        "complexity_bpd": pa.array([r.complexity_bpd for r in records], pa.float64()),
        "score": pa.array([r.score for r in records], pa.float64()),
    })
