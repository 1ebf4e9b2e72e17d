"""Mini-batch Adam training loop shared by all model families."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .. import debug
from ..errors import ConfigError, EmptyDatasetError, NonFiniteError, TrainingDivergedError
from ..optim import AdamState, adam_step, step_decay
from ..tensor import Tape
from .base import GenerativeModel


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float | None = None  # None: 1e-3 for the VAE, 5e-4 for flow / AR
    lr_decay_every: int = 30
    lr_decay_factor: float = 0.5
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        return self


DEFAULT_LR = {"vae": 1e-3, "flow": 5e-4, "ar": 5e-4}


@dataclass
class TrainResult:
    model: GenerativeModel  # frozen float64 copy for scoring
    trained: GenerativeModel  # float32 parameters as trained (checkpointed)
    loss_curve: list[float]
    seconds: float


def train(model: GenerativeModel, data: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Train `model` on quantized input `data` (N, H, W, C_tot).

    Records the mean training loss (bits/dim) per epoch. Deterministic for a
    fixed seed in a single execution context.

    Raises:
        EmptyDatasetError: no training samples.
        TrainingDivergedError: a non-finite loss, with epoch and batch (1-based).
    """
    cfg.validate()
    data = model.check_input(data)
    n = data.shape[0]
    if n == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")

    base_lr = cfg.lr or DEFAULT_LR.get(model.family, 1e-3)
    state = AdamState(lr=base_lr)
    rng = np.random.default_rng(cfg.seed)
    batches = math.ceil(n / cfg.batch_size)
    curve: list[float] = []
    start = time.perf_counter()

    print(f"Training {model.family} on {n:,} samples ({cfg.epochs} epochs, {batches} batches/epoch)...")
    for epoch in range(cfg.epochs):
        state.lr = step_decay(base_lr, epoch, cfg.lr_decay_every, cfg.lr_decay_factor)
        order = rng.permutation(n)
        total = 0.0
        for b in range(batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            try:
                with Tape() as tape:
                    loss = model.training_loss(data[idx], rng)
                value = loss.item()
            except NonFiniteError:
                raise TrainingDivergedError(epoch + 1, b + 1, float("nan")) from None
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch + 1, b + 1, value)
            grads = tape.gradients_for(loss, model.params)
            adam_step(model.state_dict(), grads, state)
            total += value * len(idx)
            debug.log_train_step(epoch + 1, b + 1, value, state.lr)
        curve.append(total / n)
        print(f"  epoch {epoch + 1}/{cfg.epochs}: {curve[-1]:.4f} bits/dim (lr {state.lr:.2e})")

    seconds = time.perf_counter() - start
    model.trained = True
    return TrainResult(model=model.freeze(), trained=model, loss_curve=curve, seconds=seconds)
