"""Adam with bias correction, updating numpy parameter arrays in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")


def adam_step(params: dict[str, np.ndarray], grads: dict, state: AdamState) -> dict[str, np.ndarray]:
    """One Adam update applied in place to every array in `params`.

    A parameter with no entry in `grads` is treated as having zero gradient,
    so its moments still decay.

    Returns:
        The same `params` dict, for chaining.

    Raises:
        ShapeError: a gradient (or stored moment) does not match its parameter.
    """
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else np.asarray(getattr(g, "data", g), dtype=p.dtype)
        if g.shape != p.shape:
            raise ShapeError(f"adam: gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeError(f"adam: moment for {name} has shape {state.m[name].shape}, parameter {p.shape}")

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else np.asarray(getattr(g, "data", g), dtype=p.dtype)
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params


def step_decay(base_lr: float, epoch: int, every: int, factor: float) -> float:
    """Learning rate for a 0-based epoch under step decay (`every` <= 0 disables)."""
    if every <= 0:
        return base_lr
    return base_lr * factor ** (epoch // every)
