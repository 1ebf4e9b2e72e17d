"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Usage:
    w = Tensor(np.zeros((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = tensor.mean(tensor.matmul(x, w))
    grads = tape.gradient(loss)        # {node_id: ndarray}
    grads[w.node_id]

Recording model:
- One `Tape` per training step. Entering it makes it the active tape for the
  current context (a ContextVar, so worker threads do not share it).
- An op is recorded only when a tape is active and at least one input is
  tracked: a `requires_grad` leaf, or the output of an earlier recorded op.
- Outside any tape nothing is recorded; frozen models score this way.
- `node_id` is a handle into the tape that recorded the tensor and is None
  for constants. Leaves get a fresh id on every tape that watches them.
- `gradient()` walks the records once in reverse order, summing gradients
  for shared subexpressions, then marks the tape consumed.

Every forward op checks its output for NaN/Inf and raises NonFiniteError.
"""

from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, NonFiniteError, ShapeError, TapeError

_active_tape: ContextVar["Tape | None"] = ContextVar("active_tape", default=None)


# =============================================================================
# Tape
# =============================================================================

@dataclass
class _Record:
    op: str
    inputs: tuple[int | None, ...]
    output: int
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tape:
    """Ordered record of differentiable ops for one backward pass."""

    def __init__(self):
        self.records: list[_Record] = []
        self.leaves: dict[int, Tensor] = {}
        self._next_id = 0
        self._consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        if _active_tape.get() is not None:
            raise TapeError("a tape is already active in this context")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> bool:
        _active_tape.reset(self._token)
        self._token = None
        return False

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def watch(self, t: "Tensor") -> int:
        """Register a leaf tensor on this tape and return its node id."""
        if t._tape is self and t.node_id is not None:
            return t.node_id
        nid = self._new_id()
        t.node_id = nid
        t._tape = self
        self.leaves[nid] = t
        return nid

    def node_of(self, t: "Tensor") -> int | None:
        """Node id of `t` on this tape, watching trainable leaves on first use."""
        if t._tape is self and t.node_id is not None:
            return t.node_id
        if t.requires_grad:
            return self.watch(t)
        return None

    def record(self, op: str, inputs: tuple[int | None, ...], out: "Tensor", backward) -> int:
        if self._consumed:
            raise TapeError("cannot record on a consumed tape")
        nid = self._new_id()
        out.node_id = nid
        out._tape = self
        self.records.append(_Record(op, inputs, nid, backward))
        return nid

    def gradient(self, loss: "Tensor") -> dict[int, np.ndarray]:
        """Back-propagate from a scalar loss.

        Returns:
            Dict node_id -> gradient array for the loss node and every leaf
            the loss depends on.

        Raises:
            TapeError: loss not scalar, not recorded here, or tape consumed.
        """
        if self._consumed:
            raise TapeError("tape already consumed; record a new one per step")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self or loss.node_id is None:
            raise TapeError("loss was not recorded on this tape")

        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        keep = set(self.leaves) | {loss.node_id}
        for rec in reversed(self.records):
            g = grads.get(rec.output)
            if g is None:
                continue
            if rec.output not in keep:
                del grads[rec.output]
            for nid, ig in zip(rec.inputs, rec.backward(g)):
                if nid is None or ig is None:
                    continue
                prev = grads.get(nid)
                grads[nid] = ig if prev is None else prev + ig
        self._consumed = True
        return {nid: g for nid, g in grads.items() if nid in keep}

    def gradients_for(self, loss: "Tensor", params: dict[str, "Tensor"]) -> dict[str, np.ndarray]:
        """Gradient per named parameter; zeros for parameters the loss ignores."""
        by_node = self.gradient(loss)
        out = {}
        for name, p in params.items():
            g = by_node.get(p.node_id) if p._tape is self else None
            out[name] = np.zeros_like(p.data) if g is None else g
        return out


def backward(loss: "Tensor") -> dict[int, "Tensor"]:
    """Gradient map node_id -> Tensor for the tape that recorded `loss`."""
    if loss._tape is None:
        raise TapeError("loss is a constant; nothing was recorded")
    return {nid: Tensor(g) for nid, g in loss._tape.gradient(loss).items()}


# =============================================================================
# Tensor
# =============================================================================

class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "_tape", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a constant scalar")
        return mul(self, 1.0 / other)


# =============================================================================
# Plumbing
# =============================================================================

def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None and np.isscalar(x):
        return Tensor(np.asarray(x, dtype=like.dtype))
    return Tensor(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    ta = a if isinstance(a, Tensor) else None
    tb = b if isinstance(b, Tensor) else None
    return _as_tensor(a, tb), _as_tensor(b, ta)


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward) -> Tensor:
    if not np.isfinite(out_data).all():
        raise NonFiniteError(f"{op}: produced non-finite values")
    out = Tensor(out_data)
    tape = _active_tape.get()
    if tape is None:
        return out
    ids = tuple(tape.node_of(t) for t in inputs)
    if any(i is not None for i in ids):
        tape.record(op, ids, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


# =============================================================================
# Elementwise arithmetic
# =============================================================================

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    return _emit("mul", (a, b), a.data * b.data,
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", (a, b), a.data @ b.data,
                 lambda g: (g @ b.data.T, a.data.T @ g))


# =============================================================================
# Nonlinearities
# =============================================================================

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit("relu", (x,), np.where(mask, x.data, 0).astype(x.dtype), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit("tanh", (x,), y, lambda g: (g * (1 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))
    y = y.astype(x.dtype, copy=False)
    return _emit("sigmoid", (x,), y, lambda g: (g * y * (1 - y),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _emit("exp", (x,), y, lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log: input has non-positive values")
    return _emit("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data > lo) & (x.data < hi)
    return _emit("clip", (x,), np.clip(x.data, lo, hi), lambda g: (g * inside,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax_logits", (x,), y, _backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def _backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", (x,), y, _backward)


# =============================================================================
# Reductions
# =============================================================================

def _restore_axes(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    return _emit("sum", (x,), out,
                 lambda g: (np.array(_restore_axes(g, x.shape, axis, keepdims)),))


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.data.size // max(out.size, 1) if axis is not None or keepdims else x.data.size
    return _emit("mean", (x,), out,
                 lambda g: (np.array(_restore_axes(g, x.shape, axis, keepdims)) / count,))


# =============================================================================
# Shape manipulation
# =============================================================================

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from e
    return _emit("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def concat_channels(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat_channels: incompatible shapes {ref} and {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _emit("concat_channels", tuple(tensors), out,
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice(x: Tensor, key) -> Tensor:  # noqa: A001
    """Basic (non-fancy) slicing; `key` is anything numpy basic indexing accepts."""
    if not isinstance(key, tuple):
        key = (key,)
    if any(isinstance(k, (list, np.ndarray)) for k in key):
        raise ShapeError("slice: only basic slicing is supported; use gather")
    out = x.data[key]

    def _backward(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _emit("slice", (x,), np.array(out), _backward)


def _reflect_index(n: int, pad: int) -> np.ndarray:
    return np.pad(np.arange(n), pad, mode="reflect")


def pad_reflect(x: Tensor, pad: int) -> Tensor:
    """Reflect-pad the last two axes by `pad` (edge sample not repeated)."""
    if pad == 0:
        return x
    h, w = x.shape[-2:]
    if h < 2 or w < 2:
        raise ShapeError(f"pad_reflect: spatial dims {h}x{w} too small to reflect")
    ih, iw = _reflect_index(h, pad), _reflect_index(w, pad)
    out = np.take(np.take(x.data, ih, axis=-2), iw, axis=-1)
    sel_h = np.zeros((ih.size, h), dtype=x.dtype)
    sel_h[np.arange(ih.size), ih] = 1
    sel_w = np.zeros((iw.size, w), dtype=x.dtype)
    sel_w[np.arange(iw.size), iw] = 1
    return _emit("pad_reflect", (x,), out,
                 lambda g: (np.einsum("ph,...pq,qw->...hw", sel_h, g, sel_w),))


def gather(x: Tensor, index: np.ndarray, axis: int) -> Tensor:
    """Pick entries along `axis` (np.take_along_axis); gradients accumulate on repeats."""
    index = np.asarray(index)
    axis = axis % x.ndim
    if index.ndim != x.ndim or any(
        index.shape[d] != x.shape[d] for d in range(x.ndim) if d != axis
    ):
        raise ShapeError(f"gather: index shape {index.shape} does not match {x.shape} off axis {axis}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[axis]):
        raise DomainError(f"gather: index outside 0..{x.shape[axis] - 1}")
    out = np.take_along_axis(x.data, index, axis=axis)

    def _backward(g):
        gx = np.zeros_like(x.data)
        grid = list(np.indices(index.shape, sparse=True))
        grid[axis] = index
        np.add.at(gx, tuple(grid), g)
        return (gx,)

    return _emit("gather", (x,), out, _backward)


# =============================================================================
# Convolutions (NCHW)
# =============================================================================

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> windows (N, C, Ho, Wo, kh, kw)."""
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _col2im(cols: np.ndarray, shape: tuple[int, ...], stride: int) -> np.ndarray:
    """Adjoint of _im2col: cols (N, C, Ho, Wo, kh, kw) summed back into `shape`."""
    _, _, ho, wo, kh, kw = cols.shape
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, :, :, i, j]
    return out


def _check_conv(op: str, x: Tensor, stride: int) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected NCHW input, got shape {x.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"{op}: stride must be 1 or 2, got {stride}")


def conv2d(
    x: Tensor,
    w: Tensor,
    stride: int = 1,
    padding: int = 0,
    pad_mode: str = "zero",
    mask: np.ndarray | None = None,
) -> Tensor:
    """2-D cross-correlation. w is (C_out, C_in, kh, kw).

    `mask`, when given, is multiplied into the weights on every call (masked
    convolutions); masked weights receive zero gradient.
    """
    _check_conv("conv2d", x, stride)
    if w.ndim != 4 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d: weight {w.shape} does not match input {x.shape}")
    if pad_mode not in ("zero", "reflect"):
        raise ShapeError(f"conv2d: unknown pad_mode {pad_mode!r}")
    if padding and pad_mode == "reflect":
        x = pad_reflect(x, padding)
        padding = 0

    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
    w_eff = w.data if mask is None else w.data * mask
    windows = _im2col(xp, kh, kw, stride)
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    w_mat = w_eff.reshape(o, -1)
    out = (cols @ w_mat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def _backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (g2.T @ cols).reshape(w.shape)
        if mask is not None:
            gw = gw * mask
        dcols = (g2 @ w_mat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        gxp = _col2im(dcols, xp.shape, stride)
        return gxp[:, :, padding:padding + h, padding:padding + wd], gw

    return _emit("conv2d", (x, w), np.ascontiguousarray(out), _backward)


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Transposed convolution (adjoint of conv2d). w is (C_in, C_out, kh, kw).

    Output size per axis: (n - 1) * stride - 2 * padding + k + output_padding.
    """
    _check_conv("conv_transpose2d", x, stride)
    if w.ndim != 4 or w.shape[0] != x.shape[1]:
        raise ShapeError(f"conv_transpose2d: weight {w.shape} does not match input {x.shape}")
    if not 0 <= output_padding < stride and output_padding != 0:
        raise ShapeError("conv_transpose2d: output_padding must be smaller than stride")

    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    full_h, full_w = (h - 1) * stride + kh, (wd - 1) * stride + kw
    out_h = full_h - 2 * padding + output_padding
    out_w = full_w - 2 * padding + output_padding
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"conv_transpose2d: empty output for input {x.shape}")
    ext_h, ext_w = max(full_h, padding + out_h), max(full_w, padding + out_w)

    w_mat = w.data.reshape(cin, cout * kh * kw)
    x_flat = x.data.transpose(0, 2, 3, 1).reshape(n * h * wd, cin)
    cols = (x_flat @ w_mat).reshape(n, h, wd, cout, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    full = np.zeros((n, cout, ext_h, ext_w), dtype=cols.dtype)
    full[:, :, :full_h, :full_w] = _col2im(cols, (n, cout, full_h, full_w), stride)
    out = full[:, :, padding:padding + out_h, padding:padding + out_w]

    def _backward(g):
        g_ext = np.zeros((n, cout, ext_h, ext_w), dtype=g.dtype)
        g_ext[:, :, padding:padding + out_h, padding:padding + out_w] = g
        windows = _im2col(g_ext[:, :, :full_h, :full_w], kh, kw, stride)
        dcols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, cout * kh * kw)
        gx = (dcols @ w_mat.T).reshape(n, h, wd, cin).transpose(0, 3, 1, 2)
        gw = (x_flat.T @ dcols).reshape(w.shape)
        return np.ascontiguousarray(gx), gw

    return _emit("conv_transpose2d", (x, w), np.ascontiguousarray(out), _backward)


# =============================================================================
# Named dispatch
# =============================================================================

_OPS: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "matmul": matmul,
    "conv2d": conv2d,
    "conv_transpose2d": conv_transpose2d,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "clip": clip,
    "softmax_logits": softmax,
    "log_softmax": log_softmax,
    "sum": sum,
    "mean": mean,
    "reshape": reshape,
    "concat_channels": lambda *ts, **kw: concat_channels(ts, **kw),
    "slice": slice,
    "pad_reflect": pad_reflect,
    "gather": gather,
}


def forward_op(name: str, *inputs, **attrs) -> Tensor:
    """Run the op called `name`; records it on the active tape when any input is tracked."""
    try:
        fn = _OPS[name]
    except KeyError:
        raise ValueError(f"unknown op {name!r}; known: {sorted(_OPS)}") from None
    return fn(*inputs, **attrs)
