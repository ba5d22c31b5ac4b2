"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Ops are plain functions: they compute the forward value with numpy and,
when a Tape is passed and some input requires gradients, append a backward
closure to the tape. Tape.backward(loss) seeds d(loss)/d(loss) = 1 and
replays the closures in reverse recording order; each closure reads the
upstream gradient from its output tensor and += accumulates into its
inputs, so values reused along several paths sum their contributions.

Only first-order gradients are supported: backward closures work on raw
numpy arrays and are not themselves recorded.

Array layout conventions used by the ops:
  - 1-D time series ops (conv1d, maxpool1d, upsample_nn, layer_norm) take
    [channels, length] or [batch, channels, length]; time is the last axis.
  - affine works on column vectors: [features] or [features, columns].
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .errors import ConfigError, DimensionError, NumericError
from .rng import Rng

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A numpy array plus an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class Tape:
    """Execution-ordered record of backward closures."""

    def __init__(self):
        self._records: list[tuple[str, Callable[[], None]]] = []

    def record(self, name: str, fn: Callable[[], None]) -> None:
        self._records.append((name, fn))

    def __len__(self) -> int:
        return len(self._records)

    @property
    def op_names(self) -> list[str]:
        return [name for name, _ in self._records]

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into every recorded tensor's .grad."""
        if loss.data.size != 1:
            raise DimensionError(
                f"backward needs a scalar loss, got shape {loss.data.shape}"
            )
        if not np.all(np.isfinite(loss.data)):
            raise NumericError("backward called on a non-finite loss")
        loss.grad = np.ones_like(loss.data)
        for _, fn in reversed(self._records):
            fn()


def _wants_grad(tape: Optional[Tape], *tensors: Tensor) -> bool:
    return tape is not None and any(t.requires_grad for t in tensors)


def _grad_of(out: Tensor) -> np.ndarray:
    # An output never read downstream contributes zero gradient.
    if out.grad is None:
        return np.zeros_like(out.data)
    return out.grad


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """+= into t.grad, creating it on first touch. Cast to t's dtype."""
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if g.shape != t.data.shape:
        raise DimensionError(
            f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
        )
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise / glue ops


def add(a: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            accumulate(a, g)
            accumulate(b, g)
        tape.record("add", backward)
    return out


def scale(a: Tensor, c: float, tape: Optional[Tape] = None) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)
    out = Tensor(a.data * np.asarray(c, dtype=a.dtype), requires_grad=_wants_grad(tape, a))
    if out.requires_grad:
        def backward():
            accumulate(a, _grad_of(out) * c)
        tape.record("scale", backward)
    return out


def wsum(x: Tensor, weights, tape: Optional[Tape] = None) -> Tensor:
    """Scalar-valued weighted sum sum(x * weights); weights are constant."""
    wd = np.asarray(weights, dtype=x.dtype)
    if wd.shape != x.data.shape:
        raise DimensionError(f"wsum weights {wd.shape} vs x {x.data.shape}")
    out = Tensor(np.sum(x.data * wd), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            accumulate(x, _grad_of(out) * wd)
        tape.record("wsum", backward)
    return out


def affine(x: Tensor, w: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """w @ x + b. x is [in] or [in, cols]; w is [out, in]; b is [out]."""
    xd, wd, bd = x.data, w.data, b.data
    if wd.ndim != 2 or bd.ndim != 1 or xd.ndim not in (1, 2):
        raise DimensionError(
            f"affine expects x 1-D/2-D, w 2-D, b 1-D; got {x.shape}, {w.shape}, {b.shape}"
        )
    if wd.shape[1] != xd.shape[0] or wd.shape[0] != bd.shape[0]:
        raise DimensionError(
            f"affine shapes incompatible: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    y = wd @ xd
    y += bd if xd.ndim == 1 else bd[:, None]
    out = Tensor(y, requires_grad=_wants_grad(tape, x, w, b))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            if x.requires_grad:
                accumulate(x, wd.T @ g)
            if w.requires_grad:
                accumulate(w, np.outer(g, xd) if xd.ndim == 1 else g @ xd.T)
            if b.requires_grad:
                accumulate(b, g if xd.ndim == 1 else g.sum(axis=1))
        tape.record("affine", backward)
    return out


def sine(x: Tensor, omega0: float = 1.0, tape: Optional[Tape] = None) -> Tensor:
    """sin(omega0 * x), elementwise."""
    omega0 = float(omega0)
    if omega0 <= 0:
        raise ConfigError(f"omega0 must be positive, got {omega0}")
    w = np.asarray(omega0, dtype=x.dtype)
    arg = w * x.data
    out = Tensor(np.sin(arg), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            accumulate(x, _grad_of(out) * w * np.cos(arg))
        tape.record("sine", backward)
    return out


def gelu(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF, no tanh shortcut."""
    xd = x.data
    cdf = ndtr(xd)
    out = Tensor(xd * cdf, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            pdf = np.exp(np.asarray(-0.5, dtype=xd.dtype) * xd * xd)
            pdf *= np.asarray(1.0 / np.sqrt(2.0 * np.pi), dtype=xd.dtype)
            accumulate(x, _grad_of(out) * (cdf + xd * pdf))
        tape.record("gelu", backward)
    return out


def dropout(x: Tensor, rate: float, mode: str, rng: Optional[Rng] = None,
            tape: Optional[Tape] = None) -> Tensor:
    """Inverted dropout. Identity in eval mode; scales kept units by 1/(1-rate)."""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x  # bitwise identity, nothing recorded
    if rng is None:
        raise ConfigError("train-mode dropout needs an Rng")
    keep = (rng.uniform(size=x.data.shape) >= rate)
    m = keep.astype(x.dtype)
    m *= np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    out = Tensor(x.data * m, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            accumulate(x, _grad_of(out) * m)
        tape.record("dropout", backward)
    return out


# ---------------------------------------------------------------------------
# time-axis ops


def _as_batched(xd: np.ndarray, op: str) -> tuple[np.ndarray, bool]:
    if xd.ndim == 2:
        return xd[None], True
    if xd.ndim == 3:
        return xd, False
    raise DimensionError(f"{op} expects [C, L] or [B, C, L], got shape {xd.shape}")


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor,
           tape: Optional[Tape] = None) -> Tensor:
    """'Same' 1-D cross-correlation, stride 1, zero padding, odd kernel width.

    x: [C_in, L] or [B, C_in, L]; kernels: [C_out, C_in, K]; bias: [C_out].
    Implemented as one GEMM over im2col patches; the patch matrix is kept
    for the backward pass when the kernels need a gradient, since rebuilding
    it costs a full extra copy of the padded input.
    """
    xd = x.data
    kd, bd = kernels.data, bias.data
    if kd.ndim != 3 or bd.ndim != 1:
        raise DimensionError(
            f"conv1d expects kernels [C_out, C_in, K] and bias [C_out]; "
            f"got {kernels.shape}, {bias.shape}"
        )
    x3, squeezed = _as_batched(xd, "conv1d")
    c_out, c_in, k = kd.shape
    if k % 2 == 0 or k < 1:
        raise ConfigError(f"kernel width must be odd and positive, got {k}")
    if x3.shape[1] != c_in or bd.shape[0] != c_out:
        raise DimensionError(
            f"conv1d channel mismatch: x {xd.shape}, kernels {kd.shape}, bias {bd.shape}"
        )
    nb, _, length = x3.shape
    pad = (k - 1) // 2
    xp = np.pad(x3, ((0, 0), (0, 0), (pad, pad))) if pad else x3

    def patch_matrix() -> np.ndarray:
        win = sliding_window_view(xp, k, axis=2)          # [B, C_in, L, K]
        return win.transpose(1, 3, 0, 2).reshape(c_in * k, nb * length)

    w2 = kd.reshape(c_out, c_in * k)
    needs = _wants_grad(tape, x, kernels, bias)
    patches = patch_matrix() if needs and kernels.requires_grad else None
    ymat = w2 @ (patch_matrix() if patches is None else patches)
    ymat += bd[:, None]
    y = ymat.reshape(c_out, nb, length).transpose(1, 0, 2)
    if squeezed:
        y = y[0]
    out = Tensor(y, requires_grad=needs)
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            g3 = g[None] if squeezed else g
            gmat = g3.transpose(1, 0, 2).reshape(c_out, nb * length)
            if bias.requires_grad:
                accumulate(bias, gmat.sum(axis=1))
            if kernels.requires_grad:
                accumulate(kernels, (gmat @ patches.T).reshape(c_out, c_in, k))
            if x.requires_grad:
                dp = (w2.T @ gmat).reshape(c_in, k, nb, length)
                dxp = np.zeros_like(xp)
                for i in range(k):
                    dxp[:, :, i:i + length] += dp[:, i].transpose(1, 0, 2)
                dx = dxp[:, :, pad:pad + length] if pad else dxp
                accumulate(x, dx[0] if squeezed else dx)
        tape.record("conv1d", backward)
    return out


def maxpool1d(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """Window-2, stride-2 max over the time axis. Ties route to the earlier sample."""
    xd = x.data
    _as_batched(xd, "maxpool1d")
    length = xd.shape[-1]
    if length % 2 != 0 or length == 0:
        raise DimensionError(f"maxpool1d needs even positive length, got {length}")
    xr = xd.reshape(xd.shape[:-1] + (length // 2, 2))
    idx = xr.argmax(axis=-1)  # first max wins ties
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    out = Tensor(y, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            dxr = np.zeros_like(xr)
            np.put_along_axis(dxr, idx[..., None], g[..., None], axis=-1)
            accumulate(x, dxr.reshape(xd.shape))
        tape.record("maxpool1d", backward)
    return out


def upsample_nn(x: Tensor, factor: int = 2, tape: Optional[Tape] = None) -> Tensor:
    """Nearest-neighbour repeat along the time axis."""
    factor = int(factor)
    if factor < 1:
        raise ConfigError(f"upsample factor must be >= 1, got {factor}")
    xd = x.data
    _as_batched(xd, "upsample_nn")
    out = Tensor(np.repeat(xd, factor, axis=-1), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            gr = g.reshape(g.shape[:-1] + (xd.shape[-1], factor))
            accumulate(x, gr.sum(axis=-1))
        tape.record("upsample_nn", backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5,
               tape: Optional[Tape] = None) -> Tensor:
    """Normalize across the channel axis independently at each time sample.

    x: [C, L] or [B, C, L]; gain/shift: [C]. eps sits inside the sqrt.
    """
    xd = x.data
    _as_batched(xd, "layer_norm")
    c = xd.shape[-2]
    if gain.data.shape != (c,) or shift.data.shape != (c,):
        raise DimensionError(
            f"layer_norm gain/shift must be [{c}], got {gain.shape}, {shift.shape}"
        )
    if c < 2:
        raise DimensionError("layer_norm needs at least 2 channels")
    mu = xd.mean(axis=-2, keepdims=True)
    var = xd.var(axis=-2, keepdims=True)
    sig = np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = (xd - mu) / sig
    gcol = gain.data[:, None]
    y = gcol * xhat + shift.data[:, None]
    out = Tensor(y, requires_grad=_wants_grad(tape, x, gain, shift))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            reduce_axes = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
            if shift.requires_grad:
                accumulate(shift, g.sum(axis=reduce_axes))
            if gain.requires_grad:
                accumulate(gain, (g * xhat).sum(axis=reduce_axes))
            if x.requires_grad:
                gh = g * gcol
                dx = (gh - gh.mean(axis=-2, keepdims=True)
                      - xhat * (gh * xhat).mean(axis=-2, keepdims=True)) / sig
                accumulate(x, dx)
        tape.record("layer_norm", backward)
    return out


# ---------------------------------------------------------------------------
# layout bridges between the column-vector world (affine/sine) and the
# [batch, channel, time] world (conv stacks)


def batch_to_columns(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """[B, C, L] -> [C, B*L]: every time sample of every item becomes a column."""
    xd = x.data
    if xd.ndim != 3:
        raise DimensionError(f"batch_to_columns expects [B, C, L], got {xd.shape}")
    nb, c, length = xd.shape
    out = Tensor(xd.transpose(1, 0, 2).reshape(c, nb * length),
                 requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            accumulate(x, g.reshape(c, nb, length).transpose(1, 0, 2))
        tape.record("batch_to_columns", backward)
    return out


def columns_to_batch(x: Tensor, n_batch: int, tape: Optional[Tape] = None) -> Tensor:
    """[C, B*L] -> [B, C, L]; inverse of batch_to_columns."""
    xd = x.data
    if xd.ndim != 2 or xd.shape[1] % n_batch != 0:
        raise DimensionError(
            f"columns_to_batch: shape {xd.shape} not splittable into {n_batch} items"
        )
    c = xd.shape[0]
    length = xd.shape[1] // n_batch
    out = Tensor(xd.reshape(c, n_batch, length).transpose(1, 0, 2),
                 requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def backward():
            g = _grad_of(out)
            accumulate(x, g.transpose(1, 0, 2).reshape(c, n_batch * length))
        tape.record("columns_to_batch", backward)
    return out
