"""Dense real tensors with reverse-mode automatic differentiation.

Everything downstream (attention, networks, losses) is composed from the
operations in this module. Arrays use the row-major batch x channels x
height x width layout throughout. Each operation records a backward closure;
``backward(loss)`` replays the recorded tape in exact reverse execution
order, accumulating ``.grad`` on every tensor that requires it.
"""

from __future__ import annotations

import contextlib
import itertools
import threading

import numpy as np

from .errors import ContractError, GraphError, NumericError, ShapeError

__all__ = [
    "Tensor", "tensor", "zeros", "ones", "randn", "backward", "no_grad",
    "set_default_dtype", "default_dtype", "set_finite_checks",
    "add", "sub", "mul", "scale", "relu", "lrelu", "tanh", "sigmoid",
    "log", "absolute", "clip", "matmul", "conv2d", "softmax",
    "mean", "sum", "l1_norm", "instance_norm", "adaptive_instance_norm",
    "upsample_nearest2x", "reshape", "transpose", "narrow",
    "global_avg_pool", "linear",
]

_DEFAULT_DTYPE = np.float32
_SEQ = itertools.count()


class _Mode(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.finite_checks = True


_mode = _Mode()


def set_default_dtype(dtype):
    """Set the float width used when tensors are created without an explicit dtype."""
    global _DEFAULT_DTYPE
    if np.dtype(dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError("default dtype must be float32 or float64")
    _DEFAULT_DTYPE = np.dtype(dtype).type


def default_dtype():
    return _DEFAULT_DTYPE


def set_finite_checks(enabled: bool):
    """Toggle the NaN/Inf guard applied to every forward result."""
    _mode.finite_checks = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Run forward computations without recording backward closures."""
    prev = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = prev


class Tensor:
    """An n-d float array, optionally a recorded node of the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_seq", "_consumed", "_backward_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise ContractError("wrap raw array data, not another Tensor")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._seq = next(_SEQ)
        self._consumed = False
        self._backward_done = False

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the tape."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape):
        return reshape(self, shape)

    def sum(self):
        return sum(self)

    def mean(self):
        return mean(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad=requires_grad)


def randn(rng: np.random.Generator, shape, requires_grad: bool = False, dtype=None) -> Tensor:
    data = rng.standard_normal(shape).astype(dtype or _DEFAULT_DTYPE)
    return Tensor(data, requires_grad=requires_grad)


# -- tape plumbing -------------------------------------------------------------

def _finite_guard(op: str, arr: np.ndarray):
    if _mode.finite_checks and arr.size:
        # min/max propagate NaN and catch +/-inf without a boolean temporary
        if not (np.isfinite(arr.min()) and np.isfinite(arr.max())):
            raise NumericError(f"{op} produced non-finite values")


def _result(op: str, data: np.ndarray, parents, backward_fn) -> Tensor:
    _finite_guard(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._seq = next(_SEQ)
    out._consumed = False
    out._backward_done = False
    if _mode.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _accum(t: Tensor, g: np.ndarray):
    """Accumulate a gradient contribution; first write copies to own the buffer."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor):
    """Backpropagate from a scalar loss through the recorded tape.

    Visits recorded operations in exact reverse execution order, so every
    tensor's gradient is complete before its own backward closure runs. A
    second call through the same forward pass raises ``GraphError``.
    """
    if loss.data.size != 1:
        raise ContractError("backward requires a scalar loss")
    if not loss.requires_grad:
        raise ContractError("loss does not require gradients")
    if loss._backward_done:
        raise GraphError("backward already ran for this loss; re-run the forward pass")

    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t._consumed:
            raise GraphError("graph segment already backpropagated; re-run the forward pass")
        if t._backward_fn is not None:
            nodes.append(t)
            stack.extend(t._parents)

    loss.grad = np.ones_like(loss.data)
    for t in sorted(nodes, key=lambda n: n._seq, reverse=True):
        if t.grad is None:
            continue  # recorded but not on a path that received gradient
        t._backward_fn(t.grad)
        t._backward_fn = None
        t._consumed = True
    loss._backward_done = True


# -- elementwise family ----------------------------------------------------------

def _as_operands(op: str, a, b):
    """Resolve binary operands: equal shapes, or one side scalar (python or size-1)."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise ContractError(f"{op} needs at least one Tensor operand")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if a.data.dtype != b.data.dtype:
        raise ContractError(f"{op}: mixed dtypes {a.data.dtype} and {b.data.dtype}")
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not match")
    return a, b


def _fit(g: np.ndarray, t: Tensor) -> np.ndarray:
    """Reduce a broadcast gradient back to a size-1 operand's shape."""
    if g.shape == t.data.shape:
        return g
    return g.sum(dtype=t.data.dtype).reshape(t.data.shape)


def add(a, b) -> Tensor:
    a, b = _as_operands("add", a, b)
    data = a.data + b.data

    def bw(g):
        _accum(a, _fit(g, a))
        _accum(b, _fit(g, b))

    return _result("add", data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_operands("sub", a, b)
    data = a.data - b.data

    def bw(g):
        _accum(a, _fit(g, a))
        _accum(b, _fit(-g, b))

    return _result("sub", data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_operands("mul", a, b)
    data = a.data * b.data

    def bw(g):
        _accum(a, _fit(g * b.data, a))
        _accum(b, _fit(g * a.data, b))

    return _result("mul", data, (a, b), bw)


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    data = x.data * np.asarray(s, dtype=x.data.dtype)

    def bw(g):
        _accum(x, g * np.asarray(s, dtype=x.data.dtype))

    return _result("scale", data, (x,), bw)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)

    def bw(g):
        _accum(x, g * (x.data > 0))

    return _result("relu", data, (x,), bw)


def lrelu(x: Tensor, slope: float = 0.2) -> Tensor:
    data = np.where(x.data >= 0, x.data, x.data * x.data.dtype.type(slope))

    def bw(g):
        _accum(x, g * np.where(x.data >= 0, x.data.dtype.type(1), x.data.dtype.type(slope)))

    return _result("lrelu", data, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1 - data * data))

    return _result("tanh", data, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    data = np.empty_like(xd)
    pos = xd >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accum(x, g * data * (1 - data))

    return _result("sigmoid", data, (x,), bw)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log of non-positive value")
    data = np.log(x.data)

    def bw(g):
        _accum(x, g / x.data)

    return _result("log", data, (x,), bw)


def absolute(x: Tensor) -> Tensor:
    data = np.abs(x.data)

    def bw(g):
        _accum(x, g * np.sign(x.data))

    return _result("absolute", data, (x,), bw)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    data = np.clip(x.data, lo, hi)

    def bw(g):
        _accum(x, g * ((x.data > lo) & (x.data < hi)))

    return _result("clip", data, (x,), bw)


# -- reductions ------------------------------------------------------------------

def mean(x: Tensor) -> Tensor:
    data = np.asarray(x.data.mean(), dtype=x.data.dtype)
    n = x.data.size

    def bw(g):
        _accum(x, np.broadcast_to(g / n, x.data.shape))

    return _result("mean", data, (x,), bw)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - deliberate, numpy-style module function
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bw(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _result("sum", data, (x,), bw)


def l1_norm(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; both operands must have identical shapes."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_norm: shapes {a.shape} and {b.shape} do not match")
    return mean(absolute(sub(a, b)))


# -- linear algebra ----------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.dtype != bd.dtype:
        raise ContractError(f"matmul: mixed dtypes {ad.dtype} and {bd.dtype}")
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: inner dims {ad.shape} x {bd.shape}")
    elif ad.ndim == 3 and bd.ndim == 3:
        if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
            raise ShapeError(f"matmul: batched dims {ad.shape} x {bd.shape}")
    else:
        raise ShapeError(f"matmul supports 2-d or batched 3-d operands, got {ad.shape} x {bd.shape}")
    data = ad @ bd

    def bw(g):
        if ad.ndim == 2:
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        else:
            _accum(a, g @ bd.transpose(0, 2, 1))
            _accum(b, ad.transpose(0, 2, 1) @ g)

    return _result("matmul", data, (a, b), bw)


def _im2col(arr: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather conv patches of a (b, c, h, w) array into (b, c*kh*kw, oh*ow)."""
    b, c = arr.shape[:2]
    sb, sc, sh, sw = arr.strides
    cols = np.lib.stride_tricks.as_strided(
        arr, (b, c, kh, kw, oh, ow), (sb, sc, sh, sw, sh * stride, sw * stride))
    return cols.reshape(b, c * kh * kw, oh * ow)  # copies into contiguous layout


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map rows(x) @ w + b with x: (n, i), w: (i, o), b: (o,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear: {x.shape} @ {w.shape}")
    if b is not None and b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} for {w.shape}")
    data = x.data @ w.data
    if b is not None:
        data = data + b.data

    def bw(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        if b is not None:
            _accum(b, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result("linear", data, parents, bw)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding over (batch, channels, h, w)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    bsz, c, h, wid = x.data.shape
    o, cw, kh, kw = w.data.shape
    if cw != c:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {cw}")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    if kh > h + 2 * pad or kw > wid + 2 * pad:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{wid + 2 * pad}")
    if bias is not None and bias.data.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} for {o} output channels")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wid + 2 * pad - kw) // stride + 1

    # im2col: one BLAS matmul per direction instead of a loop over kernel offsets
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols2 = _im2col(xp, kh, kw, stride, oh, ow)
    wd = w.data
    w2 = wd.reshape(o, c * kh * kw)
    out = np.matmul(w2, cols2).reshape(bsz, o, oh, ow)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    xp_shape = xp.shape
    cols_saved = cols2 if w.requires_grad else None

    def bw(g):
        g2 = np.ascontiguousarray(g).reshape(bsz, o, oh * ow)
        if w.requires_grad:
            gw = np.matmul(g2, cols_saved.transpose(0, 2, 1)).sum(axis=0)
            _accum(w, gw.reshape(wd.shape))
        if x.requires_grad:
            if stride == 1 and pad <= kh - 1 and pad <= kw - 1:
                # transposed convolution: full correlation with the flipped kernel
                wflip = np.ascontiguousarray(wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
                gp = np.pad(g, ((0, 0), (0, 0),
                                (kh - 1 - pad, kh - 1 - pad), (kw - 1 - pad, kw - 1 - pad)))
                gcols = _im2col(gp, kh, kw, 1, h, wid)
                _accum(x, np.matmul(wflip.reshape(c, o * kh * kw), gcols).reshape(bsz, c, h, wid))
            else:
                dcols = np.matmul(w2.T, g2).reshape(bsz, c, kh, kw, oh, ow)
                gxp = np.zeros(xp_shape, dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
                _accum(x, gxp[:, :, pad:pad + h, pad:pad + wid] if pad else gxp)
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    parents = (x, w) if bias is None else (x, w, bias)
    return _result("conv2d", out, parents, bw)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Exponent-normalize along ``axis`` with max-subtraction for stability."""
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accum(x, data * (g - (g * data).sum(axis=axis, keepdims=True)))

    return _result("softmax", data, (x,), bw)


# -- normalization -----------------------------------------------------------------

def _norm_scale_shift(op, x, scale_t, shift_t, eps, per_sample):
    if x.data.ndim != 4:
        raise ShapeError(f"{op} expects (b, c, h, w), got {x.shape}")
    bsz, c, h, w = x.data.shape
    if h * w < 2:
        raise ShapeError(f"{op} needs at least 2 spatial positions, got {h}x{w}")
    want = (bsz, c) if per_sample else (c,)
    for t, label in ((scale_t, "scale"), (shift_t, "shift")):
        if t is not None and t.data.shape != want:
            raise ShapeError(f"{op}: {label} shape {t.data.shape}, expected {want}")

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mu) * inv

    def expand(t):
        return t.data.reshape(bsz, c, 1, 1) if per_sample else t.data.reshape(1, c, 1, 1)

    data = xhat
    if scale_t is not None:
        data = data * expand(scale_t)
    if shift_t is not None:
        data = data + expand(shift_t)

    red_axes = (2, 3) if per_sample else (0, 2, 3)

    def bw(g):
        gh = g * expand(scale_t) if scale_t is not None else g
        if scale_t is not None:
            _accum(scale_t, (g * xhat).sum(axis=red_axes))
        if shift_t is not None:
            _accum(shift_t, g.sum(axis=red_axes))
        if x.requires_grad:
            m1 = gh.mean(axis=(2, 3), keepdims=True)
            m2 = (gh * xhat).mean(axis=(2, 3), keepdims=True)
            _accum(x, inv * (gh - m1 - xhat * m2))

    parents = [x] + [t for t in (scale_t, shift_t) if t is not None]
    return _result(op, data, parents, bw)


def instance_norm(x: Tensor, scale: Tensor | None = None, shift: Tensor | None = None,
                  eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) zero-mean unit-variance, then optional per-channel affine."""
    return _norm_scale_shift("instance_norm", x, scale, shift, eps, per_sample=False)


def adaptive_instance_norm(x: Tensor, scale: Tensor, shift: Tensor,
                           eps: float = 1e-5) -> Tensor:
    """Instance-normalize, then apply per-(sample, channel) scale/shift from a style code."""
    return _norm_scale_shift("adaptive_instance_norm", x, scale, shift, eps, per_sample=True)


# -- shape movement ------------------------------------------------------------------

def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate every pixel into a 2x2 block."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest2x expects (b, c, h, w), got {x.shape}")
    bsz, c, h, w = x.data.shape
    data = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bw(g):
        _accum(x, g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _result("upsample_nearest2x", data, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    data = x.data.reshape(shape)

    def bw(g):
        _accum(x, g.reshape(x.data.shape))

    return _result("reshape", data, (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
    data = x.data.transpose(axes)

    def bw(g):
        _accum(x, g.transpose(inv))

    return _result("transpose", data, (x,), bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis`` starting at ``start``."""
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"narrow: axis {axis} invalid for shape {x.shape}")
    axis %= nd
    if start < 0 or length < 1 or start + length > x.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}] outside axis of size {x.data.shape[axis]}")
    index = tuple(slice(None) if a != axis else slice(start, start + length) for a in range(nd))
    data = x.data[index]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        _accum(x, gx)

    return _result("narrow", data, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over spatial positions: (b, c, h, w) -> (b, c)."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool expects (b, c, h, w), got {x.shape}")
    bsz, c, h, w = x.data.shape
    data = x.data.mean(axis=(2, 3))

    def bw(g):
        _accum(x, np.broadcast_to(g.reshape(bsz, c, 1, 1) / (h * w), x.data.shape))

    return _result("global_avg_pool", data, (x,), bw)
