"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps a float array and records, per operation, a closure that maps
the output gradient to the input gradients. `backward()` walks the recorded
graph in reverse topological order. Arrays default to float32; every op
inherits the dtype of its inputs, so the same graph can be replayed in
float64 (the finite-difference checker does exactly that). Reduction ops
accumulate in float64 regardless of the storage dtype.

Only the primitives needed by this package are provided; this is not a
general-purpose autodiff library.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class no_grad:
    """Context manager disabling graph recording (inference fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _is_basic_index(idx) -> bool:
    """True when idx uses only ints/slices/None/Ellipsis (non-overlapping views)."""
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice, type(None), type(Ellipsis))) for i in items)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_gshared")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._gshared = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _ensure(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # -- graph -------------------------------------------------------------

    def backward(self, grad=None):
        """Backpropagate from this tensor through the recorded graph."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without gradient needs a scalar, got shape {self.data.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free the closure so intermediate buffers can be reclaimed
                node._backward = None
                node._parents = ()

    def _accum(self, grad: np.ndarray):
        # first accumulation aliases the incoming buffer (it may be shared with a
        # sibling's gradient, e.g. both parents of an add); any further
        # accumulation therefore allocates instead of mutating in place
        if grad.dtype != self.dtype:
            grad = grad.astype(self.dtype)
        if self.grad is None:
            self.grad = grad
            self._gshared = True
        elif self._gshared:
            self.grad = self.grad + grad
            self._gshared = False
        else:
            self.grad += grad

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return _binary(self, self._ensure(other), np.add,
                       lambda g, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, self._ensure(other), np.subtract,
                       lambda g, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def __rsub__(self, other):
        return self._ensure(other).__sub__(self)

    def __mul__(self, other):
        return _binary(self, self._ensure(other), np.multiply,
                       lambda g, a, b: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._ensure(other)

        def bwd(g, a, b):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return _binary(self, other, np.divide, bwd)

    def __rtruediv__(self, other):
        return self._ensure(other).__truediv__(self)

    def __neg__(self):
        return _unary(self, np.negative, lambda g, a, out: -g)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("Tensor ** only supports scalar exponents")
        p = float(p)

        def bwd(g, a, out):
            return g * p * np.power(a.data, p - 1.0)

        return _unary(self, lambda x: np.power(x, p), bwd)

    # -- elementwise -------------------------------------------------------

    def exp(self):
        return _unary(self, np.exp, lambda g, a, out: g * out)

    def log(self):
        return _unary(self, np.log, lambda g, a, out: g / a.data)

    def sqrt(self):
        return _unary(self, np.sqrt, lambda g, a, out: g * (0.5 / out))

    def sin(self):
        return _unary(self, np.sin, lambda g, a, out: g * np.cos(a.data))

    def cos(self):
        return _unary(self, np.cos, lambda g, a, out: -g * np.sin(a.data))

    def sigmoid(self):
        def fwd(x):
            out = np.empty_like(x)
            pos = x >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
            ex = np.exp(x[~pos])
            out[~pos] = ex / (1.0 + ex)
            return out

        return _unary(self, fwd, lambda g, a, out: g * out * (1.0 - out))

    def elu(self, alpha: float = 1.0):
        def fwd(x):
            return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))

        def bwd(g, a, out):
            return g * np.where(a.data > 0, np.asarray(1.0, dtype=a.dtype), out + alpha)

        return _unary(self, fwd, bwd)

    def maximum(self, floor: float):
        """Elementwise max with a scalar; subgradient 0 at the tie point."""

        def bwd(g, a, out):
            return g * (a.data > floor)

        return _unary(self, lambda x: np.maximum(x, floor), bwd)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def fwd(x):
            return np.sum(x, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

        def bwd(g, a, out):
            if axis is None:
                return np.broadcast_to(g.reshape((1,) * a.data.ndim), a.data.shape).astype(a.dtype)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(g2, a.data.shape).astype(a.dtype)

        return _unary(self, fwd, bwd)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape manipulation --------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def bwd(g, a, out):
            return g.reshape(a.data.shape)

        return _unary(self, lambda x: x.reshape(shape), bwd)

    def transpose(self, axes):
        inv = np.argsort(axes)

        def bwd(g, a, out):
            return g.transpose(inv)

        return _unary(self, lambda x: x.transpose(axes), bwd)

    def swapaxes(self, a1: int, a2: int):
        axes = list(range(self.data.ndim))
        axes[a1], axes[a2] = axes[a2], axes[a1]
        return self.transpose(tuple(axes))

    def __getitem__(self, idx):
        basic = _is_basic_index(idx)

        def bwd(g, a, out):
            gx = np.zeros_like(a.data)
            if basic:
                gx[idx] = g
            else:
                np.add.at(gx, idx, g)
            return gx

        return _unary(self, lambda x: x[idx], bwd)

    def __matmul__(self, other):
        other = self._ensure(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ShapeError(f"matmul needs >=2-D operands, got {self.data.shape} @ {other.data.shape}")

        def bwd(g, a, b):
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb

        return _binary(self, other, np.matmul, bwd)


# -- op constructors ---------------------------------------------------------


def _unary(a: Tensor, fwd, bwd) -> Tensor:
    out = Tensor(fwd(a.data))
    if _grad_enabled and a.requires_grad:
        out.requires_grad = True
        out._parents = (a,)

        def backward(g):
            a._accum(np.asarray(bwd(g, a, out.data), dtype=a.dtype))

        out._backward = backward
    return out


def _binary(a: Tensor, b: Tensor, fwd, bwd) -> Tensor:
    try:
        out = Tensor(fwd(a.data, b.data))
    except ValueError as e:
        raise ShapeError(f"{fwd.__name__}: shapes {a.data.shape} and {b.data.shape} do not broadcast") from e
    if _grad_enabled and (a.requires_grad or b.requires_grad):
        out.requires_grad = True
        out._parents = (a, b)

        def backward(g):
            ga, gb = bwd(g, a, b)
            if a.requires_grad:
                a._accum(np.asarray(ga, dtype=a.dtype))
            if b.requires_grad:
                b._accum(np.asarray(gb, dtype=b.dtype))

        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if _grad_enabled and any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    t._accum(g[tuple(sl)].astype(t.dtype))

        out._backward = backward
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else axis + t.ndim + 1, 1)
        expanded.append(t.reshape(*shape))
    return concat(expanded, axis=axis)


def pad(a: Tensor, pad_width) -> Tensor:
    """Zero padding; pad_width follows np.pad convention."""
    a = as_tensor(a)
    pw = tuple(tuple(p) for p in pad_width)

    def bwd(g, t, out):
        sl = tuple(slice(lo, g.shape[i] - hi if hi else None) for i, (lo, hi) in enumerate(pw))
        return g[sl]

    return _unary(a, lambda x: np.pad(x, pw), bwd)


# -- convolutions -------------------------------------------------------------


def _im2col1d(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(B, C, Np) -> (B, No, C*k) patch matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)  # (B, C, Nfull, k)
    win = win[:, :, ::stride]
    return win.transpose(0, 2, 1, 3).reshape(win.shape[0], win.shape[2], -1)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int | None = None) -> Tensor:
    """1-D convolution: x (B, C, N), w (Cout, C, k) -> (B, Cout, No).

    Default padding keeps N unchanged at stride 1 ("same" for odd k).
    """
    x, w = as_tensor(x), as_tensor(w)
    B, C, N = x.shape
    Cout, Cw, k = w.shape
    if C != Cw:
        raise ShapeError(f"conv1d channels: input {x.shape} vs weight {w.shape}")
    p = (k - 1) // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p)))
    cols = _im2col1d(xp, k, stride)                      # (B, No, C*k)
    wmat = w.data.reshape(Cout, -1)
    out_data = cols @ wmat.T                             # (B, No, Cout)
    if b is not None:
        out_data = out_data + b.data
    out = Tensor(np.ascontiguousarray(out_data.transpose(0, 2, 1)))

    parents = [t for t in (x, w, b) if t is not None]
    if _grad_enabled and any(t.requires_grad for t in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        No = out.shape[2]

        def backward(g):
            gflat = g.transpose(0, 2, 1)                 # (B, No, Cout)
            if b is not None and b.requires_grad:
                b._accum(gflat.sum(axis=(0, 1), dtype=np.float64).astype(b.dtype))
            if w.requires_grad:
                gw = np.einsum("bnc,bnk->ck", gflat, cols, dtype=np.float64)
                w._accum(gw.reshape(w.shape).astype(w.dtype))
            if x.requires_grad:
                gcols = (gflat @ wmat).reshape(B, No, C, k)
                gxp = np.zeros_like(xp)
                for j in range(k):
                    gxp[:, :, j:j + No * stride:stride] += gcols[:, :, :, j].transpose(0, 2, 1)
                gx = gxp[:, :, p:p + N] if p else gxp
                x._accum(gx)

        out._backward = backward
    return out


def _im2col2d(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B, Ho*Wo, C*kh*kw)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (B,C,Hf,Wf,kh,kw)
    win = win[:, :, ::stride, ::stride]
    B, C, Ho, Wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho * Wo, C * kh * kw), Ho, Wo


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D convolution: x (B, C, H, W), w (Cout, C, kh, kw) -> (B, Cout, Ho, Wo)."""
    x, w = as_tensor(x), as_tensor(w)
    B, C, H, W = x.shape
    Cout, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError(f"conv2d channels: input {x.shape} vs weight {w.shape}")
    p = (kh - 1) // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    cols, Ho, Wo = _im2col2d(xp, kh, kw, stride)
    wmat = w.data.reshape(Cout, -1)
    out_data = cols @ wmat.T                              # (B, Ho*Wo, Cout)
    if b is not None:
        out_data = out_data + b.data
    out = Tensor(np.ascontiguousarray(out_data.transpose(0, 2, 1).reshape(B, Cout, Ho, Wo)))

    parents = [t for t in (x, w, b) if t is not None]
    if _grad_enabled and any(t.requires_grad for t in parents):
        out.requires_grad = True
        out._parents = tuple(parents)

        def backward(g):
            gflat = g.reshape(B, Cout, Ho * Wo).transpose(0, 2, 1)   # (B, HoWo, Cout)
            if b is not None and b.requires_grad:
                b._accum(gflat.sum(axis=(0, 1), dtype=np.float64).astype(b.dtype))
            if w.requires_grad:
                gw = np.einsum("bnc,bnk->ck", gflat, cols, dtype=np.float64)
                w._accum(gw.reshape(w.shape).astype(w.dtype))
            if x.requires_grad:
                gcols = (gflat @ wmat).reshape(B, Ho, Wo, C, kh, kw)
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + Ho * stride:stride, j:j + Wo * stride:stride] += \
                            gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                gx = gxp[:, :, p:p + H, p:p + W] if p else gxp
                x._accum(gx)

        out._backward = backward
    return out


def upsample_nearest(x: Tensor, factor: int, axes) -> Tensor:
    """Nearest-neighbour upsampling along the given axes (gradient = window sum)."""
    x = as_tensor(x)
    axes = tuple(np.atleast_1d(axes))

    def fwd(d):
        for ax in axes:
            d = np.repeat(d, factor, axis=ax)
        return d

    def bwd(g, a, out):
        for ax in axes:
            shape = list(g.shape)
            shape[ax] //= factor
            shape.insert(ax + 1, factor)
            g = g.reshape(shape).sum(axis=ax + 1)
        return g

    return _unary(x, fwd, bwd)
