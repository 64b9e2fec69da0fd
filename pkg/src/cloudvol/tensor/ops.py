"""Primitive differentiable operations.

Every op validates shapes eagerly (mismatches raise ShapeError naming the
op and the offending dimensions), computes its result with numpy or a
backend kernel, and records a backward closure on the output.

Broadcasting is restricted: two operands may differ in shape only when the
smaller shape equals the trailing dimensions of the larger (leading-batch
broadcast). Anything else is an error, by design.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from . import backend
from .core import ShapeError, Tensor, check_same_dtype, make_output

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


# ---------------------------------------------------------------------------
# broadcast helpers
# ---------------------------------------------------------------------------

def _is_suffix(big: Tuple[int, ...], small: Tuple[int, ...]) -> bool:
    if len(small) > len(big):
        return False
    return small == big[len(big) - len(small):]


def _sum_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce a leading-broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    return g.sum(axis=tuple(range(extra)))


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if _is_suffix(a.shape, b.shape) or _is_suffix(b.shape, a.shape):
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ beyond a leading-batch broadcast")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    check_same_dtype("add", a, b)
    _check_broadcast("add", a, b)
    out = a.data + b.data

    def backward(up):
        return _sum_to(up, a.shape), _sum_to(up, b.shape)

    return make_output("add", out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    check_same_dtype("mul", a, b)
    _check_broadcast("mul", a, b)
    out = a.data * b.data

    def backward(up):
        return _sum_to(up * b.data, a.shape), _sum_to(up * a.data, b.shape)

    return make_output("mul", out, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(up):
        return (up * (x.data > 0),)

    return make_output("relu", out, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    # Exact form: x * Phi(x), with Phi the standard normal CDF.
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = (x.data * cdf).astype(x.dtype)

    def backward(up):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * np.square(x.data))
        return (up * (cdf + x.data * pdf),)

    return make_output("gelu", out, (x,), backward)


# ---------------------------------------------------------------------------
# matmul and convolutions
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    check_same_dtype("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions disagree, {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(up):
        da = np.matmul(up, np.swapaxes(b.data, -1, -2))
        db = np.matmul(np.swapaxes(a.data, -1, -2), up)
        return _sum_to(da, a.shape), _sum_to(db, b.shape)

    return make_output("matmul", out, (a, b), backward)


def _conv_geometry(op: str, n_in: int, k: int, stride: int, padding: int) -> int:
    n_out = (n_in + 2 * padding - k) // stride + 1
    if n_out < 1:
        raise ShapeError(f"{op}: kernel {k} with stride {stride} pad {padding} does not fit input size {n_in}")
    return n_out


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution, NHWC layout, weight (k, k, Cin, Cout).

    im2col gather + GEMM; the gather/scatter run on the kernel backend.
    """
    tensors = (x, w) if b is None else (x, w, b)
    check_same_dtype("conv2d", *tensors)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input and weight, got {x.shape} and {w.shape}")
    n, h, wd, cin = x.shape
    k, k2, wcin, cout = w.shape
    if k != k2:
        raise ShapeError(f"conv2d: non-square kernel {k}x{k2}")
    if wcin != cin:
        raise ShapeError(f"conv2d: input channels {cin} != weight channels {wcin}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")
    ho = _conv_geometry("conv2d", h, k, stride, padding)
    wo = _conv_geometry("conv2d", wd, k, stride, padding)

    if padding:
        xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xp = x.data
    wmat = w.data.reshape(k * k * cin, cout)

    if k == 1 and stride == 1:
        cols = xp.reshape(n * h * wd, cin)
    else:
        cols = backend.im2col(xp, k, stride)
    y = cols @ wmat
    if b is not None:
        y = y + b.data
    out = y.reshape(n, ho, wo, cout)

    def backward(up):
        upf = up.reshape(n * ho * wo, cout)
        if k == 1 and stride == 1:
            cols_b = xp.reshape(n * h * wd, cin)
            dxp = (upf @ wmat.T).reshape(xp.shape)
        else:
            cols_b = backend.im2col(xp, k, stride)
            dxp = backend.col2im(upf @ wmat.T, xp.shape, k, stride)
        dw = (cols_b.T @ upf).reshape(w.shape)
        dx = dxp[:, padding:padding + h, padding:padding + wd, :] if padding else dxp
        if b is None:
            return dx, dw
        return dx, dw, upf.sum(axis=0)

    return make_output("conv2d", out, tensors, backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed 2-D convolution (adjoint of conv2d), NHWC, weight (k, k, Cin, Cout).

    Output spatial size is (n - 1) * stride - 2 * padding + k.
    """
    tensors = (x, w) if b is None else (x, w, b)
    check_same_dtype("conv_transpose2d", *tensors)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d: need 4-D input and weight, got {x.shape} and {w.shape}")
    n, h, wd, cin = x.shape
    k, k2, wcin, cout = w.shape
    if k != k2:
        raise ShapeError(f"conv_transpose2d: non-square kernel {k}x{k2}")
    if wcin != cin:
        raise ShapeError(f"conv_transpose2d: input channels {cin} != weight channels {wcin}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv_transpose2d: bias shape {b.shape} != ({cout},)")
    hout = (h - 1) * stride - 2 * padding + k
    wout = (wd - 1) * stride - 2 * padding + k
    if hout < 1 or wout < 1:
        raise ShapeError(f"conv_transpose2d: output size {hout}x{wout} invalid for input {h}x{wd}")

    # As the adjoint of a conv whose weight views ours with Cin/Cout swapped.
    wmat = np.ascontiguousarray(w.data.transpose(0, 1, 3, 2)).reshape(k * k * cout, cin)
    xf = x.data.reshape(n * h * wd, cin)
    padded_shape = (n, hout + 2 * padding, wout + 2 * padding, cout)
    yp = backend.col2im(xf @ wmat.T, padded_shape, k, stride)
    out = yp[:, padding:padding + hout, padding:padding + wout, :] if padding else yp
    if b is not None:
        out = out + b.data

    def backward(up):
        if padding:
            upp = np.pad(up, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
        else:
            upp = up
        cols_up = backend.im2col(upp, k, stride)  # (n*h*wd, k*k*cout)
        dx = (cols_up @ wmat).reshape(x.shape)
        dwmat = cols_up.T @ xf  # (k*k*cout, cin)
        dw = np.ascontiguousarray(dwmat.reshape(k, k, cout, cin).transpose(0, 1, 3, 2))
        if b is None:
            return dx, dw
        return dx, dw, up.sum(axis=(0, 1, 2))

    return make_output("conv_transpose2d", out, tensors, backward)


# ---------------------------------------------------------------------------
# normalization and softmax
# ---------------------------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(up):
        dot = (up * out).sum(axis=-1, keepdims=True)
        return (out * (up - dot),)

    return make_output("softmax", out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned scale and shift."""
    check_same_dtype("layer_norm", x, gamma, beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta shapes {gamma.shape}/{beta.shape} != ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.square(xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(up):
        reduce_axes = tuple(range(up.ndim - 1))
        dgamma = (up * xhat).sum(axis=reduce_axes)
        dbeta = up.sum(axis=reduce_axes)
        dxhat = up * gamma.data
        dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return make_output("layer_norm", out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc

    def backward(up):
        return (up.reshape(x.shape),)

    return make_output("reshape", out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} are not a permutation of 0..{x.ndim - 1}")
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(up):
        return (np.transpose(up, inverse),)

    return make_output("transpose", out, (x,), backward)


def window_partition(x: Tensor, win: int) -> Tensor:
    """(B, H, W, C) -> (B * nH * nW, win, win, C); H and W must divide by win."""
    if x.ndim != 4:
        raise ShapeError(f"window_partition: need 4-D input, got {x.shape}")
    b, h, w, c = x.shape
    if h % win or w % win:
        raise ShapeError(f"window_partition: grid {h}x{w} not divisible by window {win}")
    nh, nw = h // win, w // win
    out = (
        x.data.reshape(b, nh, win, nw, win, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b * nh * nw, win, win, c)
    )

    def backward(up):
        g = (
            up.reshape(b, nh, nw, win, win, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(b, h, w, c)
        )
        return (g,)

    return make_output("window_partition", out, (x,), backward)


def window_merge(x: Tensor, win: int, grid_hw: Tuple[int, int]) -> Tensor:
    """Inverse of window_partition for the given (H, W) token grid."""
    if x.ndim != 4 or x.shape[1] != win or x.shape[2] != win:
        raise ShapeError(f"window_merge: expected (*, {win}, {win}, C), got {x.shape}")
    h, w = grid_hw
    if h % win or w % win:
        raise ShapeError(f"window_merge: grid {h}x{w} not divisible by window {win}")
    nh, nw = h // win, w // win
    nb = x.shape[0]
    if nb % (nh * nw):
        raise ShapeError(f"window_merge: {nb} windows not a multiple of grid {nh}x{nw}")
    b = nb // (nh * nw)
    c = x.shape[3]
    out = (
        x.data.reshape(b, nh, nw, win, win, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h, w, c)
    )

    def backward(up):
        g = (
            up.reshape(b, nh, win, nw, win, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(nb, win, win, c)
        )
        return (g,)

    return make_output("window_merge", out, (x,), backward)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(xs)
    if not xs:
        raise ShapeError("concat: empty input list")
    check_same_dtype("concat", *xs)
    base = list(xs[0].shape)
    for t in xs[1:]:
        other = list(t.shape)
        if len(other) != len(base):
            raise ShapeError(f"concat: rank mismatch {xs[0].shape} vs {t.shape}")
        if other[:axis] + other[axis + 1:] != base[:axis] + base[axis + 1:]:
            raise ShapeError(f"concat: shapes {xs[0].shape} vs {t.shape} differ off axis {axis}")
    out = np.concatenate([t.data for t in xs], axis=axis)
    sizes = [t.shape[axis] for t in xs]
    offsets = np.cumsum(sizes)[:-1]

    def backward(up):
        return tuple(np.split(up, offsets, axis=axis))

    return make_output("concat", out, xs, backward)


def slice_(x: Tensor, key: Tuple[slice, ...]) -> Tensor:
    """Strided slicing; key is a tuple of slice objects (step >= 1)."""
    key = tuple(key)
    if len(key) > x.ndim:
        raise ShapeError(f"slice: {len(key)} slices for {x.ndim}-D tensor")
    for s in key:
        if not isinstance(s, slice):
            raise ShapeError(f"slice: only slice objects supported, got {type(s).__name__}")
        if s.step is not None and s.step < 1:
            raise ShapeError(f"slice: step must be >= 1, got {s.step}")
    out = x.data[key]

    def backward(up):
        g = np.zeros_like(x.data)
        g[key] = up
        return (g,)

    return make_output("slice", np.ascontiguousarray(out), (x,), backward)


# ---------------------------------------------------------------------------
# reductions and lookup
# ---------------------------------------------------------------------------

def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    out = x.data.sum(axis=axis)

    def backward(up):
        if axis is None:
            return (np.broadcast_to(up, x.shape).copy(),)
        g = np.expand_dims(up, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_output("sum", out, (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    out = x.data.mean(axis=axis)
    if axis is None:
        count = x.size
    else:
        count = int(np.prod([x.shape[a] for a in axis]))

    def backward(up):
        if axis is None:
            g = np.broadcast_to(up / count, x.shape).copy()
        else:
            g = np.broadcast_to(np.expand_dims(up, axis) / count, x.shape).copy()
        return (g.astype(x.dtype, copy=False),)

    return make_output("mean", out, (x,), backward)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table; differentiable w.r.t. the table only."""
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("embedding_lookup: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: index out of range for table of {table.shape[0]} rows")
    out = table.data[idx]

    def backward(up):
        g = np.zeros_like(table.data)
        backend.scatter_add_rows(g, idx.reshape(-1), up.reshape(-1, table.shape[1]))
        return (g,)

    return make_output("embedding_lookup", out, (table,), backward)


# ---------------------------------------------------------------------------
# composite helpers (built from the primitives above)
# ---------------------------------------------------------------------------

def cyclic_shift(x: Tensor, shift: int, axes: Tuple[int, int] = (1, 2)) -> Tensor:
    """Roll along two axes, expressed as slice+concat so it stays on the tape."""
    if shift == 0:
        return x
    out = x
    for axis in axes:
        n = out.shape[axis]
        s = shift % n
        if s == 0:
            continue
        key_a = [slice(None)] * out.ndim
        key_b = [slice(None)] * out.ndim
        key_a[axis] = slice(s, n)
        key_b[axis] = slice(0, s)
        out = concat([slice_(out, tuple(key_a)), slice_(out, tuple(key_b))], axis=axis)
    return out


def gather_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather on a 2-D tensor (loss-side alias of embedding_lookup)."""
    return embedding_lookup(x, indices)


# ---------------------------------------------------------------------------
# generic dispatcher
# ---------------------------------------------------------------------------

OP_KINDS = (
    "add", "mul", "matmul", "conv2d", "conv_transpose2d", "relu", "gelu",
    "softmax", "layer_norm", "reshape", "transpose", "window_partition",
    "window_merge", "concat", "slice", "mean", "sum", "embedding_lookup",
)

_DISPATCH = {
    "add": lambda inputs, **a: add(*inputs),
    "mul": lambda inputs, **a: mul(*inputs),
    "matmul": lambda inputs, **a: matmul(*inputs),
    "conv2d": lambda inputs, **a: conv2d(*inputs, **a),
    "conv_transpose2d": lambda inputs, **a: conv_transpose2d(*inputs, **a),
    "relu": lambda inputs, **a: relu(*inputs),
    "gelu": lambda inputs, **a: gelu(*inputs),
    "softmax": lambda inputs, **a: softmax(*inputs),
    "layer_norm": lambda inputs, **a: layer_norm(*inputs, **a),
    "reshape": lambda inputs, **a: reshape(*inputs, **a),
    "transpose": lambda inputs, **a: transpose(*inputs, **a),
    "window_partition": lambda inputs, **a: window_partition(*inputs, **a),
    "window_merge": lambda inputs, **a: window_merge(*inputs, **a),
    "concat": lambda inputs, **a: concat(inputs, **a),
    "slice": lambda inputs, **a: slice_(*inputs, **a),
    "mean": lambda inputs, **a: mean(*inputs, **a),
    "sum": lambda inputs, **a: sum_(*inputs, **a),
    "embedding_lookup": lambda inputs, **a: embedding_lookup(*inputs, **a),
}


def forward_op(op_kind: str, inputs: Sequence[Tensor], **attributes) -> Tensor:
    """Apply an op by kind name; the generic entry point used by the checker."""
    if op_kind not in _DISPATCH:
        raise ShapeError(f"forward_op: unknown op kind '{op_kind}'")
    return _DISPATCH[op_kind](list(inputs), **attributes)
