"""
Differentiable primitives

Every primitive computes its forward value with numpy and, when a graph is
recording and any input requires gradients, appends one node carrying the
closed-form vector-Jacobian product. Shapes are explicit: elementwise
primitives accept identical shapes or a single-element operand, and anything
else must go through ``expand``.
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError
from .tensor import BackwardFn, Tensor, current_graph

GELU_COEF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))

IndexKey = Union[int, slice, Tuple, np.ndarray]


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward: BackwardFn) -> Tensor:
    graph = current_graph()
    requires = graph is not None and any(t.requires_grad for t in inputs)
    out = Tensor.wrap(np.asarray(out_data, dtype=np.float64), requires_grad=requires)
    if requires:
        graph.record(op, tuple(inputs), out, backward)
    return out


def _shape_error(op: str, *shapes: Sequence[int]) -> ShapeError:
    graph = current_graph()
    where = f" (node {graph.next_index()})" if graph is not None else ""
    rendered = " and ".join(str(list(s)) for s in shapes)
    return ShapeError(f"{op}{where}: incompatible shapes {rendered}")


def _operands(op: str, a: Tensor, b: Tensor) -> Tuple[np.ndarray, np.ndarray]:
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return a.data, b.data
    if b.data.size == 1 and (a.data.size != 1 or len(sa) >= len(sb)):
        return a.data, b.data.reshape(())
    if a.data.size == 1:
        return a.data.reshape(()), b.data
    raise _shape_error(op, sa, sb)


def _fit(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.reshape(grad.sum(), shape)


# Elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    av, bv = _operands("add", a, b)
    sa, sb = a.data.shape, b.data.shape
    return _emit("add", (a, b), av + bv, lambda g: (_fit(g, sa), _fit(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    av, bv = _operands("sub", a, b)
    sa, sb = a.data.shape, b.data.shape
    return _emit("sub", (a, b), av - bv, lambda g: (_fit(g, sa), _fit(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = _operands("mul", a, b)
    sa, sb = a.data.shape, b.data.shape
    return _emit("mul", (a, b), av * bv, lambda g: (_fit(g * bv, sa), _fit(g * av, sb)))


def affine(x: Tensor, scale_by: float, shift: float = 0.0) -> Tensor:
    """scale_by * x + shift with constant coefficients"""
    return _emit("affine", (x,), x.data * scale_by + shift, lambda g: (g * scale_by,))


def scale(x: Tensor, factor: float) -> Tensor:
    return affine(x, factor, 0.0)


def square(x: Tensor) -> Tensor:
    xv = x.data
    return _emit("square", (x,), xv * xv, lambda g: (2.0 * g * xv,))


def abs_(x: Tensor) -> Tensor:
    xv = x.data
    return _emit("abs", (x,), np.abs(xv), lambda g: (g * np.sign(xv),))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Elementwise clamp to [low, high]; no gradient reaches clamped entries"""
    xv = x.data
    inside = ((xv > low) & (xv < high)).astype(np.float64)
    return _emit("clip", (x,), np.clip(xv, low, high), lambda g: (g * inside,))


# Linear algebra and layout

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a 2-D weight shared by every leading index of ``a``, or has
    exactly the same leading (batch) axes as ``a``.
    """
    A, B = a.data, b.data
    if A.ndim < 2 or B.ndim < 2 or A.shape[-1] != B.shape[-2]:
        raise _shape_error("matmul", A.shape, B.shape)
    if B.ndim == 2:
        k, n = B.shape

        def backward(g: np.ndarray):
            ga = g @ B.T
            gb = A.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

        return _emit("matmul", (a, b), A @ B, backward)

    if A.shape[:-2] != B.shape[:-2]:
        raise _shape_error("matmul", A.shape, B.shape)

    def batched_backward(g: np.ndarray):
        return np.matmul(g, np.swapaxes(B, -1, -2)), np.matmul(np.swapaxes(A, -1, -2), g)

    return _emit("matmul", (a, b), np.matmul(A, B), batched_backward)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise _shape_error("transpose", x.shape, axes)
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", (x,), np.transpose(x.data, axes), lambda g: (np.transpose(g, inverse),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.data.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise _shape_error("reshape", original, shape) from None
    return _emit("reshape", (x,), out, lambda g: (g.reshape(original),))


def _is_fancy(key: IndexKey) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def index(x: Tensor, key: IndexKey) -> Tensor:
    """Basic or integer-array indexing; the gradient scatters back"""
    shape = x.data.shape
    out = np.array(x.data[key], dtype=np.float64)
    fancy = _is_fancy(key)

    def backward(g: np.ndarray):
        grad = np.zeros(shape)
        if fancy:
            np.add.at(grad, key, g)
        else:
            grad[key] += g
        return (grad,)

    return _emit("index", (x,), out, backward)


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding lookup: rows of a [V, d] table selected by an integer array"""
    if table.ndim != 2:
        raise _shape_error("take_rows", table.shape)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"take_rows: index out of range for table of {table.data.shape[0]} rows")
    shape = table.data.shape

    def backward(g: np.ndarray):
        grad = np.zeros(shape)
        np.add.at(grad, idx, g)
        return (grad,)

    return _emit("take_rows", (table,), table.data[idx], backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    arrays = [t.data for t in tensors]
    ndim = arrays[0].ndim
    ax = axis % ndim
    for arr in arrays[1:]:
        if arr.ndim != ndim or any(arr.shape[i] != arrays[0].shape[i] for i in range(ndim) if i != ax):
            raise _shape_error("concat", arrays[0].shape, arr.shape)
    bounds = np.cumsum([arr.shape[ax] for arr in arrays])[:-1]
    return _emit(
        "concat", tuple(tensors), np.concatenate(arrays, axis=ax),
        lambda g: tuple(np.split(g, bounds, axis=ax)),
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    arrays = [t.data for t in tensors]
    for arr in arrays[1:]:
        if arr.shape != arrays[0].shape:
            raise _shape_error("stack", arrays[0].shape, arr.shape)
    out = np.stack(arrays, axis=axis)
    ax = axis % out.ndim

    def backward(g: np.ndarray):
        return tuple(np.take(g, i, axis=ax) for i in range(len(arrays)))

    return _emit("stack", tuple(tensors), out, backward)


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of size-1 axes to ``shape`` (same rank required)"""
    shape = tuple(shape)
    src = x.data.shape
    if len(src) != len(shape) or any(s != t and s != 1 for s, t in zip(src, shape)):
        raise _shape_error("expand", src, shape)
    axes = tuple(i for i, (s, t) in enumerate(zip(src, shape)) if s == 1 and t != 1)

    def backward(g: np.ndarray):
        return (g.sum(axis=axes, keepdims=True) if axes else g,)

    return _emit("expand", (x,), np.broadcast_to(x.data, shape).copy(), backward)


# Normalization and nonlinearities

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by gamma and shift by beta"""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise _shape_error("layer_norm", x.shape, gamma.shape)
    xv = x.data
    mu = xv.mean(axis=-1, keepdims=True)
    centered = xv - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gv = gamma.data

    def backward(g: np.ndarray):
        lead = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=lead)
        g_beta = g.sum(axis=lead)
        gx_hat = g * gv
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gamma, g_beta

    return _emit("layer_norm", (x, gamma, beta), xhat * gv + beta.data, backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis"""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", (x,), s, backward)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation"""
    xv = x.data
    u = SQRT_2_OVER_PI * (xv + GELU_COEF * xv ** 3)
    t = np.tanh(u)

    def backward(g: np.ndarray):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * xv * xv)
        return (g * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du),)

    return _emit("gelu", (x,), 0.5 * xv * (1.0 + t), backward)


# Reductions

def _reduced_count(shape: Tuple[int, ...], axis: Optional[Union[int, Tuple[int, ...]]]) -> int:
    if axis is None:
        return int(np.prod(shape)) if shape else 1
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[a] for a in axes]))


def _restore(g: np.ndarray, shape: Tuple[int, ...], axis: Optional[Union[int, Tuple[int, ...]]]) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else axis
    axes = tuple(a % len(shape) for a in axes)
    return np.broadcast_to(np.expand_dims(g, axes), shape)


def sum_(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> Tensor:
    shape = x.data.shape
    return _emit("sum", (x,), x.data.sum(axis=axis), lambda g: (_restore(g, shape, axis).copy(),))


def mean(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> Tensor:
    shape = x.data.shape
    count = _reduced_count(shape, axis)
    return _emit("mean", (x,), x.data.mean(axis=axis), lambda g: (_restore(g, shape, axis) / count,))


def l2_norm(x: Tensor, axis: Union[int, Tuple[int, ...]]) -> Tensor:
    """Euclidean norm over ``axis``; the subgradient at zero is taken as zero"""
    xv = x.data
    shape = xv.shape
    norm = np.sqrt((xv * xv).sum(axis=axis))

    def backward(g: np.ndarray):
        safe = np.where(norm > 0.0, norm, 1.0)
        ratio = np.where(norm > 0.0, g / safe, 0.0)
        return (_restore(ratio, shape, axis) * xv,)

    return _emit("l2_norm", (x,), norm, backward)


# Binary gates

def _prune_probability(logits: np.ndarray) -> np.ndarray:
    # softmax over two channels == sigmoid of the logit gap; tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * (logits[..., 1] - logits[..., 0])))


def _check_two_channels(op: str, logits: Tensor) -> None:
    if logits.ndim == 0 or logits.data.shape[-1] != 2:
        raise ShapeError(f"{op}: last axis must have exactly 2 entries, got shape {logits.shape}")


def _channel_backward(p: np.ndarray) -> BackwardFn:
    slope = p * (1.0 - p)

    def backward(g: np.ndarray):
        gd = g * slope
        return (np.stack([-gd, gd], axis=-1),)

    return backward


def prune_probability(logits: Tensor) -> Tensor:
    """softmax(logits)[..., 1]: the soft gate of the prune channel"""
    _check_two_channels("prune_probability", logits)
    p = _prune_probability(logits.data)
    return _emit("prune_probability", (logits,), p, _channel_backward(p))


def ste_binarize(logits: Tensor) -> Tensor:
    """Straight-through argmax over [keep, prune] logits.

    Forward is 1 where the prune logit is strictly larger (ties keep). Backward
    is the gradient of the prune-channel softmax probability.
    """
    _check_two_channels("ste_binarize", logits)
    hard = (logits.data[..., 1] > logits.data[..., 0]).astype(np.float64)
    p = _prune_probability(logits.data)
    return _emit("ste_binarize", (logits,), hard, _channel_backward(p))
