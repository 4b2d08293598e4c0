"""
Layer helpers composed from the primitives in ops.py
"""

import math
from typing import Sequence

from . import ops
from .tensor import Tensor


def broadcast_to(vector: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast a trailing-axis vector (e.g. a bias) to ``shape``"""
    shape = tuple(shape)
    lead = [1] * (len(shape) - vector.ndim) + vector.shape
    return ops.expand(ops.reshape(vector, lead), shape)


def linear(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    y = ops.matmul(x, weight)
    if bias is None:
        return y
    return ops.add(y, broadcast_to(bias, y.shape))


def mlp(x: Tensor, layers: Sequence[Sequence[Tensor]], final_activation: bool = False) -> Tensor:
    """Stack of (weight, bias) pairs with GELU between them"""
    for i, (weight, bias) in enumerate(layers):
        x = linear(x, weight, bias)
        if i < len(layers) - 1 or final_activation:
            x = ops.gelu(x)
    return x


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[B, T, d] -> [B, H, T, d/H]"""
    B, T, d = x.shape
    return ops.transpose(ops.reshape(x, (B, T, n_heads, d // n_heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    """[B, H, T, dh] -> [B, T, H*dh]"""
    B, H, T, dh = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (B, T, H * dh))


def multi_head_attention(x_q: Tensor, x_kv: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
                         n_heads: int) -> Tensor:
    """Unmasked scaled dot-product attention of x_q [B, T, d] over x_kv [B, S, d]"""
    head_dim = x_q.shape[-1] // n_heads
    q = split_heads(linear(x_q, wq), n_heads)
    k = split_heads(linear(x_kv, wk), n_heads)
    v = split_heads(linear(x_kv, wv), n_heads)
    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
    weights = ops.softmax(scores)
    return linear(merge_heads(ops.matmul(weights, v)), wo)
