"""
Central finite differences, used as the gradient oracle in tests
"""

from typing import Callable, Union

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor

ScalarFn = Callable[[Tensor], Union[Tensor, float]]


def _scalar(value: Union[Tensor, float]) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def finite_difference_gradient(f: ScalarFn, x: Tensor, step: float = 1e-5) -> Tensor:
    """(f(x + step*e_i) - f(x - step*e_i)) / (2*step) for every coordinate i"""
    if step <= 0:
        raise ConfigError(f"finite difference step must be positive, got {step}")
    base = x.data.reshape(-1).copy()
    grad = np.zeros_like(base)
    for i in range(base.size):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        f_plus = _scalar(f(Tensor(plus.reshape(x.data.shape))))
        f_minus = _scalar(f(Tensor(minus.reshape(x.data.shape))))
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return Tensor(grad.reshape(x.data.shape))


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all coordinates"""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
