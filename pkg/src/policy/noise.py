"""
DDPM noise schedule and the reverse (posterior) sampling step

Step indices are 1-based: k = K is the first denoising step executed from
pure noise and k = 1 produces the clean action. ``alpha_bar(0) == 1``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ScheduleError
from .types import NoisyAction

MAX_BETA = 0.999


@dataclass
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or self.betas.size == 0:
            raise ScheduleError("betas must be a non-empty 1-D array")
        if np.any(self.betas < 0.0) or np.any(self.betas >= 1.0):
            raise ScheduleError("betas must lie in [0, 1)")
        log_alpha_bar = np.concatenate([[0.0], np.cumsum(np.log1p(-self.betas))])
        # index 0 is the clean sample; 1 - alpha_bar via expm1 stays accurate for tiny betas
        self.alpha_bars = np.exp(log_alpha_bar)
        self.one_minus_alpha_bars = -np.expm1(log_alpha_bar)

    @classmethod
    def squared_cosine(cls, K: int, s: float = 0.008) -> "NoiseSchedule":
        t = np.arange(K + 1, dtype=np.float64) / K
        f = np.cos((t + s) / (1.0 + s) * np.pi / 2.0) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, MAX_BETA)
        return cls(betas)

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        return cls(np.asarray(betas, dtype=np.float64))

    @property
    def K(self) -> int:
        return int(self.betas.size)

    def check_step(self, k: int) -> None:
        if not 1 <= k <= self.K:
            raise ScheduleError(f"denoising step k must be in [1, {self.K}], got {k}")

    def beta(self, k: int) -> float:
        self.check_step(k)
        return float(self.betas[k - 1])

    def alpha_bar(self, k: int) -> float:
        return float(self.alpha_bars[k])

    def posterior_coefficients(self, k: int):
        """(coef_x0, coef_xt) of the posterior mean written against the predicted clean sample"""
        self.check_step(k)
        beta = self.betas[k - 1]
        om = self.one_minus_alpha_bars[k]
        coef_x0 = np.sqrt(self.alpha_bars[k - 1]) * beta / om
        coef_xt = np.sqrt(1.0 - beta) * self.one_minus_alpha_bars[k - 1] / om
        return float(coef_x0), float(coef_xt)

    def coefficients(self, k: int):
        """(c_x, c_eps, sigma) with a_{k-1} = c_x * a_k - c_eps * eps + sigma * xi"""
        coef_x0, coef_xt = self.posterior_coefficients(k)
        beta = self.betas[k - 1]
        ab, om, om_prev = self.alpha_bars[k], self.one_minus_alpha_bars[k], self.one_minus_alpha_bars[k - 1]
        c_x = coef_x0 / np.sqrt(ab) + coef_xt
        c_eps = coef_x0 * np.sqrt(om) / np.sqrt(ab)
        sigma = np.sqrt(beta * om_prev / om) if k > 1 else 0.0
        return float(c_x), float(c_eps), float(sigma)

    def add_noise(self, a0: np.ndarray, noise: np.ndarray, k) -> np.ndarray:
        """Forward process q(a_k | a_0); ``k`` may be an int or one index per leading row"""
        k = np.asarray(k)
        ab = self.alpha_bars[k]
        om = self.one_minus_alpha_bars[k]
        if ab.ndim:
            ab = ab.reshape((-1,) + (1,) * (a0.ndim - 1))
            om = om.reshape((-1,) + (1,) * (a0.ndim - 1))
        return np.sqrt(ab) * a0 + np.sqrt(om) * noise


def posterior_step(a_k: Tensor, eps_pred: Tensor, k: int, schedule: NoiseSchedule,
                   noise: Optional[np.ndarray] = None, clip_sample: Optional[float] = None) -> Tensor:
    """Differentiable a_k -> a_{k-1}; ``noise`` is ignored at k == 1

    With ``clip_sample`` the predicted clean sample is clamped to
    [-clip_sample, clip_sample] before the posterior mean is formed.
    """
    c_x, c_eps, sigma = schedule.coefficients(k)
    if clip_sample is None:
        out = ops.sub(ops.scale(a_k, c_x), ops.scale(eps_pred, c_eps))
    else:
        ab, om = schedule.alpha_bars[k], schedule.one_minus_alpha_bars[k]
        x0 = ops.scale(ops.sub(a_k, ops.scale(eps_pred, float(np.sqrt(om)))), float(1.0 / np.sqrt(ab)))
        x0 = ops.clip(x0, -clip_sample, clip_sample)
        coef_x0, coef_xt = schedule.posterior_coefficients(k)
        out = ops.add(ops.scale(x0, coef_x0), ops.scale(a_k, coef_xt))
    if k > 1 and noise is not None:
        out = ops.add(out, Tensor.wrap(sigma * np.asarray(noise, dtype=np.float64)))
    return out


def ddpm_sample_step(a_k: NoisyAction, eps_pred: Tensor, k: int, schedule: NoiseSchedule,
                     rng: Optional[np.random.Generator] = None,
                     clip_sample: Optional[float] = None) -> NoisyAction:
    """One reverse DDPM step with fresh Gaussian noise for k > 1"""
    if k != a_k.k:
        raise ScheduleError(f"sample step k={k} does not match the noisy action's step {a_k.k}")
    schedule.check_step(k)
    noise = None
    if k > 1:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.standard_normal(a_k.value.data.shape)
    return NoisyAction(posterior_step(a_k.value, eps_pred, k, schedule, noise, clip_sample), k - 1)
