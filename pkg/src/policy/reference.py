"""
Cache-free dense denoiser written directly in numpy

Shares only the parameter values and the noise schedule with dit.py; used to
check that mask-aware execution with an all-compute mask is exact.
"""

import numpy as np

from config import settings

from .dit import PolicyModel
from .types import ActionChunk

LN_EPS = 1e-5


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gamma + beta


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _attention(xq: np.ndarray, xkv: np.ndarray, wq, wk, wv, wo, n_heads: int) -> np.ndarray:
    T, d = xq.shape
    S = xkv.shape[0]
    dh = d // n_heads
    q = (xq @ wq).reshape(T, n_heads, dh).transpose(1, 0, 2)
    k = (xkv @ wk).reshape(S, n_heads, dh).transpose(1, 0, 2)
    v = (xkv @ wv).reshape(S, n_heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    scores = np.exp(scores - scores.max(axis=-1, keepdims=True))
    weights = scores / scores.sum(axis=-1, keepdims=True)
    return (weights @ v).transpose(1, 0, 2).reshape(T, d) @ wo


def reference_denoise(model: PolicyModel, a_k: np.ndarray, obs: np.ndarray, k: int) -> np.ndarray:
    """Predicted noise [horizon, action_dim] for one observation"""
    P = {name: t.data for name, t in model.params.items()}
    c = model.config
    obs_token = np.asarray(obs, dtype=np.float64).reshape(-1) @ P["obs_proj.w"] + P["obs_proj.b"]
    memory = np.stack([P["time_emb"][k], obs_token])
    h = a_k @ P["action_in.w"] + P["action_in.b"] + P["pos_emb"]
    for layer in range(c.L):
        sa = f"layers.{layer}.sa."
        x = _layer_norm(h, P[sa + "ln.g"], P[sa + "ln.b"])
        h = h + _attention(x, x, P[sa + "wq"], P[sa + "wk"], P[sa + "wv"], P[sa + "wo"], c.n_heads)
        ca = f"layers.{layer}.ca."
        x = _layer_norm(h, P[ca + "ln.g"], P[ca + "ln.b"])
        h = h + _attention(x, memory, P[ca + "wq"], P[ca + "wk"], P[ca + "wv"], P[ca + "wo"], c.n_heads)
        ffn = f"layers.{layer}.ffn."
        x = _layer_norm(h, P[ffn + "ln.g"], P[ffn + "ln.b"])
        h = h + _gelu(x @ P[ffn + "w1"] + P[ffn + "b1"]) @ P[ffn + "w2"] + P[ffn + "b2"]
    return _layer_norm(h, P["final_ln.g"], P["final_ln.b"]) @ P["head.w"] + P["head.b"]


def reference_generate(model: PolicyModel, obs: np.ndarray, rng_seed: int) -> ActionChunk:
    """Dense DDPM sampling: x0 estimate, then the posterior mean plus noise"""
    c = model.config
    schedule = model.schedule
    rng = np.random.default_rng(rng_seed)
    shape = (1, c.horizon, c.action_dim)
    a = rng.standard_normal(shape)[0]
    for k in range(c.K, 0, -1):
        eps = reference_denoise(model, a, obs, k)
        beta = schedule.betas[k - 1]
        ab, ab_prev = schedule.alpha_bars[k], schedule.alpha_bars[k - 1]
        om, om_prev = schedule.one_minus_alpha_bars[k], schedule.one_minus_alpha_bars[k - 1]
        x0 = (a - np.sqrt(om) * eps) / np.sqrt(ab)
        x0 = np.clip(x0, -settings.CLIP_SAMPLE, settings.CLIP_SAMPLE)
        a = np.sqrt(ab_prev) * beta / om * x0 + np.sqrt(1.0 - beta) * om_prev / om * a
        if k > 1:
            a = a + np.sqrt(beta * om_prev / om) * rng.standard_normal(shape)[0]
    return ActionChunk.clipped(a)
