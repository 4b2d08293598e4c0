"""
Diffusion-transformer denoiser with mask-aware, cache-aware execution

Tokens are batched ``[B, horizon, d_model]`` throughout (B = 1 at inference).
Each layer applies three pre-norm blocks in order, each adding a residual:

    SA   self-attention over the action tokens
    CA   cross-attention onto a 2-token memory (timestep token, observation token)
    FFN  two-layer GELU feed-forward

Execution modes per block:

    hard mask   bit 0 computes the residual and writes it to the reuse cache;
                bit 1 skips the block and adds the cache contents instead
    gated       every residual is computed and mixed with the cache through a
                gate g (straight-through hard value during pruner training):
                out = (1 - g) * d + g * tau, tau <- out
"""

import hashlib
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from ..autodiff import Tensor, nn, ops, read_tensor_file, write_tensor_file
from ..caching import ONE_FOR_ALL, ReuseCache, make_cache
from ..errors import CacheError, CheckpointError, ShapeError
from ..pruner.coordinates import sinusoidal_table
from ..pruner.mask import BLOCK_TYPES, PruneMask, step_to_row
from .config import ModelConfig
from .flops import FlopReport, flop_count
from .noise import NoiseSchedule, posterior_step
from .types import ActionChunk, NoisyAction

logger = logging.getLogger(__name__)

BLOCK_PARAM_SHAPES = {
    "SA": lambda c: {"ln.g": (c.d_model,), "ln.b": (c.d_model,), "wq": (c.d_model, c.d_model),
                     "wk": (c.d_model, c.d_model), "wv": (c.d_model, c.d_model), "wo": (c.d_model, c.d_model)},
    "CA": lambda c: {"ln.g": (c.d_model,), "ln.b": (c.d_model,), "wq": (c.d_model, c.d_model),
                     "wk": (c.d_model, c.d_model), "wv": (c.d_model, c.d_model), "wo": (c.d_model, c.d_model)},
    "FFN": lambda c: {"ln.g": (c.d_model,), "ln.b": (c.d_model,), "w1": (c.d_model, c.d_ffn), "b1": (c.d_ffn,),
                      "w2": (c.d_ffn, c.d_model), "b2": (c.d_model,)},
}

# observations may also be any object exposing a `vector` attribute
ObsLike = Union[Tensor, np.ndarray, Sequence[float]]


def policy_param_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every parameter name and shape, in the fixed enumeration order"""
    c = config
    shapes = OrderedDict()
    shapes["action_in.w"] = (c.action_dim, c.d_model)
    shapes["action_in.b"] = (c.d_model,)
    shapes["pos_emb"] = (c.horizon, c.d_model)
    shapes["time_emb"] = (c.K + 1, c.d_model)
    shapes["obs_proj.w"] = (c.obs_dim, c.d_model)
    shapes["obs_proj.b"] = (c.d_model,)
    for layer in range(c.L):
        for block_type in BLOCK_TYPES:
            for name, shape in BLOCK_PARAM_SHAPES[block_type](c).items():
                shapes[f"layers.{layer}.{block_type.lower()}.{name}"] = shape
    shapes["final_ln.g"] = (c.d_model,)
    shapes["final_ln.b"] = (c.d_model,)
    shapes["head.w"] = (c.d_model, c.action_dim)
    shapes["head.b"] = (c.action_dim,)
    return shapes


def init_policy_params(config: ModelConfig, seed: int = 0) -> "OrderedDict[str, Tensor]":
    rng = np.random.default_rng(seed)
    out_scale = 1.0 / np.sqrt(2.0 * config.L)
    params = OrderedDict()
    for name, shape in policy_param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "time_emb":
            value = sinusoidal_table(config.K + 1, config.d_model)
        elif name == "pos_emb":
            value = rng.normal(0.0, 0.1, shape)
        elif name.endswith("ln.g"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
            if leaf in ("wo", "w2"):
                value *= out_scale
        params[name] = Tensor(value, name=name)
    return params


class PolicyModel:
    """Parameters theta of the denoiser plus its architecture"""

    def __init__(self, config: ModelConfig, params: Optional[Dict[str, Tensor]] = None, seed: int = 0):
        self.config = config
        self.schedule = NoiseSchedule.squared_cosine(config.K)
        self.params: "OrderedDict[str, Tensor]" = (
            OrderedDict(params) if params is not None else init_policy_params(config, seed)
        )
        self._check_params()

    def _check_params(self) -> None:
        expected = policy_param_shapes(self.config)
        if list(self.params) != list(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ShapeError(f"policy parameters do not match config (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ShapeError(f"parameter '{name}' has shape {self.params[name].shape}, expected {list(shape)}")

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def parameter_names(self) -> List[str]:
        return list(self.params)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def requires_grad_(self, flag: bool = True) -> "PolicyModel":
        for tensor in self.params.values():
            tensor.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in self.params.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()

    def copy(self) -> "PolicyModel":
        return PolicyModel(self.config, OrderedDict((n, Tensor(t.data, name=n)) for n, t in self.params.items()))

    def block_params(self, layer: int, block_type: str) -> Dict[str, Tensor]:
        prefix = f"layers.{layer}.{block_type.lower()}."
        return {name[len(prefix):]: t for name, t in self.params.items() if name.startswith(prefix)}

    # Embeddings and head

    def embed_observation(self, obs: Tensor) -> Tensor:
        """[B, obs_dim] -> observation token [B, 1, d_model]"""
        if obs.ndim != 2 or obs.shape[1] != self.config.obs_dim:
            raise ShapeError(f"observation batch must be [B, {self.config.obs_dim}], got {obs.shape}")
        token = nn.linear(obs, self.params["obs_proj.w"], self.params["obs_proj.b"])
        return ops.reshape(token, (obs.shape[0], 1, self.config.d_model))

    def memory(self, obs_token: Tensor, k: Union[int, np.ndarray]) -> Tensor:
        """Cross-attention memory [B, 2, d_model]: timestep token then observation token"""
        B = obs_token.shape[0]
        steps = np.full(B, k, dtype=np.int64) if np.isscalar(k) else np.asarray(k, dtype=np.int64)
        time_token = ops.reshape(ops.take_rows(self.params["time_emb"], steps), (B, 1, self.config.d_model))
        return ops.concat([time_token, obs_token], axis=1)

    def embed_actions(self, actions: Tensor) -> Tensor:
        """[B, horizon, action_dim] -> tokens [B, horizon, d_model] with positions"""
        c = self.config
        if actions.ndim != 3 or actions.shape[1:] != [c.horizon, c.action_dim]:
            raise ShapeError(f"noisy actions must be [B, {c.horizon}, {c.action_dim}], got {actions.shape}")
        h = nn.linear(actions, self.params["action_in.w"], self.params["action_in.b"])
        return ops.add(h, nn.broadcast_to(self.params["pos_emb"], h.shape))

    def output_head(self, h: Tensor) -> Tensor:
        h = ops.layer_norm(h, self.params["final_ln.g"], self.params["final_ln.b"])
        return nn.linear(h, self.params["head.w"], self.params["head.b"])

    def block_residual(self, block_type: str, layer: int, h: Tensor, memory: Tensor) -> Tensor:
        """d_k^b: the residual one block would add to h"""
        p = self.block_params(layer, block_type)
        x = ops.layer_norm(h, p["ln.g"], p["ln.b"])
        if block_type == "SA":
            return nn.multi_head_attention(x, x, p["wq"], p["wk"], p["wv"], p["wo"], self.config.n_heads)
        if block_type == "CA":
            return nn.multi_head_attention(x, memory, p["wq"], p["wk"], p["wv"], p["wo"], self.config.n_heads)
        return nn.linear(ops.gelu(nn.linear(x, p["w1"], p["b1"])), p["w2"], p["b2"])

    # Persistence

    def save(self, path: Union[str, Path]) -> Path:
        blocks = {name: t.data for name, t in self.params.items()}
        path = write_tensor_file(path, settings.POLICY_MAGIC, self.config.to_header(), blocks)
        logger.info(f"Saved policy ({self.num_parameters()} parameters) to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolicyModel":
        payload = read_tensor_file(path, settings.POLICY_MAGIC)
        config = ModelConfig.from_header(payload.header)
        expected = policy_param_shapes(config)
        if set(payload.blocks) != set(expected):
            raise CheckpointError(f"{path}: parameter names do not match the stored config")
        params = OrderedDict((name, Tensor(payload.blocks[name], name=name)) for name in expected)
        return cls(config, params)


def as_obs_tensor(obs: ObsLike) -> Tensor:
    """Observation, vector or batch -> Tensor [B, obs_dim]"""
    if hasattr(obs, "vector"):
        obs = obs.vector
    if isinstance(obs, Tensor):
        return obs if obs.ndim == 2 else ops.reshape(obs, (1, -1))
    data = np.asarray(obs, dtype=np.float64)
    return Tensor(data.reshape(1, -1) if data.ndim == 1 else data)


def dit_layer_forward(h: Tensor, obs_emb: Tensor, layer: int, mask_row: Sequence[int], cache: ReuseCache,
                      model: PolicyModel, step: int = 0, gates: Optional[Tensor] = None) -> Tensor:
    """Run one layer's SA, CA and FFN blocks against the reuse cache.

    ``obs_emb`` is the cross-attention memory. ``gates`` ([B, 3], optional)
    switches to the gated training form and ``mask_row`` is then ignored.
    """
    if tuple(h.shape) != cache.shape:
        raise CacheError(f"cache buffer shape {list(cache.shape)} does not match hidden state {h.shape}")
    if len(mask_row) != 3:
        raise ShapeError(f"mask row for one layer must hold 3 entries, got {len(mask_row)}")
    for t, block_type in enumerate(BLOCK_TYPES):
        b = 3 * layer + t
        if gates is not None:
            residual = model.block_residual(block_type, layer, h, obs_emb)
            g = ops.reshape(ops.index(gates, (slice(None), t)), (h.shape[0], 1, 1))
            out = cache.blend(residual, ops.expand(g, h.shape), block_type, step, b)
        elif int(mask_row[t]) == 1:
            out = cache.apply(None, block_type, step, b)
        else:
            out = cache.apply(model.block_residual(block_type, layer, h, obs_emb), block_type, step, b)
        h = ops.add(h, out)
    return h


def _denoise(x: Tensor, obs_token: Tensor, k: int, bits: np.ndarray, gate_row: Optional[Tensor],
             cache: ReuseCache, model: PolicyModel) -> Tensor:
    memory = model.memory(obs_token, k)
    h = model.embed_actions(x)
    for layer in range(model.config.L):
        cols = slice(3 * layer, 3 * layer + 3)
        layer_gates = ops.index(gate_row, (slice(None), cols)) if gate_row is not None else None
        h = dit_layer_forward(h, memory, layer, bits[cols], cache, model, step=k, gates=layer_gates)
    return model.output_head(h)


def _mask_bits(mask: Optional[PruneMask], config: ModelConfig) -> np.ndarray:
    if mask is None:
        return np.zeros((config.K, config.n_blocks), dtype=np.int8)
    mask.check_shape(config.K, config.n_blocks)
    return mask.hard


def denoiser_forward(a_k: Union[NoisyAction, Tensor], obs: ObsLike, k: int, mask: Optional[PruneMask],
                     cache: ReuseCache, model: PolicyModel, gates: Optional[Tensor] = None,
                     obs_token: Optional[Tensor] = None) -> Tensor:
    """Predicted noise [B, horizon, action_dim] for step k, updating ``cache`` in place.

    ``gates`` ([B, K, 3L]) replaces the hard mask with the gated form.
    """
    config = model.config
    model.schedule.check_step(k)
    x = a_k.value if isinstance(a_k, NoisyAction) else a_k
    if obs_token is None:
        obs_token = model.embed_observation(as_obs_tensor(obs))
    row = step_to_row(k, config.K)
    bits = _mask_bits(mask, config)[row]
    gate_row = ops.index(gates, (slice(None), row)) if gates is not None else None
    return _denoise(x, obs_token, k, bits, gate_row, cache, model)


def predict_noise(model: PolicyModel, a_k: Tensor, obs: ObsLike, k: Union[int, np.ndarray]) -> Tensor:
    """Dense denoiser call without a cache; ``k`` may hold one step per batch row"""
    memory = model.memory(model.embed_observation(as_obs_tensor(obs)), k)
    h = model.embed_actions(a_k)
    for layer in range(model.config.L):
        for block_type in BLOCK_TYPES:
            h = ops.add(h, model.block_residual(block_type, layer, h, memory))
    return model.output_head(h)


def draw_chain_noise(rng: np.random.Generator, K: int, shape: Sequence[int]) -> np.ndarray:
    """Initial sample a_K followed by the K - 1 per-step draws, in execution order"""
    return np.stack([rng.standard_normal(tuple(shape)) for _ in range(K)])


def run_denoising_chain(model: PolicyModel, obs: ObsLike, noise: np.ndarray, mask: Optional[PruneMask] = None,
                        gates: Optional[Tensor] = None, reuse: str = ONE_FOR_ALL,
                        record_values: bool = False) -> Tuple[Tensor, ReuseCache]:
    """Run k = K..1 from ``noise`` ([K, B, horizon, action_dim]) with a fresh zeroed cache"""
    config = model.config
    obs_t = as_obs_tensor(obs)
    B = obs_t.shape[0]
    if noise.shape != (config.K, B, config.horizon, config.action_dim):
        raise ShapeError(
            f"chain noise must be [{config.K}, {B}, {config.horizon}, {config.action_dim}], got {list(noise.shape)}"
        )
    cache = make_cache(reuse, (B, config.horizon, config.d_model), config.n_blocks, record_values)
    obs_token = model.embed_observation(obs_t)
    bits = _mask_bits(mask, config)
    a = Tensor.wrap(noise[0].copy())
    for k in range(config.K, 0, -1):
        row = step_to_row(k, config.K)
        gate_row = ops.index(gates, (slice(None), row)) if gates is not None else None
        eps = _denoise(a, obs_token, k, bits[row], gate_row, cache, model)
        a = posterior_step(a, eps, k, model.schedule, noise[row + 1] if k > 1 else None,
                           clip_sample=settings.CLIP_SAMPLE)
    return a, cache


def generate_action(obs: ObsLike, mask: Optional[PruneMask], model: PolicyModel, rng_seed: int,
                    reuse: str = ONE_FOR_ALL, record_values: bool = False,
                    pruner_config=None) -> Tuple[ActionChunk, ReuseCache, FlopReport]:
    """Sample one action chunk; a ``None`` mask runs dense"""
    config = model.config
    rng = np.random.default_rng(rng_seed)
    noise = draw_chain_noise(rng, config.K, (1, config.horizon, config.action_dim))
    a0, cache = run_denoising_chain(model, obs, noise, mask=mask, reuse=reuse, record_values=record_values)
    report = flop_count(config, mask, pruner_config)
    return ActionChunk.clipped(a0.data[0]), cache, report
