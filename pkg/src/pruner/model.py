"""
Observation-conditioned pruner: one forward pass -> logits for all K x 3L units

    coordinates  (row, block) codes -> projection -> transformer encoder -> z  [N, d_z]
    observation  2-layer MLP -> o  [d_obs]
    fusion       concat(z_u, o) per unit -> 3-layer MLP -> [keep, prune] logits

The coordinate branch does not depend on the observation; inference reuses
its output until the parameters change (``mark_updated``).
"""

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config import settings
from ..autodiff import Tensor, nn, ops, read_tensor_file, write_tensor_file
from ..errors import CheckpointError, ShapeError
from .config import LEARNED_ENCODING, PrunerConfig
from .coordinates import coordinate_indices, encode_coordinates
from .mask import LEARNED, PruneMask

logger = logging.getLogger(__name__)

OBS_ENCODER = "obs_encoder"
COORD_ENCODER = "coord_encoder"
HEAD = "head"
PARAM_GROUPS = (OBS_ENCODER, COORD_ENCODER, HEAD)


def pruner_param_shapes(config: PrunerConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    c = config
    shapes = OrderedDict()
    if c.coordinate_encoding == LEARNED_ENCODING:
        shapes["coord.step_table"] = (c.K, c.d_pos)
        shapes["coord.block_table"] = (c.n_blocks, c.d_pos)
    if c.enc_layers > 0:
        d, hidden = c.d_enc, c.enc_ffn_mult * c.d_enc
        shapes["coord.proj.w"] = (2 * c.d_pos, d)
        shapes["coord.proj.b"] = (d,)
        for layer in range(c.enc_layers):
            p = f"coord.enc.{layer}."
            shapes[p + "ln1.g"] = (d,)
            shapes[p + "ln1.b"] = (d,)
            for w in ("wq", "wk", "wv", "wo"):
                shapes[p + w] = (d, d)
            shapes[p + "ln2.g"] = (d,)
            shapes[p + "ln2.b"] = (d,)
            shapes[p + "w1"] = (d, hidden)
            shapes[p + "b1"] = (hidden,)
            shapes[p + "w2"] = (hidden, d)
            shapes[p + "b2"] = (d,)
        shapes["coord.ln.g"] = (d,)
        shapes["coord.ln.b"] = (d,)
    shapes["obs.w1"] = (c.obs_dim, c.d_obs)
    shapes["obs.b1"] = (c.d_obs,)
    shapes["obs.w2"] = (c.d_obs, c.d_obs)
    shapes["obs.b2"] = (c.d_obs,)
    shapes["head.w1"] = (c.coord_width + c.d_obs, c.head_hidden)
    shapes["head.b1"] = (c.head_hidden,)
    shapes["head.w2"] = (c.head_hidden, c.head_hidden)
    shapes["head.b2"] = (c.head_hidden,)
    shapes["head.w3"] = (c.head_hidden, 2)
    shapes["head.b3"] = (2,)
    return shapes


def param_group(name: str) -> str:
    """Weight-decay group of a pruner parameter"""
    if name.startswith("obs."):
        return OBS_ENCODER
    if name.startswith("coord."):
        return COORD_ENCODER
    return HEAD


def init_pruner_params(config: PrunerConfig, seed: int = 0,
                       head_init_scale: float = settings.PRUNER_HEAD_INIT_SCALE) -> "OrderedDict[str, Tensor]":
    """Random encoders and a random output layer scaled by ``head_init_scale``.

    The initial logit gaps are spread around zero, so the first mask keeps
    roughly half of the units. ``head_init_scale=0`` zeroes the output layer
    and puts every unit at a tie, i.e. an all-keep mask.
    """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in pruner_param_shapes(config).items():
        if name == "head.w3" and head_init_scale > 0:
            value = rng.normal(0.0, head_init_scale / np.sqrt(shape[0]), shape)
        elif name in ("head.w3", "head.b3"):
            value = np.zeros(shape)
        elif name.endswith("_table"):
            value = rng.normal(0.0, 0.5, shape)
        elif name.endswith(".g"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        params[name] = Tensor(value, name=name)
    return params


@dataclass
class PrunerOutput:
    logits: Tensor  # [B, K, 3L, 2], head output times PRUNER_LOGIT_SCALE
    gates: Tensor   # [B, K, 3L] straight-through hard gates
    soft: Tensor    # [B, K, 3L] prune-channel probability

    def masks(self) -> List[PruneMask]:
        return [
            PruneMask(self.gates.data[i].astype(np.int8), self.soft.data[i], LEARNED)
            for i in range(self.gates.data.shape[0])
        ]


class PrunerModel:
    """Parameters psi of the pruner"""

    def __init__(self, config: PrunerConfig, params: Optional[Dict[str, Tensor]] = None, seed: int = 0,
                 head_init_scale: float = settings.PRUNER_HEAD_INIT_SCALE):
        self.config = config
        self.params: "OrderedDict[str, Tensor]" = (
            OrderedDict(params) if params is not None else init_pruner_params(config, seed, head_init_scale)
        )
        expected = pruner_param_shapes(config)
        if list(self.params) != list(expected):
            raise ShapeError("pruner parameters do not match config")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise ShapeError(f"parameter '{name}' has shape {self.params[name].shape}, expected {list(shape)}")
        self.version = 0
        self._coord_memo: Optional[Tuple[int, Tensor]] = None

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def parameter_names(self) -> List[str]:
        return list(self.params)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def groups(self) -> Dict[str, List[Tensor]]:
        out: Dict[str, List[Tensor]] = {g: [] for g in PARAM_GROUPS}
        for name, tensor in self.params.items():
            out[param_group(name)].append(tensor)
        return out

    def requires_grad_(self, flag: bool = True) -> "PrunerModel":
        for tensor in self.params.values():
            tensor.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def mark_updated(self) -> None:
        """Invalidate the memoized coordinate features after a parameter update"""
        self.version += 1
        self._coord_memo = None

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in self.params.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()

    def copy(self) -> "PrunerModel":
        return PrunerModel(self.config, OrderedDict((n, Tensor(t.data, name=n)) for n, t in self.params.items()))

    # Forward pass

    def coordinate_codes(self) -> Tensor:
        c = self.config
        if c.coordinate_encoding == LEARNED_ENCODING:
            rows, blocks = coordinate_indices(c.K, c.L)
            return ops.concat([
                ops.take_rows(self.params["coord.step_table"], rows),
                ops.take_rows(self.params["coord.block_table"], blocks),
            ], axis=1)
        return encode_coordinates(c.K, c.L, c.d_pos)

    def coordinate_features(self) -> Tensor:
        """z: [N, coord_width], differentiable in the coordinate parameters"""
        c = self.config
        codes = self.coordinate_codes()
        if c.enc_layers == 0:
            return codes
        p = self.params
        x = nn.linear(codes, p["coord.proj.w"], p["coord.proj.b"])
        x = ops.reshape(x, (1, c.n_units, c.d_enc))
        for layer in range(c.enc_layers):
            q = f"coord.enc.{layer}."
            a = ops.layer_norm(x, p[q + "ln1.g"], p[q + "ln1.b"])
            x = ops.add(x, nn.multi_head_attention(a, a, p[q + "wq"], p[q + "wk"], p[q + "wv"], p[q + "wo"],
                                                   c.enc_heads))
            f = ops.layer_norm(x, p[q + "ln2.g"], p[q + "ln2.b"])
            x = ops.add(x, nn.mlp(f, [(p[q + "w1"], p[q + "b1"]), (p[q + "w2"], p[q + "b2"])]))
        x = ops.layer_norm(x, p["coord.ln.g"], p["coord.ln.b"])
        return ops.reshape(x, (c.n_units, c.d_enc))

    def encoded_coordinates(self) -> Tensor:
        """Constant copy of z, computed once per parameter version"""
        if self._coord_memo is None or self._coord_memo[0] != self.version:
            self._coord_memo = (self.version, self.coordinate_features().detach())
        return self._coord_memo[1]

    def encode_observation(self, obs: Tensor) -> Tensor:
        p = self.params
        return nn.mlp(obs, [(p["obs.w1"], p["obs.b1"]), (p["obs.w2"], p["obs.b2"])])

    def forward(self, obs, coords: Optional[Tensor] = None) -> PrunerOutput:
        """Logits and gates for a batch of observations [B, obs_dim]"""
        c = self.config
        obs_t = _obs_batch(obs)
        if obs_t.shape[1] != c.obs_dim:
            raise ShapeError(f"pruner expects observations of width {c.obs_dim}, got {obs_t.shape[1]}")
        B, N = obs_t.shape[0], c.n_units
        z = coords if coords is not None else self.coordinate_features()
        o = self.encode_observation(obs_t)
        dz, do = z.shape[1], o.shape[1]
        fused = ops.concat([
            ops.expand(ops.reshape(z, (1, N, dz)), (B, N, dz)),
            ops.expand(ops.reshape(o, (B, 1, do)), (B, N, do)),
        ], axis=-1)
        p = self.params
        logits = nn.mlp(fused, [(p["head.w1"], p["head.b1"]), (p["head.w2"], p["head.b2"]),
                                (p["head.w3"], p["head.b3"])])
        logits = ops.scale(ops.reshape(logits, (B, c.K, c.n_blocks, 2)), settings.PRUNER_LOGIT_SCALE)
        return PrunerOutput(logits, ops.ste_binarize(logits), ops.prune_probability(logits))

    def predict_mask(self, obs) -> PruneMask:
        out = self.forward(obs, coords=self.encoded_coordinates())
        if out.gates.data.shape[0] != 1:
            raise ShapeError(f"predict_mask takes a single observation, got a batch of {out.gates.data.shape[0]}")
        return out.masks()[0]

    # Persistence

    def save(self, path: Union[str, Path]) -> Path:
        blocks = {name: t.data for name, t in self.params.items()}
        path = write_tensor_file(path, settings.PRUNER_MAGIC, self.config.to_header(), blocks)
        logger.info(f"Saved pruner ({self.num_parameters()} parameters) to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PrunerModel":
        payload = read_tensor_file(path, settings.PRUNER_MAGIC)
        config = PrunerConfig.from_header(payload.header)
        expected = pruner_param_shapes(config)
        if set(payload.blocks) != set(expected):
            raise CheckpointError(f"{path}: parameter names do not match the stored config")
        return cls(config, OrderedDict((n, Tensor(payload.blocks[n], name=n)) for n in expected))


def _obs_batch(obs) -> Tensor:
    if hasattr(obs, "vector"):
        obs = obs.vector
    if isinstance(obs, Tensor):
        return obs if obs.ndim == 2 else ops.reshape(obs, (1, -1))
    data = np.asarray(obs, dtype=np.float64)
    return Tensor(data.reshape(1, -1) if data.ndim == 1 else data)


def predict_mask(obs, pruner: PrunerModel) -> PruneMask:
    """Hard and soft K x 3L mask for one observation"""
    return pruner.predict_mask(obs)
