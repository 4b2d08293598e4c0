"""
Architecture configuration of the diffusion-transformer policy
"""

from dataclasses import asdict, dataclass
from typing import Dict, List

from config import settings
from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    K: int = settings.DEFAULT_K
    L: int = settings.DEFAULT_L
    d_model: int = settings.DEFAULT_D_MODEL
    n_heads: int = settings.DEFAULT_N_HEADS
    action_dim: int = settings.ACTION_DIM
    horizon: int = settings.HORIZON
    obs_dim: int = settings.OBS_DIM
    ffn_mult: int = 4
    memory_tokens: int = 2

    def __post_init__(self):
        for name in ("K", "L", "d_model", "n_heads", "action_dim", "horizon", "obs_dim", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ModelConfig.{name} must be a positive integer, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.memory_tokens != 2:
            raise ConfigError("the conditioning memory holds exactly 2 tokens (timestep, observation)")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_ffn(self) -> int:
        return self.ffn_mult * self.d_model

    @property
    def n_blocks(self) -> int:
        return 3 * self.L

    @property
    def n_units(self) -> int:
        """Total prunable (step, block) units N = K * 3L"""
        return self.K * self.n_blocks

    def to_header(self) -> List[int]:
        return [self.K, self.L, self.d_model, self.n_heads, self.action_dim, self.horizon, self.obs_dim, self.ffn_mult]

    @classmethod
    def from_header(cls, header: List[int]) -> "ModelConfig":
        if len(header) != 8:
            raise ConfigError(f"policy header must hold 8 integers, got {len(header)}")
        K, L, d_model, n_heads, action_dim, horizon, obs_dim, ffn_mult = header
        return cls(K=K, L=L, d_model=d_model, n_heads=n_heads, action_dim=action_dim,
                   horizon=horizon, obs_dim=obs_dim, ffn_mult=ffn_mult)

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def full_scale_config() -> ModelConfig:
    """Eight-layer, 100-step, width-512 policy used for the overhead arithmetic"""
    return ModelConfig(K=100, L=8, d_model=512, n_heads=8, horizon=16)
