from dataclasses import asdict, dataclass
from typing import Dict, List

from config import settings
from ..errors import ConfigError

SINUSOIDAL = "sinusoidal"
LEARNED_ENCODING = "learned"
COORDINATE_ENCODINGS = (SINUSOIDAL, LEARNED_ENCODING)


@dataclass(frozen=True)
class PrunerConfig:
    K: int = settings.DEFAULT_K
    L: int = settings.DEFAULT_L
    obs_dim: int = settings.OBS_DIM
    d_pos: int = settings.D_POS
    d_enc: int = settings.D_ENC
    enc_layers: int = settings.ENC_LAYERS
    enc_heads: int = settings.ENC_HEADS
    d_obs: int = settings.D_OBS
    head_hidden: int = settings.HEAD_HIDDEN
    coordinate_encoding: str = settings.COORDINATE_ENCODING
    enc_ffn_mult: int = 4

    def __post_init__(self):
        for name in ("K", "L", "obs_dim", "d_pos", "d_enc", "enc_heads", "d_obs", "head_hidden", "enc_ffn_mult"):
            if getattr(self, name) < 1:
                raise ConfigError(f"PrunerConfig.{name} must be a positive integer, got {getattr(self, name)}")
        if self.enc_layers < 0:
            raise ConfigError(f"PrunerConfig.enc_layers must be >= 0, got {self.enc_layers}")
        if self.d_pos % 2 != 0:
            raise ConfigError(f"d_pos must be even, got {self.d_pos}")
        if self.d_enc % self.enc_heads != 0:
            raise ConfigError(f"d_enc={self.d_enc} is not divisible by enc_heads={self.enc_heads}")
        if self.coordinate_encoding not in COORDINATE_ENCODINGS:
            raise ConfigError(
                f"unknown coordinate encoding '{self.coordinate_encoding}' "
                f"(expected one of {', '.join(COORDINATE_ENCODINGS)})"
            )

    @property
    def n_blocks(self) -> int:
        return 3 * self.L

    @property
    def n_units(self) -> int:
        return self.K * self.n_blocks

    @property
    def coord_width(self) -> int:
        """Width of the encoded coordinate feature z"""
        return self.d_enc if self.enc_layers > 0 else 2 * self.d_pos

    def to_header(self) -> List[int]:
        return [self.K, self.L, self.obs_dim, self.d_pos, self.d_enc, self.enc_layers, self.enc_heads,
                self.d_obs, self.head_hidden, COORDINATE_ENCODINGS.index(self.coordinate_encoding),
                self.enc_ffn_mult]

    @classmethod
    def from_header(cls, header: List[int]) -> "PrunerConfig":
        if len(header) != 11:
            raise ConfigError(f"pruner header must hold 11 integers, got {len(header)}")
        (K, L, obs_dim, d_pos, d_enc, enc_layers, enc_heads, d_obs, head_hidden, encoding,
         enc_ffn_mult) = header
        if not 0 <= encoding < len(COORDINATE_ENCODINGS):
            raise ConfigError(f"unknown coordinate encoding code {encoding}")
        return cls(K=K, L=L, obs_dim=obs_dim, d_pos=d_pos, d_enc=d_enc, enc_layers=enc_layers,
                   enc_heads=enc_heads, d_obs=d_obs, head_hidden=head_hidden,
                   coordinate_encoding=COORDINATE_ENCODINGS[encoding], enc_ffn_mult=enc_ffn_mult)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)
