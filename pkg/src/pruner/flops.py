"""
Analytic FLOP counts of the pruner (multiply-add = 2 FLOPs, linear maps and
attention products only, as for the policy)

The coordinate branch does not depend on the observation, so its cost is paid
once per loaded model; the per-iteration cost is the observation encoder plus
the fusion head over all K * 3L units.
"""

from typing import Dict

from .config import PrunerConfig


def pruner_flop_breakdown(config: PrunerConfig) -> Dict[str, int]:
    N = config.n_units
    d = config.d_enc
    layers = config.enc_layers
    obs_encoder = 2 * config.obs_dim * config.d_obs + 2 * config.d_obs * config.d_obs
    head_in = config.coord_width + config.d_obs
    hidden = config.head_hidden
    head = N * (2 * head_in * hidden + 2 * hidden * hidden + 2 * hidden * 2)
    coordinate_projection = 2 * N * (2 * config.d_pos) * d if layers > 0 else 0
    encoder_projections = layers * (4 * 2 * N * d * d + 2 * 2 * N * d * config.enc_ffn_mult * d)
    encoder_attention = layers * (2 * 2 * N * N * d)
    coordinate_total = coordinate_projection + encoder_projections + encoder_attention
    return {
        "obs_encoder": obs_encoder,
        "head": head,
        "coordinate_projection": coordinate_projection,
        "encoder_projections": encoder_projections,
        "encoder_attention": encoder_attention,
        "coordinate_total": coordinate_total,
        "per_iteration": obs_encoder + head,
    }


def pruner_flops(config: PrunerConfig) -> int:
    """Per-rollout-iteration cost of one mask prediction"""
    return pruner_flop_breakdown(config)["per_iteration"]
