from .config import COORDINATE_ENCODINGS, LEARNED_ENCODING, SINUSOIDAL, PrunerConfig
from .coordinates import coordinate_indices, encode_coordinates, sinusoidal_embed, sinusoidal_table
from .flops import pruner_flop_breakdown, pruner_flops
from .mask import BASELINE, BLOCK_TYPES, LEARNED, PruneMask, row_to_step, step_to_row
from .model import (
    COORD_ENCODER,
    HEAD,
    OBS_ENCODER,
    PARAM_GROUPS,
    PrunerModel,
    PrunerOutput,
    init_pruner_params,
    param_group,
    predict_mask,
    pruner_param_shapes,
)

__all__ = [
    'BASELINE',
    'BLOCK_TYPES',
    'COORDINATE_ENCODINGS',
    'COORD_ENCODER',
    'HEAD',
    'LEARNED',
    'LEARNED_ENCODING',
    'OBS_ENCODER',
    'PARAM_GROUPS',
    'PruneMask',
    'PrunerConfig',
    'PrunerModel',
    'PrunerOutput',
    'SINUSOIDAL',
    'coordinate_indices',
    'encode_coordinates',
    'init_pruner_params',
    'param_group',
    'predict_mask',
    'pruner_flop_breakdown',
    'pruner_flops',
    'pruner_param_shapes',
    'row_to_step',
    'sinusoidal_embed',
    'sinusoidal_table',
    'step_to_row',
]
