from .config import ModelConfig, full_scale_config
from .dit import (
    PolicyModel,
    as_obs_tensor,
    denoiser_forward,
    dit_layer_forward,
    draw_chain_noise,
    generate_action,
    init_policy_params,
    policy_param_shapes,
    predict_noise,
    run_denoising_chain,
)
from .flops import FlopReport, block_flop_grid, block_flops, flop_count, generation_overhead_flops
from .noise import NoiseSchedule, ddpm_sample_step, posterior_step
from .reference import reference_denoise, reference_generate
from .types import ActionChunk, NoisyAction

__all__ = [
    'ActionChunk',
    'FlopReport',
    'ModelConfig',
    'NoiseSchedule',
    'NoisyAction',
    'PolicyModel',
    'as_obs_tensor',
    'block_flop_grid',
    'block_flops',
    'ddpm_sample_step',
    'denoiser_forward',
    'dit_layer_forward',
    'draw_chain_noise',
    'flop_count',
    'generate_action',
    'generation_overhead_flops',
    'init_policy_params',
    'full_scale_config',
    'policy_param_shapes',
    'posterior_step',
    'predict_noise',
    'reference_denoise',
    'reference_generate',
    'run_denoising_chain',
]
