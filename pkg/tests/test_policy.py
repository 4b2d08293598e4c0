"""
Diffusion-transformer policy: sampling, mask-aware execution against the
cache-free reference, FLOP accounting and checkpoints
"""

import math

import numpy as np
import pytest

from src.autodiff import Tensor
from src.caching import ONE_FOR_ALL, REUSE, WRITE, CacheState, make_cache
from src.errors import CacheError, CheckpointError, ConfigError, ScheduleError, ShapeError
from src.policy import (
    ModelConfig,
    NoiseSchedule,
    NoisyAction,
    PolicyModel,
    as_obs_tensor,
    block_flops,
    ddpm_sample_step,
    denoiser_forward,
    dit_layer_forward,
    draw_chain_noise,
    flop_count,
    generate_action,
    generation_overhead_flops,
    full_scale_config,
    predict_noise,
    reference_denoise,
    reference_generate,
    run_denoising_chain,
)
from src.policy.noise import posterior_step
from src.pruner import PruneMask, PrunerConfig, PrunerModel, pruner_flops

DESK_DENSE_FLOPS = 38872064


def random_mask(K, n_blocks, rate, seed):
    rng = np.random.default_rng(seed)
    return PruneMask.from_hard((rng.random((K, n_blocks)) < rate).astype(np.int8))


@pytest.mark.unit
class TestNoiseSchedule:

    def test_squared_cosine_is_monotone(self):
        schedule = NoiseSchedule.squared_cosine(10)
        assert schedule.alpha_bar(0) == 1.0
        assert np.all(np.diff(schedule.alpha_bars) < 0)
        assert np.all((schedule.betas >= 0) & (schedule.betas <= 0.999))

    def test_true_noise_moves_toward_clean_action(self, rng):
        schedule = NoiseSchedule.squared_cosine(10)
        a0 = np.zeros((8, 2))
        for k in range(1, 11):
            noise = rng.standard_normal((8, 2))
            a_k = schedule.add_noise(a0, noise, k)
            mean = posterior_step(Tensor(a_k), Tensor(noise), k, schedule).data
            assert np.linalg.norm(mean - a0) < np.linalg.norm(a_k - a0)

    def test_vanishing_betas_leave_sample_in_place(self, rng):
        schedule = NoiseSchedule.from_betas(np.full(4, 1e-14))
        a_k = NoisyAction(Tensor(rng.standard_normal((8, 2))), 3)
        out = ddpm_sample_step(a_k, Tensor(rng.standard_normal((8, 2))), 3, schedule, np.random.default_rng(0))
        assert out.k == 2
        np.testing.assert_allclose(out.value.data, a_k.value.data, atol=1e-6)

    def test_step_zero_is_rejected(self, rng):
        schedule = NoiseSchedule.squared_cosine(4)
        a_0 = NoisyAction(Tensor(rng.standard_normal((8, 2))), 0)
        with pytest.raises(ScheduleError):
            ddpm_sample_step(a_0, Tensor(np.zeros((8, 2))), 0, schedule)

    def test_fixed_seed_is_reproducible(self, rng):
        schedule = NoiseSchedule.squared_cosine(4)
        a_k = NoisyAction(Tensor(rng.standard_normal((8, 2))), 4)
        eps = Tensor(rng.standard_normal((8, 2)))
        first = ddpm_sample_step(a_k, eps, 4, schedule, np.random.default_rng(9)).value.data
        second = ddpm_sample_step(a_k, eps, 4, schedule, np.random.default_rng(9)).value.data
        assert first.tobytes() == second.tobytes()

    def test_last_step_is_deterministic(self, rng):
        schedule = NoiseSchedule.squared_cosine(4)
        a_1 = NoisyAction(Tensor(rng.standard_normal((8, 2))), 1)
        eps = Tensor(rng.standard_normal((8, 2)))
        first = ddpm_sample_step(a_1, eps, 1, schedule, np.random.default_rng(1)).value.data
        second = ddpm_sample_step(a_1, eps, 1, schedule, np.random.default_rng(2)).value.data
        assert first.tobytes() == second.tobytes()

    def test_clip_is_inert_for_exact_noise(self, rng):
        schedule = NoiseSchedule.squared_cosine(10)
        a0 = rng.uniform(-0.9, 0.9, (8, 2))
        for k in (1, 5, 10):
            noise = rng.standard_normal((8, 2))
            a_k = Tensor(schedule.add_noise(a0, noise, k))
            clipped = posterior_step(a_k, Tensor(noise), k, schedule, clip_sample=1.0).data
            plain = posterior_step(a_k, Tensor(noise), k, schedule).data
            np.testing.assert_allclose(clipped, plain, rtol=0, atol=1e-8)

    def test_clip_bounds_the_first_step(self, rng):
        schedule = NoiseSchedule.squared_cosine(10)
        a_k = NoisyAction(Tensor(rng.standard_normal((8, 2))), 10)
        eps = Tensor(a_k.value.data + 0.5 * rng.standard_normal((8, 2)))
        plain = ddpm_sample_step(a_k, eps, 10, schedule, np.random.default_rng(3)).value.data
        clipped = ddpm_sample_step(a_k, eps, 10, schedule, np.random.default_rng(3), clip_sample=1.0).value.data
        coef_x0, coef_xt = schedule.posterior_coefficients(10)
        _, _, sigma = schedule.coefficients(10)
        noise = np.random.default_rng(3).standard_normal((8, 2))
        x0 = np.clip((a_k.value.data - np.sqrt(schedule.one_minus_alpha_bars[10]) * eps.data)
                     / np.sqrt(schedule.alpha_bars[10]), -1.0, 1.0)
        np.testing.assert_allclose(clipped, coef_x0 * x0 + coef_xt * a_k.value.data + sigma * noise, atol=1e-12)
        assert np.abs(plain).max() > 5.0
        assert np.abs(clipped - sigma * noise).max() <= coef_x0 + coef_xt * np.abs(a_k.value.data).max() + 1e-12


@pytest.mark.unit
class TestModelConfig:

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=30, n_heads=4)

    def test_unit_count(self):
        assert ModelConfig().n_units == 120

    def test_header_round_trip(self, tiny_config):
        assert ModelConfig.from_header(tiny_config.to_header()) == tiny_config


@pytest.mark.unit
class TestLayerForward:

    def setup_inputs(self, model, rng):
        c = model.config
        obs = Tensor(rng.standard_normal((1, c.obs_dim)))
        memory = model.memory(model.embed_observation(obs), c.K)
        h = Tensor(rng.standard_normal((1, c.horizon, c.d_model)))
        return h, memory

    def test_all_compute_row_is_dense(self, tiny_policy, rng):
        h, memory = self.setup_inputs(tiny_policy, rng)
        cache = CacheState(tuple(h.shape))
        out = dit_layer_forward(h, memory, 0, [0, 0, 0], cache, tiny_policy)
        expected = h
        for block_type in ("SA", "CA", "FFN"):
            expected = expected + tiny_policy.block_residual(block_type, 0, expected, memory)
        np.testing.assert_allclose(out.data, expected.data, rtol=0, atol=1e-12)

    def test_all_reuse_row_on_fresh_cache_is_identity(self, tiny_policy, rng):
        h, memory = self.setup_inputs(tiny_policy, rng)
        out = dit_layer_forward(h, memory, 1, [1, 1, 1], CacheState(tuple(h.shape)), tiny_policy)
        assert out.data.tobytes() == h.data.tobytes()

    def test_scripted_trace_matches_log_replay(self, tiny_policy, rng):
        h, memory = self.setup_inputs(tiny_policy, rng)
        cache = make_cache(ONE_FOR_ALL, tuple(h.shape), 6, record_values=True)
        h = dit_layer_forward(h, memory, 0, [0, 1, 0], cache, tiny_policy, step=4)
        dit_layer_forward(h, memory, 1, [1, 0, 1], cache, tiny_policy, step=4)

        log = cache.event_log
        assert [(e.block, e.kind) for e in log] == [
            (0, WRITE), (1, REUSE), (2, WRITE), (3, REUSE), (4, WRITE), (5, REUSE),
        ]
        # replay: each reuse returns the latest write of its block type, zeros before any write
        latest = {}
        for event in log:
            if event.kind == WRITE:
                latest[event.block_type] = event.value
            else:
                expected = latest.get(event.block_type, np.zeros(h.shape))
                np.testing.assert_array_equal(event.value, expected)

    def test_cache_shape_mismatch(self, tiny_policy, rng):
        h, memory = self.setup_inputs(tiny_policy, rng)
        with pytest.raises(CacheError):
            dit_layer_forward(h, memory, 0, [0, 0, 0], CacheState((2, 3, 4)), tiny_policy)

    def test_mask_row_needs_three_entries(self, tiny_policy, rng):
        h, memory = self.setup_inputs(tiny_policy, rng)
        with pytest.raises(ShapeError):
            dit_layer_forward(h, memory, 0, [0, 0], CacheState(tuple(h.shape)), tiny_policy)


@pytest.mark.unit
class TestDenoiser:

    def test_dense_call_matches_reference(self, tiny_policy, rng):
        c = tiny_policy.config
        a_k = rng.standard_normal((c.horizon, c.action_dim))
        obs = rng.standard_normal(c.obs_dim)
        cache = CacheState((1, c.horizon, c.d_model))
        eps = denoiser_forward(Tensor(a_k[None]), obs, 3, None, cache, tiny_policy)
        np.testing.assert_allclose(eps.data[0], reference_denoise(tiny_policy, a_k, obs, 3), rtol=0, atol=1e-9)
        assert len(cache.event_log) == c.n_blocks

    def test_all_reuse_mask_leaves_only_embedding_and_head(self, tiny_policy, rng):
        c = tiny_policy.config
        a_k = Tensor(rng.standard_normal((1, c.horizon, c.action_dim)))
        mask = PruneMask.from_hard(np.ones((c.K, c.n_blocks)))
        cache = CacheState((1, c.horizon, c.d_model))
        eps = denoiser_forward(NoisyAction(a_k, c.K), rng.standard_normal(c.obs_dim), c.K, mask, cache, tiny_policy)
        expected = tiny_policy.output_head(tiny_policy.embed_actions(a_k))
        np.testing.assert_array_equal(eps.data, expected.data)

    def test_batched_noise_prediction_matches_reference(self, tiny_policy, rng):
        c = tiny_policy.config
        a_k = rng.standard_normal((3, c.horizon, c.action_dim))
        obs = rng.standard_normal((3, c.obs_dim))
        ks = np.array([1, 2, 4])
        eps = predict_noise(tiny_policy, Tensor(a_k), obs, ks)
        for i in range(3):
            np.testing.assert_allclose(eps.data[i], reference_denoise(tiny_policy, a_k[i], obs[i], int(ks[i])),
                                       rtol=0, atol=1e-9)

    def test_observation_width_is_checked(self, tiny_policy):
        with pytest.raises(ShapeError):
            tiny_policy.embed_observation(as_obs_tensor(np.zeros(5)))


@pytest.mark.unit
class TestGenerateAction:

    @pytest.mark.parametrize("triple", range(20))
    def test_dense_mask_matches_reference(self, tiny_config, triple):
        rng = np.random.default_rng(100 + triple)
        model = PolicyModel(tiny_config, seed=triple)
        obs = rng.uniform(-1.0, 1.0, tiny_config.obs_dim)
        mask = PruneMask.dense(tiny_config.K, tiny_config.n_blocks) if triple % 2 else None
        chunk, _, _ = generate_action(obs, mask, model, rng_seed=triple)
        np.testing.assert_allclose(chunk.value, reference_generate(model, obs, triple).value, rtol=0, atol=1e-9)

    def test_desk_defaults_match_reference(self, observation):
        model = PolicyModel(ModelConfig(), seed=5)
        chunk, cache, report = generate_action(observation, None, model, rng_seed=11)
        np.testing.assert_allclose(chunk.value, reference_generate(model, observation, 11).value, rtol=0, atol=1e-9)
        assert len(cache.event_log) == model.config.n_units
        assert report.executed_flops == report.dense_flops == DESK_DENSE_FLOPS

    def test_same_inputs_same_action_regardless_of_history(self, tiny_policy, observation):
        c = tiny_policy.config
        mask = random_mask(c.K, c.n_blocks, 0.5, seed=4)
        first, _, _ = generate_action(observation, mask, tiny_policy, rng_seed=3)
        generate_action(observation, random_mask(c.K, c.n_blocks, 0.9, seed=8), tiny_policy, rng_seed=77)
        second, _, _ = generate_action(observation, mask, tiny_policy, rng_seed=3)
        assert first.value.tobytes() == second.value.tobytes()

    def test_realized_rate_counts_the_mask(self, observation):
        config = ModelConfig()
        model = PolicyModel(config, seed=0)
        n_prune = math.ceil(0.91 * config.n_units)
        hard = np.zeros(config.n_units, dtype=np.int8)
        hard[np.random.default_rng(0).permutation(config.n_units)[:n_prune]] = 1
        mask = PruneMask.from_hard(hard.reshape(config.K, config.n_blocks))
        _, _, report = generate_action(observation, mask, model, rng_seed=0)
        assert report.realized_rate == n_prune / config.n_units

    def test_chunk_is_clipped(self, tiny_policy, observation):
        chunk, _, _ = generate_action(observation, None, tiny_policy, rng_seed=1)
        assert np.all(np.abs(chunk.value) <= 1.0)
        assert chunk.value.shape == (tiny_policy.config.horizon, tiny_policy.config.action_dim)

    def test_gated_chain_with_hard_gates_equals_masked_chain(self, tiny_policy, observation):
        c = tiny_policy.config
        mask = random_mask(c.K, c.n_blocks, 0.6, seed=2)
        noise = draw_chain_noise(np.random.default_rng(5), c.K, (1, c.horizon, c.action_dim))
        masked, _ = run_denoising_chain(tiny_policy, observation, noise, mask=mask)
        gated, _ = run_denoising_chain(tiny_policy, observation, noise,
                                       gates=Tensor(mask.hard[None].astype(np.float64)))
        np.testing.assert_allclose(gated.data, masked.data, rtol=0, atol=1e-12)

    def test_chain_noise_shape_is_checked(self, tiny_policy, observation):
        with pytest.raises(ShapeError):
            run_denoising_chain(tiny_policy, observation, np.zeros((2, 1, 4, 2)))


@pytest.mark.unit
class TestFlops:

    def test_desk_block_costs(self):
        config = ModelConfig()
        assert block_flops(config) == {"SA": 278528, "CA": 167936, "FFN": 524288}
        assert generation_overhead_flops(config) == 41984
        assert flop_count(config).dense_flops == DESK_DENSE_FLOPS

    def test_all_reuse_leaves_overhead(self):
        config = ModelConfig()
        report = flop_count(config, PruneMask.from_hard(np.ones((config.K, config.n_blocks))))
        assert report.executed_block_flops == 0
        assert report.executed_flops == generation_overhead_flops(config)
        assert report.realized_rate == 1.0

    def test_per_block_grid_sums_to_executed_blocks(self):
        config = ModelConfig()
        report = flop_count(config, random_mask(config.K, config.n_blocks, 0.4, seed=1))
        assert report.per_block.shape == (config.K, config.n_blocks)
        assert report.executed_flops == report.per_block.sum() + generation_overhead_flops(config)
        assert report.executed_flops <= report.dense_flops

    def test_adding_a_pruned_unit_never_adds_flops(self):
        config = ModelConfig()
        hard = random_mask(config.K, config.n_blocks, 0.3, seed=6).hard
        before = flop_count(config, PruneMask.from_hard(hard)).executed_flops
        for r, b in zip(*np.nonzero(hard == 0)):
            more = hard.copy()
            more[r, b] = 1
            assert flop_count(config, PruneMask.from_hard(more)).executed_flops < before

    def test_pruning_late_rows_gives_a_large_factor(self):
        config = ModelConfig()
        hard = np.zeros((config.K, config.n_blocks), dtype=np.int8)
        hard[2:] = 1
        report = flop_count(config, PruneMask.from_hard(hard), PrunerConfig())
        assert report.pruner_flops == pruner_flops(PrunerConfig())
        assert report.flop_factor > 3.9

    def test_full_scale_pruner_overhead(self):
        config = full_scale_config()
        pruner = PrunerConfig(K=config.K, L=config.L)
        assert pruner_flops(pruner) / flop_count(config).dense_flops < 0.003

    def test_mask_shape_is_checked(self):
        with pytest.raises(ShapeError):
            flop_count(ModelConfig(), PruneMask.dense(3, 6))


@pytest.mark.unit
class TestCheckpoint:

    def test_save_load_is_bit_exact(self, tiny_policy, tmp_path):
        path = tiny_policy.save(tmp_path / "policy.sag")
        loaded = PolicyModel.load(path)
        assert loaded.config == tiny_policy.config
        assert loaded.parameter_names() == tiny_policy.parameter_names()
        assert loaded.checksum() == tiny_policy.checksum()

    def test_loading_a_pruner_file_fails(self, tiny_pruner, tmp_path):
        path = tiny_pruner.save(tmp_path / "pruner.sag")
        with pytest.raises(CheckpointError):
            PolicyModel.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="file not found"):
            PolicyModel.load(tmp_path / "absent.sag")

    def test_unexpected_parameters(self, tiny_config, tiny_policy):
        params = dict(tiny_policy.params)
        params.pop("head.b")
        with pytest.raises(ShapeError):
            PolicyModel(tiny_config, params)
