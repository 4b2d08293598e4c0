"""
Push-to-goal environment, scripted expert, demonstrations and rollouts
"""

import numpy as np
import pandas as pd
import pytest

from src.errors import CheckpointError, ConfigError, PolicyDivergenceError, ShapeError
from src.env import (
    TRACE_COLUMNS,
    TRAIN,
    VALIDATION,
    EnvConfig,
    EnvState,
    ExpertPolicy,
    MaskOverride,
    Observation,
    env_step,
    evaluation_seeds,
    expert_action,
    generate_demos,
    iteration_seed,
    load_dataset,
    project_free,
    reset,
    rollout_episode,
    run_episodes,
    save_dataset,
    state_from_observation,
    substep,
    success_rate,
    waypoint,
)
from src.policy import ActionChunk
from src.pruner import PruneMask


def make_state(agent, obj, goal, attached=False, config=EnvConfig()):
    return EnvState(agent=np.array(agent, dtype=float), obj=np.array(obj, dtype=float),
                    goal=np.array(goal, dtype=float), attached=attached, config=config)


def zero_policy(obs, mask_override=None, rng_seed=0):
    return ActionChunk.zeros(8, 2), None, None


@pytest.mark.unit
class TestDynamics:

    def test_zero_chunk_keeps_positions(self):
        state, _ = reset(3)
        nxt, obs = env_step(state, ActionChunk.zeros(8, 2))
        np.testing.assert_array_equal(nxt.agent, state.agent)
        np.testing.assert_array_equal(nxt.obj, state.obj)
        assert nxt.step == 8 and nxt.iteration == 1
        assert state.step == 0
        assert obs.time == pytest.approx(8 / EnvConfig().max_steps)

    def test_unit_velocity_moves_one_dt(self):
        state = make_state([-0.5, 0.0], [-0.2, 0.5], [0.5, 0.0])
        substep(state, np.array([1.0, 0.0]))
        assert state.agent[0] == pytest.approx(-0.45, abs=1e-12)
        assert state.agent[1] == 0.0

    def test_attached_object_follows_agent(self):
        state = make_state([-0.5, 0.0], [-0.48, 0.0], [0.5, 0.0], attached=True)
        nxt, _ = env_step(state, ActionChunk(np.array([[0.0, 1.0], [1.0, 0.0]])))
        np.testing.assert_allclose(nxt.agent, [-0.45, 0.05], atol=1e-12)
        np.testing.assert_allclose(nxt.obj, [-0.43, 0.05], atol=1e-12)

    def test_contact_attaches(self):
        state = make_state([-0.5, 0.0], [-0.43, 0.0], [0.5, 0.0])
        substep(state, np.array([1.0, 0.0]))
        assert state.attached
        np.testing.assert_array_equal(state.obj, [-0.43, 0.0])
        assert state.observe().contact

    def test_non_finite_chunk(self):
        state, _ = reset(0)
        value = np.zeros((8, 2))
        value[3, 1] = np.nan
        with pytest.raises(PolicyDivergenceError):
            env_step(state, ActionChunk(value))

    def test_chunk_width_is_checked(self):
        state, _ = reset(0)
        with pytest.raises(ShapeError):
            env_step(state, ActionChunk(np.zeros((8, 3))))

    def test_identical_actions_give_identical_trajectories(self, rng):
        chunks = [ActionChunk.clipped(rng.uniform(-1, 1, (8, 2))) for _ in range(5)]
        runs = []
        for _ in range(2):
            state, _ = reset(11)
            for chunk in chunks:
                state, obs = env_step(state, chunk)
            runs.append(obs.vector)
        assert runs[0].tobytes() == runs[1].tobytes()

    def test_success_never_resets(self):
        state = make_state([0.5, 0.0], [0.5, 0.0], [0.5, 0.0], attached=True)
        substep(state, np.zeros(2))
        assert state.success
        for _ in range(10):
            substep(state, np.array([0.0, 1.0]))
        assert state.object_to_goal > EnvConfig().success_radius
        assert state.success

    @pytest.mark.parametrize("position,expected", [
        ([0.1, 0.0], [0.3, 0.0]),
        ([0.0, 0.0], [0.0, 0.3]),
        ([2.0, -0.5], [1.0, -0.5]),
        ([0.0, -0.6], [0.0, -0.6]),
    ])
    def test_projection(self, position, expected):
        np.testing.assert_allclose(project_free(np.array(position), 0.3), expected, atol=1e-12)

    def test_observation_layout(self):
        state, obs = reset(5)
        assert obs.vector.shape == (8,)
        np.testing.assert_array_equal(obs.goal, state.goal)
        assert not obs.contact
        assert obs.time == 0.0
        np.testing.assert_array_equal(state_from_observation(obs).observe().vector, obs.vector)

    def test_observation_width(self):
        with pytest.raises(ShapeError):
            Observation(np.zeros(7))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EnvConfig(horizon=0)


@pytest.mark.unit
class TestExpert:

    def test_goal_is_a_fixed_point(self):
        state = make_state([0.5, 0.0], [0.5, 0.0], [0.5, 0.0], attached=True)
        assert np.linalg.norm(expert_action(state, 0).value) < 0.05

    def test_modes_pass_on_opposite_sides(self):
        sides = []
        for mode in (0, 1):
            state, _ = reset(21)
            ys = []
            for _ in range(EnvConfig().max_iterations):
                chunk = expert_action(state, mode)
                state, _ = env_step(state, chunk)
                if state.attached and abs(state.obj[0]) < 0.3:
                    ys.append(state.obj[1])
            assert ys
            sides.append(np.sign(ys))
        assert np.all(sides[0] > 0)
        assert np.all(sides[1] < 0)
        assert waypoint(2)[1] == -waypoint(3)[1]

    def test_actions_are_clipped(self):
        state = make_state([-0.9, 0.0], [0.9, 0.9], [0.5, 0.0])
        assert np.all(np.abs(expert_action(state, 0).value) <= 1.0)

    @pytest.mark.slow
    @pytest.mark.parametrize("mode", [0, 1])
    def test_expert_solves_random_starts(self, mode):
        results = run_episodes(ExpertPolicy(mode), evaluation_seeds(mode, 100), EnvConfig().max_iterations)
        assert success_rate(results) == 1.0
        assert all(ep.iterations <= EnvConfig().max_iterations for ep, _ in results)


@pytest.mark.unit
class TestDemos:

    def test_single_episode(self, tiny_env_config):
        dataset = generate_demos(1, seed=0, config=tiny_env_config)
        assert len(dataset) == dataset.actions.shape[0] == dataset.obs.shape[0]
        assert np.all(dataset.episode == 0)
        assert np.all(dataset.split == TRAIN)
        assert dataset.actions.shape[1:] == (tiny_env_config.horizon, 2)
        assert len(dataset) <= tiny_env_config.max_iterations

    def test_split_is_by_episode(self, tiny_demos):
        train, val = tiny_demos.train(), tiny_demos.validation()
        assert len(train) + len(val) == len(tiny_demos)
        assert len(set(val.episode.tolist())) == 2
        assert not set(train.episode.tolist()) & set(val.episode.tolist())
        assert np.all(val.split == VALIDATION)

    def test_seeded(self, tiny_env_config, tiny_demos):
        again = generate_demos(6, seed=3, config=tiny_env_config, validation_fraction=0.34)
        assert again.obs.tobytes() == tiny_demos.obs.tobytes()
        assert again.actions.tobytes() == tiny_demos.actions.tobytes()

    def test_file_is_bit_identical(self, tiny_env_config, tmp_path):
        paths = [save_dataset(generate_demos(2, seed=8, config=tiny_env_config), tmp_path / f"d{i}.sag")
                 for i in range(2)]
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_save_and_load(self, tiny_demos, tmp_path):
        loaded = load_dataset(save_dataset(tiny_demos, tmp_path / "demos.sag"))
        np.testing.assert_array_equal(loaded.obs, tiny_demos.obs)
        np.testing.assert_array_equal(loaded.actions, tiny_demos.actions)
        np.testing.assert_array_equal(loaded.episode, tiny_demos.episode)
        np.testing.assert_array_equal(loaded.split, tiny_demos.split)
        assert loaded.n_episodes == 6 and loaded.seed == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_dataset(tmp_path / "absent.sag")

    def test_needs_an_episode(self):
        with pytest.raises(ConfigError):
            generate_demos(0, seed=0)

    def test_pairs(self, tiny_demos):
        obs, action = next(tiny_demos.pairs())
        assert isinstance(obs, Observation)
        assert action.shape == tiny_demos.actions.shape[1:]


@pytest.mark.unit
class TestRollout:

    def test_zero_policy_runs_out_of_iterations(self):
        episode, trace = rollout_episode(zero_policy, env_seed=4, max_iterations=6)
        assert not episode.success
        assert episode.iterations == 6
        frame = trace.to_frame()
        assert list(frame.columns) == TRACE_COLUMNS
        assert frame["success_so_far"].sum() == 0

    def test_expert_policy_succeeds(self):
        episode, trace = rollout_episode(ExpertPolicy(0), env_seed=4, max_iterations=24)
        assert episode.success
        assert trace.records[-1].success_so_far
        assert episode.iterations < 24

    def test_policy_error_fails_the_episode(self):
        def diverging(obs, mask_override=None, rng_seed=0):
            return ActionChunk(np.full((8, 2), np.nan)), None, None

        episode, trace = rollout_episode(diverging, env_seed=0, max_iterations=5)
        assert not episode.success
        assert "non-finite" in episode.error
        assert trace.records == []

    def test_override_reaches_one_iteration(self):
        seen = []
        mask = PruneMask.dense(2, 3)

        def recording(obs, mask_override=None, rng_seed=0):
            seen.append(mask_override)
            return ActionChunk.zeros(8, 2), None, None

        rollout_episode(recording, env_seed=1, max_iterations=4, override=MaskOverride(2, mask))
        assert seen[2] is mask
        assert seen[0] is None and seen[1] is None and seen[3] is None

    def test_override_iteration_is_checked(self):
        with pytest.raises(ConfigError):
            rollout_episode(zero_policy, 0, 4, override=MaskOverride(4, PruneMask.dense(2, 3)))

    def test_thread_pool_keeps_seed_order(self):
        seeds = [5, 1, 9, 3]
        parallel = run_episodes(ExpertPolicy(1), seeds, 24, workers=3)
        serial = run_episodes(ExpertPolicy(1), seeds, 24, workers=1)
        assert [ep.env_seed for ep, _ in parallel] == seeds
        assert [ep.iterations for ep, _ in parallel] == [ep.iterations for ep, _ in serial]

    def test_trace_csv(self, tmp_path):
        _, trace = rollout_episode(zero_policy, env_seed=2, max_iterations=3)
        frame = pd.read_csv(trace.to_csv(tmp_path / "trace.csv"))
        assert frame["iteration"].tolist() == [0, 1, 2]

    def test_seeds(self):
        assert iteration_seed(3, 0) == iteration_seed(3, 0)
        assert iteration_seed(3, 0) != iteration_seed(3, 1)
        assert evaluation_seeds(0, 5) == evaluation_seeds(0, 5)
        assert evaluation_seeds(0, 5) != evaluation_seeds(1, 5)
        assert success_rate([]) == 0.0
