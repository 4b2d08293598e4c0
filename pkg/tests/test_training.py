"""
Objectives, optimizer, policy pretraining and pruner training
"""

import numpy as np
import pandas as pd
import pytest

from config import settings
from src.autodiff import Graph, Tensor, finite_difference_gradient, max_relative_error, ops
from src.env import Dataset
from src.errors import ConfigError, DivergenceError, ShapeError
from src.policy import ModelConfig, PolicyModel
from src.policy.dit import draw_chain_noise, run_denoising_chain
from src.pruner import PrunerConfig, PrunerModel
from src.training import (
    BLOCKWISE,
    METRIC_COLUMNS,
    POLICY_METRIC_COLUMNS,
    SOFT_GATE,
    STE_GATE,
    VAL_METRIC_COLUMNS,
    AdamW,
    ParamGroup,
    PretrainConfig,
    PrunerTrainer,
    ReferenceDataset,
    TrainConfig,
    build_reference_dataset,
    denoising_mse,
    fidelity_loss,
    make_pruner_optimizer,
    pretrain_policy,
    sparsity_loss,
    train_pruner,
    train_pruner_epoch,
    validate_pruner,
)


def synthetic_dataset(n, horizon=4):
    rng = np.random.default_rng(n)
    return Dataset(obs=rng.uniform(-1, 1, (n, 8)), actions=rng.uniform(-1, 1, (n, horizon, 2)),
                   episode=np.arange(n), split=np.zeros(n, dtype=np.int64))


@pytest.fixture
def tiny_ref(tiny_demos):
    train = tiny_demos.train()
    return ReferenceDataset(train.obs[:8], train.actions[:8], np.arange(8))


@pytest.fixture
def quick_config():
    return TrainConfig(batch=4, epochs=1, lr=1e-3, warmup_steps=0, beta=0.7)


@pytest.mark.unit
class TestObjectives:

    def test_identical_chunks(self, rng):
        a = rng.standard_normal((8, 2))
        assert fidelity_loss(Tensor(a), a).item() == 0.0

    def test_unit_difference(self):
        assert fidelity_loss(Tensor(np.ones((8, 2))), np.zeros((8, 2))).item() == pytest.approx(4.0)
        assert fidelity_loss(Tensor(np.ones((3, 8, 2))), np.zeros((3, 8, 2))).item() == pytest.approx(4.0)

    def test_fidelity_gradient(self, rng):
        target = rng.standard_normal((2, 8, 2))
        x = rng.standard_normal((2, 8, 2))
        leaf = Tensor(x, requires_grad=True)
        graph = Graph()
        with graph.recording():
            loss = fidelity_loss(leaf, target)
        graph.backward(loss)
        numeric = finite_difference_gradient(lambda t: fidelity_loss(t, target), Tensor(x))
        assert max_relative_error(leaf.grad, numeric.data) < 1e-4

    def test_fidelity_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fidelity_loss(Tensor(np.zeros((8, 2))), np.zeros((4, 2)))

    @pytest.mark.parametrize("fill,expected", [(1.0, 0.09), (0.0, 0.91), (0.91, 0.0)])
    def test_sparsity(self, fill, expected):
        assert sparsity_loss(np.full((10, 12), fill), 0.91).item() == pytest.approx(expected, abs=1e-12)

    def test_blockwise_sparsity(self):
        gates = np.array([[1.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        assert sparsity_loss(gates, 0.5, scope=BLOCKWISE).item() == pytest.approx(1.0 / 3.0)
        assert sparsity_loss(gates, 0.5).item() == 0.0

    def test_sparsity_arguments(self):
        with pytest.raises(ConfigError):
            sparsity_loss(np.zeros((2, 3)), 1.5)
        with pytest.raises(ConfigError):
            sparsity_loss(np.zeros((2, 3)), 0.5, scope="per_row")
        with pytest.raises(ShapeError):
            sparsity_loss(np.zeros(3), 0.5)

    def test_denoising_mse(self):
        assert denoising_mse(Tensor(np.full((2, 3), 2.0)), np.zeros((2, 3))).item() == 4.0


@pytest.mark.unit
class TestAdamW:

    def leaf(self, value, grad):
        tensor = Tensor(np.array(value, dtype=float), requires_grad=True)
        tensor.grad = np.array(grad, dtype=float)
        return tensor

    def test_zero_rate_leaves_parameters(self):
        p = self.leaf([1.0, -2.0], [0.3, 0.4])
        before = p.data.tobytes()
        optimizer = AdamW([ParamGroup("g", [p], weight_decay=0.1)], lr=0.0)
        for _ in range(3):
            assert optimizer.step() == 0.0
        assert p.data.tobytes() == before

    def test_linear_warmup(self):
        optimizer = AdamW([ParamGroup("g", [self.leaf([1.0], [1.0])])], lr=1e-4, warmup_steps=4)
        assert [optimizer.step() for _ in range(6)] == pytest.approx([2.5e-5, 5e-5, 7.5e-5, 1e-4, 1e-4, 1e-4])

    def test_first_step_moves_by_the_rate(self):
        p = self.leaf([1.0, 1.0], [2.0, -0.5])
        AdamW([ParamGroup("g", [p])], lr=0.01).step()
        np.testing.assert_allclose(p.data, [0.99, 1.01], rtol=1e-6)

    def test_decoupled_weight_decay(self):
        p = self.leaf([2.0], [0.0])
        AdamW([ParamGroup("g", [p], weight_decay=0.5)], lr=0.1).step()
        assert p.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_parameters_without_gradient_are_skipped(self):
        p = Tensor(np.ones(2), requires_grad=True)
        AdamW([ParamGroup("g", [p], weight_decay=0.5)], lr=0.1).step()
        np.testing.assert_array_equal(p.data, np.ones(2))

    @pytest.mark.parametrize("kwargs", [dict(lr=-1.0), dict(lr=0.1, betas=(1.0, 0.9)), dict(lr=0.1, warmup_steps=-1)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            AdamW([ParamGroup("g", [])], **kwargs)


@pytest.mark.unit
class TestReferenceSet:

    def test_five_percent(self):
        ref = build_reference_dataset(synthetic_dataset(5600), 0.05, seed=0)
        assert len(ref) == 280
        assert len(np.unique(ref.indices)) == 280
        assert np.all(np.diff(ref.indices) > 0)

    def test_full_fraction_is_identity(self):
        source = synthetic_dataset(40)
        ref = build_reference_dataset(source, 1.0, seed=9)
        np.testing.assert_array_equal(ref.indices, np.arange(40))
        np.testing.assert_array_equal(ref.obs, source.obs)

    def test_seeded(self):
        source = synthetic_dataset(200)
        a = build_reference_dataset(source, 0.1, seed=4)
        b = build_reference_dataset(source, 0.1, seed=4)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_overlap_between_seeds(self):
        source = synthetic_dataset(5600)
        overlaps = [
            len(np.intersect1d(build_reference_dataset(source, 0.05, seed=2 * i).indices,
                               build_reference_dataset(source, 0.05, seed=2 * i + 1).indices))
            for i in range(100)
        ]
        assert abs(np.mean(overlaps) - 0.05 * 0.05 * 5600) < 2.0

    def test_empty_source(self):
        with pytest.raises(ConfigError):
            build_reference_dataset(synthetic_dataset(0), 0.5)

    @pytest.mark.parametrize("fraction", [0.0, 1.2])
    def test_fraction_range(self, fraction):
        with pytest.raises(ConfigError):
            build_reference_dataset(synthetic_dataset(10), fraction)


@pytest.mark.unit
class TestPretrain:

    def test_loss_decreases(self, tiny_config, tmp_path):
        model = PolicyModel(tiny_config, seed=1)
        config = PretrainConfig(lr=1e-3, batch=8, epochs=30, warmup_steps=0, seed=2)
        result = pretrain_policy(synthetic_dataset(32), model, config, metrics_path=tmp_path / "policy.csv")
        losses = result.losses
        assert len(losses) == 120
        assert losses[-8:].mean() < losses[:8].mean()
        frame = pd.read_csv(tmp_path / "policy.csv")
        assert list(frame.columns) == POLICY_METRIC_COLUMNS
        assert not any(p.requires_grad for p in model.parameters())

    def test_zero_rate_keeps_parameters(self, tiny_config):
        model = PolicyModel(tiny_config, seed=1)
        before = model.checksum()
        pretrain_policy(synthetic_dataset(8), model, PretrainConfig(lr=0.0, batch=4, epochs=1, warmup_steps=0))
        assert model.checksum() == before

    def test_empty_dataset(self, tiny_policy):
        with pytest.raises(ConfigError):
            pretrain_policy(synthetic_dataset(0), tiny_policy, PretrainConfig(epochs=1))

    def test_horizon_mismatch(self, tiny_policy):
        with pytest.raises(ConfigError):
            pretrain_policy(synthetic_dataset(4, horizon=6), tiny_policy, PretrainConfig(epochs=1))


@pytest.mark.unit
class TestTrainConfig:

    @pytest.mark.parametrize("kwargs", [
        dict(rho=1.2), dict(beta=-1.0), dict(lr=0.0), dict(batch=0), dict(weight_decay={"decoder": 0.1}),
        dict(reuse="layerwise"), dict(sparsity_scope="rows"), dict(sparsity_gate="hard"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_weight_decay_groups(self, tiny_pruner):
        optimizer = make_pruner_optimizer(tiny_pruner, TrainConfig())
        decay = {g.name: g.weight_decay for g in optimizer.groups}
        assert decay == {"obs_encoder": 1e-4, "coord_encoder": 1e-3, "head": 1e-5}
        assert optimizer.warmup_steps == 4


@pytest.mark.unit
class TestPrunerEpoch:

    def test_policy_is_frozen(self, tiny_pruner, tiny_policy, tiny_ref, quick_config):
        before = tiny_policy.checksum()
        train_pruner_epoch(tiny_pruner, tiny_policy, tiny_ref, quick_config)
        assert tiny_policy.checksum() == before
        assert all(p.grad is None for p in tiny_policy.parameters())

    def test_total_is_fidelity_plus_weighted_sparsity(self, tiny_pruner, tiny_policy, tiny_ref, quick_config):
        _, metrics = train_pruner_epoch(tiny_pruner, tiny_policy, tiny_ref, quick_config)
        assert len(metrics.steps) == 2
        for s in metrics.steps:
            assert s.loss_total == s.loss_fidelity + quick_config.beta * s.loss_sparsity

    def test_gradient_reaches_the_pruner(self, tiny_pruner, tiny_policy, tiny_ref, quick_config):
        before = tiny_pruner.checksum()
        _, metrics = train_pruner_epoch(tiny_pruner, tiny_policy, tiny_ref, quick_config)
        assert metrics.live_gradient_fraction >= 0.95
        assert tiny_pruner.checksum() != before
        assert tiny_pruner.version == len(metrics.steps)

    def test_first_step_sees_the_tie_mask(self, tiny_pruner, tiny_policy, tiny_ref, quick_config):
        assert quick_config.sparsity_gate == SOFT_GATE
        _, metrics = train_pruner_epoch(tiny_pruner, tiny_policy, tiny_ref, quick_config)
        first = metrics.steps[0]
        assert first.realized_rate == 0.0
        assert first.loss_sparsity == pytest.approx(abs(0.5 - quick_config.rho))

    def test_ste_sparsity_gate(self, tiny_pruner, tiny_policy, tiny_ref):
        config = TrainConfig(batch=8, epochs=1, lr=1e-3, warmup_steps=0, sparsity_gate=STE_GATE, rho=0.91)
        _, metrics = train_pruner_epoch(tiny_pruner, tiny_policy, tiny_ref, config)
        assert metrics.steps[0].loss_sparsity == pytest.approx(0.91)

    def test_non_finite_loss(self, tiny_pruner, tiny_config, tiny_policy, tiny_ref, quick_config):
        params = {n: Tensor(np.full_like(t.data, np.nan) if n == "head.b" else t.data, name=n)
                  for n, t in tiny_policy.params.items()}
        with pytest.raises(DivergenceError, match="batch 0"):
            train_pruner_epoch(tiny_pruner, PolicyModel(tiny_config, params), tiny_ref, quick_config)

    def test_empty_reference(self, tiny_pruner, tiny_policy, quick_config):
        empty = ReferenceDataset(np.zeros((0, 8)), np.zeros((0, 4, 2)), np.zeros(0, dtype=np.int64))
        with pytest.raises(ConfigError):
            train_pruner_epoch(tiny_pruner, tiny_policy, empty, quick_config)

    def test_validation_of_untrained_pruner(self, tiny_pruner, tiny_policy, tiny_demos, quick_config):
        val = validate_pruner(tiny_pruner, tiny_policy, tiny_demos.validation(), quick_config)
        assert val.realized_rate == 0.0
        assert val.loss_sparsity == pytest.approx(abs(0.5 - quick_config.rho))
        assert val.loss_fidelity > 0.0


@pytest.mark.unit
class TestPrunerTrainer:

    def test_outputs(self, tiny_pruner, tiny_policy, tiny_ref, tiny_demos, tmp_path):
        config = TrainConfig(batch=4, epochs=2, lr=1e-3, warmup_steps=1)
        trainer = train_pruner(tiny_pruner, tiny_policy, tiny_ref, config, tiny_demos.validation(), tmp_path)
        metrics = pd.read_csv(tmp_path / "metrics.csv")
        assert list(metrics.columns) == METRIC_COLUMNS
        assert metrics["step"].tolist() == [1, 2, 3, 4]
        assert metrics["epoch"].tolist() == [0, 0, 1, 1]
        assert list(pd.read_csv(tmp_path / "val_metrics.csv").columns) == VAL_METRIC_COLUMNS
        assert (tmp_path / "checkpoints" / "pruner_epoch000.sag").exists()
        assert (tmp_path / "checkpoints" / "pruner_epoch001.sag").exists()
        assert PrunerModel.load(tmp_path / "pruner.sag").checksum() == trainer.pruner.checksum()

    def test_grid_mismatch(self, tiny_policy, tiny_ref):
        pruner = PrunerModel(PrunerConfig(K=5, L=2, d_pos=8, d_enc=16, enc_layers=0, d_obs=16, head_hidden=16))
        with pytest.raises(ConfigError):
            PrunerTrainer(pruner, tiny_policy, tiny_ref, TrainConfig())


@pytest.mark.slow
@pytest.mark.parametrize("rho", [0.3, 0.5, 0.91])
def test_sparsity_only_training_reaches_target_rate(rho):
    policy = PolicyModel(ModelConfig(K=10, L=4, d_model=16, n_heads=2, horizon=4), seed=0)
    pruner_config = PrunerConfig(K=10, L=4, d_pos=8, d_enc=16, enc_layers=1, enc_heads=2, d_obs=16,
                                 head_hidden=16)
    pruner = PrunerModel(pruner_config, seed=0)
    source = synthetic_dataset(2)
    ref = ReferenceDataset(source.obs, source.actions, np.arange(2))
    config = TrainConfig(rho=rho, beta=1e6, lr=2e-4, batch=2, epochs=1, warmup_steps=0)
    optimizer = make_pruner_optimizer(pruner, config)
    rng = np.random.default_rng(0)
    rates = []
    for epoch in range(300):
        _, metrics = train_pruner_epoch(pruner, policy, ref, config, epoch=epoch, optimizer=optimizer, rng=rng,
                                        first_step=epoch)
        rates.append(metrics.steps[0].realized_rate)
    assert abs(np.mean(rates[-20:]) - rho) <= 0.02


@pytest.mark.slow
@pytest.mark.parametrize("name", ["head.b3", "head.w3", "obs.b2"])
def test_total_loss_gradient_through_the_soft_path(name, tiny_config, tiny_pruner_config):
    policy = PolicyModel(tiny_config, seed=2).requires_grad_(False)
    pruner = PrunerModel(tiny_pruner_config, seed=3)
    rng = np.random.default_rng(4)
    obs = rng.uniform(-1, 1, (3, 8))
    a_star = rng.uniform(-1, 1, (3, tiny_config.horizon, 2))
    noise = draw_chain_noise(rng, tiny_config.K, (3, tiny_config.horizon, 2))
    beta, rho = 0.7, 0.91

    def total_loss(model):
        output = model.forward(obs)
        a0, _ = run_denoising_chain(policy, obs, noise, gates=output.soft)
        return ops.add(fidelity_loss(a0, a_star), ops.scale(sparsity_loss(output.soft, rho), beta))

    def with_param(value):
        params = dict(pruner.params)
        params[name] = Tensor(value.data, name=name)
        return total_loss(PrunerModel(tiny_pruner_config, params))

    pruner.requires_grad_(True)
    graph = Graph()
    with graph.recording():
        loss = total_loss(pruner)
    graph.backward(loss)
    numeric = finite_difference_gradient(with_param, Tensor(pruner[name].data.copy()))
    assert np.abs(pruner[name].grad).max() > 0.0
    assert max_relative_error(pruner[name].grad, numeric.data) < 1e-4


@pytest.mark.slow
@pytest.mark.integration
def test_default_training_settles_on_the_target_rate(desk_trainers):
    trainer = desk_trainers(settings.TARGET_RATE)
    assert len(trainer.history) == settings.EPOCHS
    validation = trainer.validation_frame()
    assert abs(validation["realized_rate"].iloc[-1] - settings.TARGET_RATE) <= 0.03
    trend = validation["loss_fidelity"].rolling(5).mean().dropna()
    assert trend.iloc[-1] <= trend.iloc[0]
