"""
Shared fixtures: a tiny policy/pruner pair, a small demonstration set and,
for the slow tests, the desk-scale pipeline artifacts
"""

import numpy as np
import pytest

from config import settings
from src.env import EnvConfig, generate_demos
from src.policy import ModelConfig, PolicyModel
from src.pruner import PrunerConfig, PrunerModel
from src.training import PretrainConfig, TrainConfig, build_reference_dataset, pretrain_policy, train_pruner

TINY_HORIZON = 4


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(K=4, L=2, d_model=16, n_heads=2, horizon=TINY_HORIZON)


@pytest.fixture
def tiny_policy(tiny_config):
    return PolicyModel(tiny_config, seed=0)


@pytest.fixture
def tiny_pruner_config():
    return PrunerConfig(K=4, L=2, d_pos=8, d_enc=16, enc_layers=1, enc_heads=2, d_obs=16, head_hidden=16)


@pytest.fixture
def tiny_pruner(tiny_pruner_config):
    """Zero output layer: every unit sits at the keep/prune tie"""
    return PrunerModel(tiny_pruner_config, seed=0, head_init_scale=0.0)


@pytest.fixture(scope="session")
def tiny_env_config():
    return EnvConfig(horizon=TINY_HORIZON, max_iterations=24)


@pytest.fixture(scope="session")
def tiny_demos(tiny_env_config):
    """Six expert episodes, two of them held out"""
    return generate_demos(6, seed=3, config=tiny_env_config, validation_fraction=0.34)


@pytest.fixture
def observation(rng):
    return rng.uniform(-1.0, 1.0, size=8)


# Desk-scale artifacts, built once per session with the CLI defaults

@pytest.fixture(scope="session")
def desk_demos():
    return generate_demos(settings.N_DEMO_EPISODES, seed=0)


@pytest.fixture(scope="session")
def desk_policy(desk_demos):
    model = PolicyModel(ModelConfig(), seed=0)
    pretrain_policy(desk_demos.train(), model, PretrainConfig())
    return model


@pytest.fixture(scope="session")
def desk_reference(desk_demos):
    return build_reference_dataset(desk_demos.train(), settings.REFERENCE_FRACTION, seed=0)


@pytest.fixture(scope="session")
def desk_trainers(desk_demos, desk_policy, desk_reference):
    """Pruners trained at the default settings, keyed by target rate"""
    trained = {}

    def train(rho):
        if rho not in trained:
            pruner = PrunerModel(PrunerConfig(), seed=0)
            trained[rho] = train_pruner(pruner, desk_policy, desk_reference, TrainConfig(rho=rho),
                                        validation=desk_demos.validation())
        return trained[rho]

    return train
