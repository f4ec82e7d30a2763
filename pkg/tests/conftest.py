import numpy as np
import pytest

from stpn.config import ModelConfig
from stpn import synth
from stpn import training as TR


@pytest.fixture(scope="session")
def tiny_config():
    """Small architecture used for gradient checks and fast train tests."""
    cfg = ModelConfig(
        n_airports=5,
        history_steps=6,
        horizon_steps=3,
        relations=2,
        diffusion_order=1,
        heads=2,
        pos_dim=6,
        qk_dim=8,
        weather_embed_dim=4,
        weather_categories=4,
        hidden_widths=[8, 4],
        se_reduction=16,
        slots_per_day=36,
        batch_size=8,
    )
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def synth_small():
    """Synthetic bundle with planted lag-2 propagation (8 airports, 60 days)."""
    bundle, graph, truth = synth.make_synthetic_bundle(seed=0, n_airports=8, days=60)
    return bundle, graph, truth


def synth_train_config(**overrides) -> ModelConfig:
    """Training configuration used for the synthetic end-to-end runs."""
    base = dict(
        n_airports=8,
        history_steps=12,
        horizon_steps=12,
        relations=3,
        diffusion_order=1,
        heads=2,
        pos_dim=8,
        qk_dim=8,
        weather_embed_dim=3,
        weather_categories=4,
        hidden_widths=[16, 8],
        se_reduction=16,
        slots_per_day=36,
        lr=0.005,
        epochs=10,
        batch_size=64,
    )
    base.update(overrides)
    cfg = ModelConfig(**base)
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def trained_synth(synth_small):
    """One trained checkpoint on the planted synthetic benchmark (seed 0)."""
    bundle, graph, truth = synth_small
    ckpt, history = TR.train(synth_train_config(), bundle, graph, seed=0)
    return ckpt, history


@pytest.fixture(scope="session")
def tiny_train_setup():
    """Very small dataset + config for fast training-behavior tests."""
    bundle, graph, truth = synth.make_synthetic_bundle(seed=5, n_airports=4, days=8)
    cfg = ModelConfig(
        n_airports=4,
        history_steps=6,
        horizon_steps=3,
        relations=3,
        diffusion_order=1,
        heads=2,
        pos_dim=6,
        qk_dim=8,
        weather_embed_dim=3,
        weather_categories=4,
        hidden_widths=[8, 4],
        slots_per_day=36,
        lr=0.005,
        epochs=5,
        batch_size=32,
    )
    cfg.validate()
    return cfg, bundle, graph


def random_stochastic(rng, n):
    a = rng.random((n, n)) + 0.05
    return a / a.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
