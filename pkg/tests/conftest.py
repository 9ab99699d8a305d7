import numpy as np
import pytest

from hybridonet import ModelConfig, SynthParams, generate_synthetic_cell


TINY_CONFIG = ModelConfig(
    input_dim=5,
    seq_len=4,
    hidden=8,
    lstm_layers=2,
    heads=2,
    node_steps=2,
    predictor_dims=(6, 5, 1),
    dropout=0.0,
)


@pytest.fixture(scope="session")
def clean_cell():
    """Noise-free synthetic cell with cycle life 160 (closed form)."""
    return generate_synthetic_cell(1, SynthParams(cycle_life_target=200, noise_level=0.0, samples_per_cycle=12))


@pytest.fixture(scope="session")
def noisy_cell():
    return generate_synthetic_cell(
        2, SynthParams(cycle_life_target=120, noise_level=0.05, samples_per_cycle=12)
    )


def rng_of(seed):
    return np.random.default_rng(seed)
