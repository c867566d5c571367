"""Pytest fixtures for tests"""

import numpy as np
import pytest

from src.config import TrainConfig
from src.diagnostic_net import init_model
from src.matrices import Dataset, QMatrix, ResponseMatrix
from src.synthgen import SynthSpec, generate


@pytest.fixture
def tiny_dataset():
    """4 models × 6 items × 3 abilities; ability_2 tags items 4 and 5 only"""
    responses = ResponseMatrix(
        ["m0", "m1", "m2", "m3"],
        ["i0", "i1", "i2", "i3", "i4", "i5"],
        np.array(
            [
                [1, 1, 1, 0, 1, 0],
                [1, 0, 1, 0, 0, 1],
                [0, 0, 1, 1, 0, 0],
                [1, 1, 1, 1, 1, 1],
            ]
        ),
    )
    q = QMatrix(
        ["i0", "i1", "i2", "i3", "i4", "i5"],
        ["ability_0", "ability_1", "ability_2"],
        np.array(
            [
                [1, 0, 0],
                [1, 1, 0],
                [0, 1, 0],
                [1, 0, 0],
                [0, 1, 1],
                [0, 0, 1],
            ]
        ),
    )
    return Dataset(responses, q)


@pytest.fixture
def small_model():
    """M=5, N=20, K=6, hidden (8, 16, 8) with spread-out logits"""
    rng = np.random.default_rng(0)
    q = (rng.random((20, 6)) < 0.4).astype(np.int8)
    q[np.arange(20), rng.integers(0, 6, size=20)] = 1
    model = init_model(
        [f"m{i}" for i in range(5)],
        [f"i{i}" for i in range(20)],
        [f"a{i}" for i in range(6)],
        q,
        rng,
        hidden_sizes=(8, 16, 8),
    )
    model.ability_logits[:] = rng.normal(0.0, 1.0, size=model.ability_logits.shape)
    model.diff_logits[:] = rng.normal(0.0, 1.0, size=model.diff_logits.shape)
    model.disc_logits[:] = rng.normal(0.0, 1.0, size=model.disc_logits.shape)
    for b in model.biases:
        b += rng.normal(0.0, 0.3, size=b.shape)
    return model


@pytest.fixture
def small_batch(small_model):
    """Every (model, item) cell of small_model with seeded labels"""
    rng = np.random.default_rng(1)
    users, items = np.meshgrid(np.arange(5), np.arange(20), indexing="ij")
    labels = rng.integers(0, 2, size=users.size)
    return list(zip(users.ravel().tolist(), items.ravel().tolist(), labels.tolist()))


@pytest.fixture
def synth_small():
    """20 models × 120 items × 4 abilities"""
    return generate(SynthSpec(n_models=20, n_items=120, n_abilities=4, max_abilities=2, seed=3))


@pytest.fixture
def two_group_dataset():
    """8 models × 80 items × 2 abilities; m0-m3 solve only ability_0 items, m4-m7 only ability_1"""
    items = [f"i{i}" for i in range(80)]
    q = np.zeros((80, 2), dtype=np.int8)
    q[:40, 0] = 1
    q[40:, 1] = 1
    entries = np.zeros((8, 80), dtype=np.int8)
    entries[:4, :40] = 1
    entries[4:, 40:] = 1
    return Dataset(
        ResponseMatrix([f"m{i}" for i in range(8)], items, entries),
        QMatrix(items, ["ability_0", "ability_1"], q),
    )


@pytest.fixture
def fast_config():
    return TrainConfig(hidden_sizes=(8, 8, 4), batch_size=64, max_epochs=5, lr0=0.005, seed=0)
