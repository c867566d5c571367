"""Tests for the training loop"""

import numpy as np
import pandas as pd
import pytest

from src.config import TrainConfig, config_hash
from src.diagnostic_net import predict_proba, save_checkpoint
from src.errors import DataValidationError
from src.matrices import Dataset, QMatrix, ResponseMatrix
from src.trainer import Adam, fit, lr_step, project_nonnegative, stagnant_epochs, train


class TestAdam:
    def test_first_step_moves_by_lr(self):
        params = {"x": np.array([1.0, -2.0])}
        Adam(lr=0.1).step(params, {"x": np.array([2.0, -0.5])})
        assert params["x"] == pytest.approx([0.9, -1.9], abs=1e-6)

    def test_zero_gradient_no_move(self):
        params = {"x": np.array([3.0])}
        Adam(lr=0.1).step(params, {"x": np.array([0.0])})
        assert params["x"][0] == 3.0

    def test_minimises_quadratic(self):
        params = {"x": np.array([5.0])}
        opt = Adam(lr=0.05)
        for _ in range(1000):
            opt.step(params, {"x": 2 * params["x"]})
        assert abs(params["x"][0]) < 0.1


class TestProjectNonnegative:
    def test_clamps_negative(self, small_model):
        small_model.weights[0][0, 0] = -0.2
        small_model.weights[1][0, 0] = 0.3
        project_nonnegative(small_model)
        assert small_model.weights[0][0, 0] == 0.0
        assert small_model.weights[1][0, 0] == 0.3

    def test_leaves_biases_and_logits(self, small_model):
        small_model.biases[0][0] = -1.5
        small_model.ability_logits[0, 0] = -3.0
        project_nonnegative(small_model)
        assert small_model.biases[0][0] == -1.5
        assert small_model.ability_logits[0, 0] == -3.0

    def test_idempotent(self, small_model):
        for w in small_model.weights:
            w -= 0.1
        once = [w.copy() for w in project_nonnegative(small_model).weights]
        twice = project_nonnegative(small_model).weights
        assert all(np.array_equal(a, b) for a, b in zip(once, twice))


class TestLrStep:
    def test_improving_unchanged(self):
        assert lr_step(0.001, [0.7, 0.6, 0.5]) == 0.001

    def test_two_stagnant_epochs_decay(self):
        assert lr_step(0.001, [0.7, 0.7, 0.7], patience=2) == pytest.approx(0.0008)

    def test_one_stagnant_epoch_waits(self):
        assert lr_step(0.001, [0.7, 0.6, 0.6], patience=2) == 0.001

    def test_improvement_below_min_delta_is_stagnant(self):
        assert stagnant_epochs([0.7, 0.699995, 0.699992]) == 2

    def test_floor(self):
        lr = 0.001
        for _ in range(100):
            lr = lr_step(lr, [0.5, 0.5, 0.5])
        assert lr == 1e-5

    def test_stagnation_measured_against_best(self):
        # third epoch is worse than the first, so both trailing epochs are stagnant
        assert stagnant_epochs([0.5, 0.6, 0.55]) == 2


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert (config.lr0, config.decay, config.batch_size) == (0.001, 0.8, 256)
        assert (config.max_epochs, config.patience, config.lr_floor) == (100, 2, 1e-5)
        assert config.hidden_sizes == (256, 1024, 128)

    @pytest.mark.parametrize(
        "field,value",
        [("lr0", 0.0), ("decay", 1.5), ("batch_size", 0), ("seed", -1), ("hidden_sizes", (8, 0))],
    )
    def test_rejects_out_of_domain(self, field, value):
        with pytest.raises(ValueError):
            TrainConfig(**{field: value})

    def test_floor_above_start_rejected(self):
        with pytest.raises(ValueError, match="lr_floor"):
            TrainConfig(lr0=1e-6)

    def test_with_seed_and_hash(self):
        config = TrainConfig()
        assert config.with_seed(9).seed == 9
        assert config_hash(config) == config_hash(TrainConfig())
        assert config_hash(config) != config_hash(config.with_seed(9))


@pytest.mark.usefixtures("synth_small")
class TestFit:
    def test_loss_decreases(self, synth_small, fast_config):
        config = fast_config.model_copy(update={"max_epochs": 30})
        result = train(synth_small.dataset, config)
        assert result.history[-1].loss < result.history[0].loss

    def test_weights_nonnegative_with_debug_checks(self, synth_small, fast_config):
        config = fast_config.model_copy(update={"debug_checks": True})
        model = fit(synth_small.dataset, config)
        assert all((w >= 0).all() for w in model.weights)

    def test_same_seed_same_checkpoint(self, synth_small, fast_config, tmp_path):
        a = save_checkpoint(fit(synth_small.dataset, fast_config), tmp_path / "a.ckpt")
        b = save_checkpoint(fit(synth_small.dataset, fast_config), tmp_path / "b.ckpt")
        assert a == b

    def test_different_seed_differs(self, synth_small, fast_config, tmp_path):
        a = save_checkpoint(fit(synth_small.dataset, fast_config), tmp_path / "a.ckpt")
        b = save_checkpoint(fit(synth_small.dataset, fast_config.with_seed(1)), tmp_path / "b.ckpt")
        assert a != b

    def test_epoch_log(self, synth_small, fast_config, tmp_path):
        log = tmp_path / "epochs.csv"
        result = train(synth_small.dataset, fast_config, log_path=log)
        df = pd.read_csv(log)
        assert list(df.columns) == ["epoch", "loss", "lr"]
        assert len(df) == len(result.history) == 5

    def test_held_out_cells_never_read(self, synth_small, fast_config):
        held = synth_small.dataset.hold_out(range(10))
        flipped = ResponseMatrix(
            held.model_ids,
            held.item_ids,
            np.where(np.arange(held.n_items) < 10, 1 - held.responses.entries, held.responses.entries),
            held.responses.mask,
        )
        a = fit(held, fast_config)
        b = fit(Dataset(flipped, held.q), fast_config)
        assert np.array_equal(a.ability_logits, b.ability_logits)

    def test_empty_training_set(self, tiny_dataset, fast_config):
        empty = tiny_dataset.hold_out(range(tiny_dataset.n_items))
        with pytest.raises(DataValidationError, match="empty training set"):
            fit(empty, fast_config)


class TestSaturatingFit:
    def test_all_correct_dataset(self):
        m, n, k = 10, 20, 3
        q = np.zeros((n, k), dtype=np.int8)
        q[np.arange(n), np.arange(n) % k] = 1
        dataset = Dataset(
            ResponseMatrix([f"m{i}" for i in range(m)], [f"i{i}" for i in range(n)], np.ones((m, n))),
            QMatrix([f"i{i}" for i in range(n)], [f"a{j}" for j in range(k)], q),
        )
        config = TrainConfig(hidden_sizes=(8, 8, 4), batch_size=32, max_epochs=80, lr0=0.02, seed=0)
        model = fit(dataset, config)
        users, items, _ = dataset.observed_triples()
        p = predict_proba(model, users, items)
        assert (p >= 0.9).mean() >= 0.95
