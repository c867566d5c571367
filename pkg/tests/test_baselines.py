"""Tests for the comparison predictors"""

import math

import numpy as np
import pytest

from src.baselines import (
    UnidimIRT,
    _unidim_gradients,
    accuracy_baseline,
    accuracy_scores,
    random_baseline,
    unidim_fit,
    unidim_loss,
    unidim_predict,
    unidim_predict_unseen,
)
from src.diagnostic_net import Batch, loss
from src.errors import DataValidationError
from src.matrices import Dataset, QMatrix, ResponseMatrix
from src.tools import auc, spearman
from src.trainer import fit


def one_model_dataset(correct, total):
    items = [f"i{i}" for i in range(total)]
    entries = np.zeros((1, total), dtype=np.int8)
    entries[0, :correct] = 1
    return Dataset(ResponseMatrix(["m0"], items, entries), QMatrix(items, ["a0"], np.ones((total, 1))))


class TestAccuracyBaseline:
    def test_thirty_of_forty(self):
        assert accuracy_baseline(one_model_dataset(30, 40), 0) == 0.75

    def test_only_observed_cells_count(self):
        dataset = one_model_dataset(30, 40).hold_out(range(30, 40))
        assert accuracy_baseline(dataset, 0) == 1.0

    def test_scores_match_row_means(self, tiny_dataset):
        assert accuracy_scores(tiny_dataset) == pytest.approx([4 / 6, 3 / 6, 2 / 6, 1.0])

    def test_constant_score_auc_is_one_half(self):
        labels = np.array([1, 0, 1, 1, 0, 0, 1, 0])
        assert auc(np.full(8, 0.62), labels).value == 0.5

    def test_no_observed_responses(self):
        dataset = one_model_dataset(3, 4).hold_out(range(4))
        with pytest.raises(DataValidationError, match="no observed responses"):
            accuracy_baseline(dataset, 0)
        with pytest.raises(DataValidationError, match="no observed responses"):
            accuracy_scores(dataset)

    def test_index_out_of_range(self):
        with pytest.raises(DataValidationError, match="out of range"):
            accuracy_baseline(one_model_dataset(3, 4), 1)


class TestUnidimIRT:
    def setup_method(self):
        self.model = UnidimIRT(
            theta=np.array([0.3, -1.0]),
            item_diff=np.array([0.3, 0.5, -0.2]),
            log_disc=np.array([0.0, np.log(2.0), -0.5]),
            model_ids=("m0", "m1"),
            item_ids=("i0", "i1", "i2"),
        )

    def test_ability_equal_difficulty_is_one_half(self):
        assert unidim_predict(self.model, [0], [0])[0] == 0.5

    def test_discrimination_scales_gap(self):
        p = unidim_predict(self.model, [1], [1])[0]
        assert p == pytest.approx(1 / (1 + math.exp(-2.0 * (-1.5))))

    def test_unseen_score_is_sigmoid_theta(self):
        assert unidim_predict_unseen(self.model, [0, 1]) == pytest.approx(
            1 / (1 + np.exp(-self.model.theta))
        )

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(0)
        users = rng.integers(0, 2, size=30)
        items = rng.integers(0, 3, size=30)
        labels = rng.integers(0, 2, size=30).astype(float)
        _, analytic = _unidim_gradients(self.model, users, items, labels)
        h = 1e-6
        for name, param in self.model.parameters().items():
            for idx in np.ndindex(param.shape):
                original = param[idx]
                param[idx] = original + h
                up, _ = _unidim_gradients(self.model, users, items, labels)
                param[idx] = original - h
                down, _ = _unidim_gradients(self.model, users, items, labels)
                param[idx] = original
                assert analytic[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)

    def test_fit_beats_coin_flip(self, synth_small, fast_config):
        config = fast_config.model_copy(update={"max_epochs": 20})
        model = unidim_fit(synth_small.dataset, config)
        assert unidim_loss(model, synth_small.dataset) < math.log(2)
        accuracy = accuracy_scores(synth_small.dataset)
        assert spearman(model.theta, accuracy).value > 0.5

    def test_seen_cell_fit_no_better_than_diagnostic(self, two_group_dataset, fast_config):
        # opposite group strengths cannot share one ability axis: unidim BCE stays >= ln2 / 2
        config = fast_config.model_copy(
            update={"hidden_sizes": (16,), "lr0": 0.05, "batch_size": 32, "max_epochs": 150}
        )
        unidim = unidim_fit(two_group_dataset, config)
        diagnostic = fit(two_group_dataset, config)
        seen = Batch(*two_group_dataset.observed_triples())
        unidim_bce = unidim_loss(unidim, two_group_dataset)
        assert unidim_bce >= math.log(2) / 2 - 1e-9
        assert loss(seen, diagnostic) < unidim_bce

    def test_fit_deterministic(self, synth_small, fast_config):
        a = unidim_fit(synth_small.dataset, fast_config)
        b = unidim_fit(synth_small.dataset, fast_config)
        assert np.array_equal(a.theta, b.theta)

    def test_empty_training_set(self, tiny_dataset, fast_config):
        with pytest.raises(DataValidationError, match="empty training set"):
            unidim_fit(tiny_dataset.hold_out(range(6)), fast_config)


class TestRandomBaseline:
    def test_mean_near_one_half(self):
        draws = random_baseline(100_000, seed=0)
        assert 0.49 <= draws.mean() <= 0.51

    def test_inside_unit_interval(self):
        draws = random_baseline(10_000, seed=1)
        assert draws.shape == (10_000,)
        assert draws.min() >= 0.0 and draws.max() <= 1.0

    def test_seeded(self):
        assert np.array_equal(random_baseline(50, seed=3), random_baseline(50, seed=3))
        assert not np.array_equal(random_baseline(50, seed=3), random_baseline(50, seed=4))

    def test_auc_centred_on_one_half(self):
        labels = np.tile([0, 1], 50)
        values = [auc(random_baseline(100, seed=s), labels).value for s in range(1000)]
        assert 0.45 <= np.mean(values) <= 0.55

    def test_needs_positive_count(self):
        with pytest.raises(DataValidationError, match="at least 1"):
            random_baseline(0, seed=0)
