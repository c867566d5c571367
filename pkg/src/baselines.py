"""Comparison predictors for unseen items: overall accuracy, unidimensional 2PL IRT,
and truncated-normal random scores"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config import TrainConfig
from src.diagnostic_net import PROB_EPS
from src.errors import DataValidationError, NumericalError
from src.matrices import Dataset
from src.tools._shared import sigmoid
from src.trainer import Adam, lr_step, stagnant_epochs

logger = logging.getLogger(__name__)

ACCURACY = "accuracy"
UNIDIM_IRT = "unidim_irt"
RANDOM = "random"
BASELINES = (ACCURACY, UNIDIM_IRT, RANDOM)

RANDOM_MEAN = 0.5
RANDOM_STD = 0.2


def accuracy_scores(train: Dataset) -> np.ndarray:
    """Per-model mean of observed responses"""
    observed = train.responses.observed
    counts = observed.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DataValidationError(
            f"model '{train.model_ids[empty[0]]}' has no observed responses"
        )
    correct = (train.responses.entries * observed).sum(axis=1)
    return correct / counts


def accuracy_baseline(train: Dataset, model_index: int) -> float:
    """Constant score for every unseen item: the model's observed accuracy"""
    if not 0 <= model_index < train.n_models:
        raise DataValidationError(f"model index {model_index} out of range [0, {train.n_models})")
    observed = train.responses.observed[model_index]
    if not observed.any():
        raise DataValidationError(
            f"model '{train.model_ids[model_index]}' has no observed responses"
        )
    return float(train.responses.entries[model_index, observed].mean())


@dataclass(eq=False)
class UnidimIRT:
    """2PL model p = sigmoid(disc · (theta − diff)) with disc = exp(log_disc) > 0"""

    theta: np.ndarray  # M
    item_diff: np.ndarray  # N
    log_disc: np.ndarray  # N
    model_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @property
    def item_disc(self) -> np.ndarray:
        return np.exp(self.log_disc)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "item_diff": self.item_diff, "log_disc": self.log_disc}


def unidim_predict(model: UnidimIRT, users, items) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    disc = np.exp(model.log_disc[items])
    return sigmoid(disc * (model.theta[users] - model.item_diff[items]))


def unidim_predict_unseen(model: UnidimIRT, users) -> np.ndarray:
    """Unseen items have diff 0 and disc 1 on the logit scale, so the score is sigmoid(theta)"""
    return sigmoid(model.theta[np.asarray(users, dtype=np.int64)])


def _bce(p: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def unidim_loss(model: UnidimIRT, dataset: Dataset) -> float:
    """Mean BCE over the observed cells of `dataset`"""
    users, items, labels = dataset.observed_triples()
    if users.size == 0:
        raise DataValidationError("no observed cells to score")
    return _bce(unidim_predict(model, users, items), labels)


def _unidim_gradients(model: UnidimIRT, users, items, labels) -> tuple[float, dict]:
    disc = np.exp(model.log_disc[items])
    gap = model.theta[users] - model.item_diff[items]
    p = sigmoid(disc * gap)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    delta = np.where(inside, (p - labels) / users.size, 0.0)

    d_theta = np.zeros_like(model.theta)
    np.add.at(d_theta, users, delta * disc)
    d_diff = np.zeros_like(model.item_diff)
    np.add.at(d_diff, items, -delta * disc)
    d_log_disc = np.zeros_like(model.log_disc)
    np.add.at(d_log_disc, items, delta * disc * gap)
    return _bce(p, labels), {"theta": d_theta, "item_diff": d_diff, "log_disc": d_log_disc}


def unidim_fit(train: Dataset, config: TrainConfig) -> UnidimIRT:
    """Fit the 2PL baseline with the same Adam, batching and lr schedule as the diagnostic net"""
    users, items, labels = train.observed_triples()
    n = users.size
    if n == 0:
        raise DataValidationError("empty training set: no observed cells")

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.default_rng(init_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    model = UnidimIRT(
        theta=init_rng.uniform(-0.01, 0.01, size=train.n_models),
        item_diff=init_rng.uniform(-0.01, 0.01, size=train.n_items),
        log_disc=np.zeros(train.n_items),
        model_ids=train.model_ids,
        item_ids=train.item_ids,
    )
    optimizer = Adam.from_config(config)
    params = model.parameters()

    losses: list[float] = []
    lr = config.lr0
    for epoch in range(1, config.max_epochs + 1):
        optimizer.lr = lr
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_loss, grads = _unidim_gradients(model, users[idx], items[idx], labels[idx])
            if not np.isfinite(batch_loss):
                raise NumericalError(f"unidim epoch {epoch}: non-finite loss {batch_loss}")
            optimizer.step(params, grads)
            total += batch_loss * idx.size
        losses.append(total / n)
        logger.debug("unidim epoch %3d  loss %.6f  lr %.3g", epoch, losses[-1], lr)

        if lr <= config.lr_floor and stagnant_epochs(losses, config.min_delta) >= config.patience:
            break
        lr = lr_step(lr, losses, config.decay, config.patience, config.lr_floor, config.min_delta)

    logger.info("Unidimensional IRT fit: %d epochs, loss %.6f", len(losses), losses[-1])
    return model


def random_baseline(n_items: int, seed: int) -> np.ndarray:
    """Draws from N(0.5, 0.2²) truncated to [0, 1] by rejection"""
    if n_items < 1:
        raise DataValidationError(f"n_items must be at least 1, got {n_items}")
    rng = np.random.default_rng(seed)
    kept: list[np.ndarray] = []
    remaining = n_items
    while remaining > 0:
        draws = rng.normal(RANDOM_MEAN, RANDOM_STD, size=remaining + 16)
        draws = draws[(draws >= 0.0) & (draws <= 1.0)][:remaining]
        kept.append(draws)
        remaining -= draws.size
    return np.concatenate(kept)
