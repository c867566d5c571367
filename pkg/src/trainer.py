"""Mini-batch training of the diagnostic network"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import TrainConfig
from src.diagnostic_net import Batch, DiagnosticModel, init_model, loss_and_gradients
from src.errors import DataValidationError, NumericalError
from src.matrices import Dataset

logger = logging.getLogger(__name__)


class Adam:
    """Adam over a dict of named arrays, updated in place"""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Adam":
        return cls(config.lr0, config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        step_size = self.lr / bc1

        for name, param in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            self.m[name] *= self.beta1
            self.m[name] += (1.0 - self.beta1) * g
            self.v[name] *= self.beta2
            self.v[name] += (1.0 - self.beta2) * (g * g)
            param -= step_size * self.m[name] / (np.sqrt(self.v[name] / bc2) + self.eps)


def project_nonnegative(model: DiagnosticModel) -> DiagnosticModel:
    """Clamp every MLP weight at 0 in place; biases and logits are left alone"""
    for w in model.weights:
        np.maximum(w, 0.0, out=w)
    return model


def stagnant_epochs(epoch_losses, min_delta: float = 1e-5) -> int:
    """Trailing epochs that failed to beat the best earlier loss by at least min_delta"""
    best = np.inf
    stagnant = 0
    for value in epoch_losses:
        if value < best - min_delta:
            best = value
            stagnant = 0
        else:
            stagnant += 1
    return stagnant


def lr_step(
    current_lr: float,
    epoch_losses,
    decay: float = 0.8,
    patience: int = 2,
    lr_floor: float = 1e-5,
    min_delta: float = 1e-5,
) -> float:
    """Decay once per `patience` stagnant epochs; never below lr_floor"""
    stagnant = stagnant_epochs(epoch_losses, min_delta)
    if stagnant > 0 and stagnant % patience == 0:
        return max(current_lr * decay, lr_floor)
    return current_lr


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    lr: float


@dataclass
class TrainResult:
    model: DiagnosticModel
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": [r.epoch for r in self.history],
                "loss": [r.loss for r in self.history],
                "lr": [r.lr for r in self.history],
            }
        )


def _check_nonnegative(model: DiagnosticModel, epoch: int) -> None:
    lowest = min(float(w.min()) for w in model.weights)
    if lowest < 0.0:
        raise NumericalError(f"epoch {epoch}: negative MLP weight {lowest} after projection")


def train(dataset: Dataset, config: TrainConfig, log_path=None) -> TrainResult:
    """Fit on every observed cell of `dataset`; held-out (masked) cells are never read"""
    users, items, labels = dataset.observed_triples()
    n = users.size
    if n == 0:
        raise DataValidationError("empty training set: no observed cells")

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(
        dataset.model_ids,
        dataset.item_ids,
        dataset.ability_ids,
        dataset.q.entries,
        np.random.default_rng(init_seq),
        config.hidden_sizes,
    )
    shuffle_rng = np.random.default_rng(shuffle_seq)
    optimizer = Adam.from_config(config)
    params = model.parameters()

    logger.info(
        "Training on %d cells (%d models × %d items × %d abilities), seed %d",
        n,
        dataset.n_models,
        dataset.n_items,
        dataset.n_abilities,
        config.seed,
    )

    result = TrainResult(model)
    lr = config.lr0
    for epoch in range(1, config.max_epochs + 1):
        optimizer.lr = lr
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_loss, grads = loss_and_gradients(Batch(users[idx], items[idx], labels[idx]), model)
            if not np.isfinite(batch_loss):
                raise NumericalError(f"epoch {epoch}: non-finite loss {batch_loss}")
            optimizer.step(params, grads)
            project_nonnegative(model)
            if config.debug_checks:
                _check_nonnegative(model, epoch)
            total += batch_loss * idx.size

        epoch_loss = total / n
        result.history.append(EpochRecord(epoch, epoch_loss, lr))
        logger.info("epoch %3d  loss %.6f  lr %.3g", epoch, epoch_loss, lr)

        losses = result.losses
        if lr <= config.lr_floor and stagnant_epochs(losses, config.min_delta) >= config.patience:
            logger.info("Stopping at epoch %d: lr at floor and loss plateaued", epoch)
            break
        lr = lr_step(lr, losses, config.decay, config.patience, config.lr_floor, config.min_delta)

    if log_path is not None:
        result.to_frame().to_csv(Path(log_path), index=False, lineterminator="\n")
    return result


def fit(dataset: Dataset, config: TrainConfig, log_path=None) -> DiagnosticModel:
    return train(dataset, config, log_path).model
