"""Experiment protocols: within-benchmark item splits, cross-benchmark transfer and
cross-benchmark consistency of ability estimates"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.baselines import (
    ACCURACY,
    RANDOM,
    UNIDIM_IRT,
    accuracy_scores,
    random_baseline,
    unidim_fit,
    unidim_predict_unseen,
)
from src.config import TrainConfig
from src.diagnostic_net import DiagnosticModel, check_index, check_q_row, score_unseen
from src.errors import DataValidationError, DiagnosisError, PlanError
from src.matrices import Dataset, align, load_q_matrix, load_response_matrix
from src.tools._shared import Estimate, summarize
from src.tools.stats import auc
from src.tools.validation import CONSISTENCY_MIN_ITEMS, ConsistencyTable, consistency
from src.trainer import fit

logger = logging.getLogger(__name__)

DIAGNOSTIC = "diagnostic"
PREDICTORS = (DIAGNOSTIC, ACCURACY, UNIDIM_IRT, RANDOM)


class DatasetRef(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    responses: Path
    qmatrix: Path


class ExperimentPlan(BaseModel):
    """Split settings plus training configuration for one evaluation run"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["within", "cross", "consistency"]
    prediction_fraction: float = Field(0.10, gt=0, lt=1)
    repeats: int = Field(10, gt=0)
    seeds: tuple[int, ...] = tuple(range(10))
    source: DatasetRef
    target: DatasetRef | None = None
    train: TrainConfig = TrainConfig()
    baselines: bool = True
    min_items: int = Field(CONSISTENCY_MIN_ITEMS, ge=0)
    alpha: float = Field(0.05, gt=0, lt=1)

    @model_validator(mode="before")
    @classmethod
    def _fill_seeds(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            if data.get("seeds") is None:
                data["seeds"] = list(range(data.get("repeats", 10)))
            data.setdefault("repeats", len(data["seeds"]))
        return data

    @model_validator(mode="after")
    def _check_shape(self) -> "ExperimentPlan":
        if self.repeats != len(self.seeds):
            raise ValueError(f"repeats ({self.repeats}) must equal the number of seeds ({len(self.seeds)})")
        if any(not 0 <= s < 2**64 for s in self.seeds):
            raise ValueError("seeds must be unsigned 64-bit integers")
        if self.kind in ("cross", "consistency") and self.target is None:
            raise ValueError(f"a {self.kind} plan needs a target dataset")
        if self.kind == "within" and self.target is not None:
            raise ValueError("a within plan takes only a source dataset")
        return self


def load_plan(path) -> ExperimentPlan:
    """Read a JSON plan; dataset paths are relative to the plan file"""
    path = Path(path)
    if not path.is_file():
        raise PlanError(f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise PlanError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise PlanError(f"{path}: plan must be a JSON object")

    for key in ("source", "target"):
        ref = raw.get(key)
        if isinstance(ref, dict):
            raw[key] = {
                **ref,
                **{f: str(path.parent / ref[f]) for f in ("responses", "qmatrix") if f in ref},
            }
    try:
        return ExperimentPlan.model_validate(raw)
    except ValidationError as e:
        raise PlanError(f"{path}: {e}") from e


def load_dataset(ref: DatasetRef) -> Dataset:
    return align(load_response_matrix(ref.responses), load_q_matrix(ref.qmatrix))


def heldout_count(n_items: int, fraction: float) -> int:
    return max(1, math.floor(fraction * n_items + 1e-9))


def within_split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, np.ndarray]:
    """Mask a seeded random `fraction` of item columns; returns (train copy, sorted held-out indices)"""
    if not 0 < fraction < 1:
        raise PlanError(f"degenerate prediction fraction {fraction}; must lie in (0, 1)")
    count = heldout_count(dataset.n_items, fraction)
    if count >= dataset.n_items:
        raise PlanError(
            f"fraction {fraction} holds out all {dataset.n_items} items; nothing left to train on"
        )
    heldout = np.sort(np.random.default_rng(seed).choice(dataset.n_items, count, replace=False))
    return dataset.hold_out(heldout), heldout


def predict_unseen(model: DiagnosticModel, model_index: int, q_row) -> float:
    """Score an item the model never saw: difficulty 0.5 on every dimension, discrimination 1.0"""
    m = check_index(model_index, model.n_models, "model")
    q = check_q_row(q_row, model.n_abilities)
    return float(score_unseen(model, [m], q[None, :])[0])


def _unseen_grid(model: DiagnosticModel, q_rows: np.ndarray) -> np.ndarray:
    """M×n scores for every model on every given q row"""
    m, n = model.n_models, q_rows.shape[0]
    users = np.repeat(np.arange(m), n)
    return score_unseen(model, users, np.tile(q_rows, (m, 1))).reshape(m, n)


def _per_model_auc(scores: np.ndarray, labels: np.ndarray, observed: np.ndarray) -> list[Estimate]:
    out = []
    for m in range(scores.shape[0]):
        cells = observed[m]
        if cells.sum() < 2:
            out.append(Estimate.undefined("fewer than two scored cells"))
            continue
        out.append(auc(scores[m, cells], labels[m, cells]))
    return out


def _score_all(
    model: DiagnosticModel,
    train: Dataset,
    q_rows: np.ndarray,
    labels: np.ndarray,
    observed: np.ndarray,
    config: TrainConfig,
    seed: int,
    with_baselines: bool,
) -> dict[str, list[Estimate]]:
    """Per-model AUC for the diagnostic net and each baseline on the same unseen cells"""
    shape = labels.shape
    scores = {DIAGNOSTIC: _unseen_grid(model, q_rows)}
    if with_baselines:
        scores[ACCURACY] = np.repeat(accuracy_scores(train)[:, None], shape[1], axis=1)
        unidim = unidim_fit(train, config)
        theta_scores = unidim_predict_unseen(unidim, np.arange(shape[0]))
        scores[UNIDIM_IRT] = np.repeat(theta_scores[:, None], shape[1], axis=1)
        scores[RANDOM] = random_baseline(shape[0] * shape[1], seed).reshape(shape)
    return {name: _per_model_auc(s, labels, observed) for name, s in scores.items()}


@dataclass
class ProtocolResult:
    """Per-(repeat, model) AUC for every predictor, plus what was split and how"""

    kind: str
    model_ids: tuple[str, ...]
    seeds: tuple[int, ...]
    aucs: dict[str, list[list[Estimate]]] = field(default_factory=dict)
    heldout_counts: list[int] = field(default_factory=list)
    degenerate_pair: bool = False
    full_fit: DiagnosticModel | None = None

    @property
    def predictors(self) -> list[str]:
        return list(self.aucs)

    def add_repeat(self, scored: dict[str, list[Estimate]]) -> None:
        for name, per_model in scored.items():
            self.aucs.setdefault(name, []).append(per_model)

    def per_model(self, predictor: str) -> pd.DataFrame:
        """mean ± std over repeats per model, with the excluded (undefined) count"""
        repeats = self.aucs[predictor]
        rows = []
        for m, model_id in enumerate(self.model_ids):
            stats = summarize([r[m] for r in repeats])
            rows.append({"model_id": model_id, **stats})
        return pd.DataFrame(rows, columns=["model_id", "mean", "std", "n", "n_excluded"])

    def model_means(self, predictor: str) -> np.ndarray:
        """Per-model mean AUC, the distribution behind the boxplot data"""
        means = self.per_model(predictor)["mean"].dropna()
        return means.to_numpy(dtype=np.float64)

    def overall(self, predictor: str) -> dict:
        return summarize([e for r in self.aucs[predictor] for e in r])


def _check_kind(plan: ExperimentPlan, *kinds: str) -> None:
    if plan.kind not in kinds:
        raise PlanError(f"plan kind '{plan.kind}' cannot drive this protocol")


def _audit_mask(train: Dataset, heldout: np.ndarray) -> None:
    if train.responses.observed[:, heldout].any():
        raise DiagnosisError("held-out cells leaked into the training mask")


def run_within(dataset: Dataset, plan: ExperimentPlan) -> ProtocolResult:
    """Repeat: split items, refit on the rest, score held-out items per model"""
    _check_kind(plan, "within")
    result = ProtocolResult("within", dataset.model_ids, plan.seeds)
    observed = dataset.responses.observed

    for repeat, seed in enumerate(plan.seeds, start=1):
        train, heldout = within_split(dataset, plan.prediction_fraction, seed)
        _audit_mask(train, heldout)
        config = plan.train.with_seed(seed)
        logger.info("Within repeat %d/%d: seed %d, %d held-out items", repeat, plan.repeats, seed, heldout.size)

        model = fit(train, config)
        scored = _score_all(
            model,
            train,
            dataset.q.entries[heldout],
            dataset.responses.entries[:, heldout],
            observed[:, heldout],
            config,
            seed,
            plan.baselines,
        )
        result.add_repeat(scored)
        result.heldout_counts.append(int(heldout.size))
    return result


def _match_models(source: Dataset, target: Dataset) -> Dataset:
    """Target rows permuted into the source's model order"""
    if set(source.model_ids) != set(target.model_ids):
        only_s = sorted(set(source.model_ids) - set(target.model_ids))
        only_t = sorted(set(target.model_ids) - set(source.model_ids))
        raise DataValidationError(
            f"model id mismatch; only in source: {', '.join(only_s) or '-'}; "
            f"only in target: {', '.join(only_t) or '-'}"
        )
    position = {m: i for i, m in enumerate(target.model_ids)}
    return target.take_models([position[m] for m in source.model_ids])


def _match_abilities(source: Dataset, target: Dataset) -> None:
    if source.ability_ids != target.ability_ids:
        raise DataValidationError(
            f"ability dimension mismatch: source has {source.n_abilities}, "
            f"target has {target.n_abilities} (ids must match in order)"
        )


def run_cross(source: Dataset, target: Dataset, plan: ExperimentPlan) -> ProtocolResult:
    """Fit on the full source per seed, score every target item with neutral item parameters"""
    _check_kind(plan, "cross")
    _match_abilities(source, target)
    target = _match_models(source, target)

    result = ProtocolResult("cross", source.model_ids, plan.seeds)
    result.degenerate_pair = source.digest() == target.digest()
    if result.degenerate_pair:
        logger.warning("Source and target are the same dataset (degenerate pair)")

    for repeat, seed in enumerate(plan.seeds, start=1):
        config = plan.train.with_seed(seed)
        logger.info("Cross repeat %d/%d: seed %d", repeat, plan.repeats, seed)
        model = fit(source, config)
        if result.full_fit is None:
            result.full_fit = model
        scored = _score_all(
            model,
            source,
            target.q.entries,
            target.responses.entries,
            target.responses.observed,
            config,
            seed,
            plan.baselines,
        )
        result.add_repeat(scored)
        result.heldout_counts.append(target.n_items)
    return result


@dataclass
class ConsistencyResult:
    table: ConsistencyTable
    model_a: DiagnosticModel
    model_b: DiagnosticModel
    seed: int


def run_consistency(a: Dataset, b: Dataset, plan: ExperimentPlan) -> ConsistencyResult:
    """Fit both datasets independently with the plan's first seed and compare ability columns"""
    _check_kind(plan, "consistency", "cross")
    _match_abilities(a, b)
    b = _match_models(a, b)
    seed = plan.seeds[0]
    config = plan.train.with_seed(seed)

    model_a = fit(a, config)
    model_b = fit(b, config)
    table = consistency(model_a.profiles(), model_b.profiles(), a.q, b.q, plan.min_items)
    if table.empty:
        logger.warning("Consistency: %s", table.reason)
    return ConsistencyResult(table, model_a, model_b, seed)


def split_halves(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Two item-disjoint halves of one dataset, sharing models and ability space"""
    if dataset.n_items < 2:
        raise DataValidationError("need at least two items to split into halves")
    order = np.random.default_rng(seed).permutation(dataset.n_items)
    half = dataset.n_items // 2
    return dataset.take_items(np.sort(order[:half])), dataset.take_items(np.sort(order[half:]))
