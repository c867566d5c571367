"""Validate ability estimates: criterion validity against per-dimension accuracy and
cross-benchmark consistency"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.errors import DataValidationError
from src.matrices import Dataset, QMatrix
from src.tools._shared import Estimate
from src.tools.stats import accuracy_by_dimension, spearman

STRONG, MODERATE, WEAK, NONSIGNIFICANT, NOT_APPLICABLE = (
    "strong",
    "moderate",
    "weak",
    "nonsignificant",
    "N/A",
)
CLASSES = (STRONG, MODERATE, WEAK, NONSIGNIFICANT, NOT_APPLICABLE)

DEFAULT_ALPHA = 0.05
CONSISTENCY_MIN_ITEMS = 10


def classify(estimate: Estimate, n_items: int, alpha: float = DEFAULT_ALPHA) -> str:
    """Bin a correlation: strong > 0.7, moderate > 0.5, weak > 0.3, else nonsignificant"""
    if n_items == 0:
        return NOT_APPLICABLE
    if not estimate.defined:
        return NONSIGNIFICANT
    if estimate.p_value is None or estimate.p_value > alpha or estimate.value <= 0.3:
        return NONSIGNIFICANT
    if estimate.value > 0.7:
        return STRONG
    if estimate.value > 0.5:
        return MODERATE
    return WEAK


@dataclass(frozen=True)
class ValidityRow:
    dimension: str
    benchmark: str
    n_items: int
    estimate: Estimate
    label: str


@dataclass(frozen=True)
class ValidityTable:
    rows: tuple[ValidityRow, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "dimension": [r.dimension for r in self.rows],
                "benchmark": [r.benchmark for r in self.rows],
                "n_items": [r.n_items for r in self.rows],
                "rho": [r.estimate.value for r in self.rows],
                "p": [r.estimate.p_value for r in self.rows],
                "class": [r.label for r in self.rows],
            }
        )

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def class_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(CLASSES, 0)
        for row in self.rows:
            counts[row.label] += 1
        return counts


def _correlate_columns(x: np.ndarray, y: np.ndarray) -> Estimate:
    if x.size < 3:
        return Estimate.undefined(f"only {x.size} models with tagged observed items")
    return spearman(x, y)


def validity_from_profiles(
    profiles: np.ndarray, dataset: Dataset, benchmark: str = "", alpha: float = DEFAULT_ALPHA
) -> ValidityTable:
    """Spearman between each ability column and the matching per-dimension accuracy"""
    profiles = np.asarray(profiles, dtype=np.float64)
    if profiles.shape != (dataset.n_models, dataset.n_abilities):
        raise DataValidationError(
            f"profiles shape {profiles.shape} does not match dataset "
            f"{(dataset.n_models, dataset.n_abilities)}"
        )
    correct, tagged = accuracy_by_dimension(dataset)
    coverage = dataset.q.column_counts()

    rows = []
    for j, ability_id in enumerate(dataset.ability_ids):
        n_items = int(coverage[j])
        if n_items == 0:
            estimate = Estimate.undefined("no items in the benchmark")
        else:
            has = tagged[:, j] > 0
            accuracy = correct[has, j] / tagged[has, j]
            estimate = _correlate_columns(profiles[has, j], accuracy)
        rows.append(
            ValidityRow(ability_id, benchmark, n_items, estimate, classify(estimate, n_items, alpha))
        )
    return ValidityTable(tuple(rows))


def criterion_validity(
    model, dataset: Dataset, benchmark: str = "", alpha: float = DEFAULT_ALPHA
) -> ValidityTable:
    """Criterion validity of a trained model's ability profiles on `dataset`"""
    if tuple(model.ability_ids) != dataset.ability_ids:
        raise DataValidationError("model and dataset ability dimensions differ")
    if tuple(model.model_ids) != dataset.model_ids:
        raise DataValidationError("model and dataset list different models (or in another order)")
    return validity_from_profiles(model.profiles(), dataset, benchmark, alpha)


def validity_summary(table: ValidityTable, min_items: int = CONSISTENCY_MIN_ITEMS) -> dict:
    """Class counts plus the share of well-covered dimensions at moderate or above"""
    covered = [r for r in table.rows if r.n_items > min_items]
    good = sum(r.label in (STRONG, MODERATE) for r in covered)
    return {
        "class_counts": table.class_counts(),
        "covered_dimensions": len(covered),
        "moderate_or_strong": good,
        "share_moderate_or_strong": good / len(covered) if covered else None,
    }


@dataclass(frozen=True)
class ConsistencyRow:
    dimension: str
    n_items_a: int
    n_items_b: int
    estimate: Estimate


@dataclass(frozen=True)
class ConsistencyTable:
    rows: tuple[ConsistencyRow, ...]
    reason: str | None = None

    @property
    def empty(self) -> bool:
        return not self.rows

    def rhos(self) -> np.ndarray:
        return np.array([r.estimate.value for r in self.rows if r.estimate.defined])

    def summary(self) -> dict:
        rhos = self.rhos()
        return {
            "eligible_dimensions": len(self.rows),
            "median_rho": float(np.median(rhos)) if rhos.size else None,
            "above_0_5": int((rhos > 0.5).sum()),
            "reason": self.reason,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "dimension": [r.dimension for r in self.rows],
                "n_items_a": [r.n_items_a for r in self.rows],
                "n_items_b": [r.n_items_b for r in self.rows],
                "rho": [r.estimate.value for r in self.rows],
                "p": [r.estimate.p_value for r in self.rows],
            }
        )


def consistency(
    profiles_a: np.ndarray,
    profiles_b: np.ndarray,
    q_a: QMatrix,
    q_b: QMatrix,
    min_items: int = CONSISTENCY_MIN_ITEMS,
) -> ConsistencyTable:
    """Rank agreement of two fits' ability columns on dimensions both benchmarks cover"""
    profiles_a = np.asarray(profiles_a, dtype=np.float64)
    profiles_b = np.asarray(profiles_b, dtype=np.float64)
    if profiles_a.shape != profiles_b.shape:
        raise DataValidationError(
            f"profile shapes differ: {profiles_a.shape} vs {profiles_b.shape}"
        )
    if q_a.ability_ids != q_b.ability_ids or profiles_a.shape[1] != q_a.n_abilities:
        raise DataValidationError("consistency requires one shared ability space")

    counts_a, counts_b = q_a.column_counts(), q_b.column_counts()
    rows = []
    for j, ability_id in enumerate(q_a.ability_ids):
        if counts_a[j] > min_items and counts_b[j] > min_items:
            estimate = spearman(profiles_a[:, j], profiles_b[:, j])
            rows.append(ConsistencyRow(ability_id, int(counts_a[j]), int(counts_b[j]), estimate))

    reason = None if rows else f"no dimension has more than {min_items} items in both"
    return ConsistencyTable(tuple(rows), reason)
