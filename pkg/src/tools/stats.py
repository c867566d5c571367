"""Statistical metrics: AUC, Spearman correlation with significance, per-dimension accuracy"""

import numpy as np
from scipy.stats import permutation_test, spearmanr
from sklearn.metrics import roc_auc_score

from src.errors import DataValidationError
from src.matrices import Dataset
from src.tools._shared import Estimate

# t-approximation at and above this size, permutation test below it
SPEARMAN_T_MIN_N = 10
PERMUTATION_RESAMPLES = 100_000


def auc(scores, labels) -> Estimate:
    """Mann-Whitney AUC with average-rank tie correction; undefined for single-class labels"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataValidationError(
            f"scores and labels must be equal-length vectors, got {scores.shape} and {labels.shape}"
        )
    if scores.size < 2:
        raise DataValidationError("auc needs at least two scored cells")
    if not np.isin(labels, (0, 1)).all():
        raise DataValidationError("auc labels must be 0 or 1")

    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        return Estimate.undefined("single-class labels")
    return Estimate(float(roc_auc_score(labels, scores)))


def spearman(x, y) -> Estimate:
    """Rank correlation with p-value; undefined when either input is constant"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataValidationError(f"spearman inputs differ in shape: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise DataValidationError(f"spearman needs at least 3 pairs, got {n}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return Estimate.undefined("zero variance")

    result = spearmanr(x, y)
    rho = float(result.statistic)
    if n >= SPEARMAN_T_MIN_N:
        return Estimate(rho, p_value=float(result.pvalue))

    # enumerates every pairing when n! fits in the resample budget, Monte Carlo otherwise
    perm = permutation_test(
        (x, y),
        lambda a, b: spearmanr(a, b).statistic,
        permutation_type="pairings",
        vectorized=False,
        n_resamples=PERMUTATION_RESAMPLES,
        alternative="two-sided",
        random_state=0,
    )
    return Estimate(rho, p_value=float(min(1.0, perm.pvalue)))


def accuracy_by_dimension(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """(M×K correct counts, M×K tagged-and-observed counts) over observed cells"""
    observed = dataset.responses.observed.astype(np.float64)
    correct = dataset.responses.entries.astype(np.float64) * observed
    q = dataset.q.entries.astype(np.float64)
    return correct @ q, observed @ q


def dim_accuracy(dataset: Dataset, model_index: int, dimension: int) -> Estimate:
    """Share of observed items tagged with `dimension` that the model answered correctly"""
    if not 0 <= model_index < dataset.n_models:
        raise DataValidationError(f"model index {model_index} out of range [0, {dataset.n_models})")
    if not 0 <= dimension < dataset.n_abilities:
        raise DataValidationError(
            f"dimension index {dimension} out of range [0, {dataset.n_abilities})"
        )
    observed = dataset.responses.observed[model_index]
    tagged = dataset.q.entries[:, dimension].astype(bool) & observed
    total = int(tagged.sum())
    if total == 0:
        return Estimate.undefined("no items in the benchmark")
    correct = int(dataset.responses.entries[model_index, tagged].sum())
    return Estimate(correct / total)
