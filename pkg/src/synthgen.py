"""Synthetic ground truth: abilities, Q-matrices and responses from a compensatory
logistic generator, plus coverage templates"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import DATA_DIR
from src.errors import DataValidationError
from src.matrices import RESPONSE_KEY, Dataset, QMatrix, ResponseMatrix
from src.tools._shared import sigmoid
from src.tools.stats import spearman

logger = logging.getLogger(__name__)

ABILITY_RANGE = (0.05, 0.95)
DIFFICULTY_RANGE = (0.2, 0.8)
DISCRIMINATION_RANGE = (0.5, 1.0)
MAX_REGENERATE = 100
MIN_ACCURACY_SPREAD = 0.05
RECOVERY_MIN_ITEMS = 30

TEMPLATES_FILE = "coverage_templates.json"


class SynthSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_models: int = Field(gt=0)
    n_items: int = Field(gt=0)
    n_abilities: int = Field(gt=0)
    min_abilities: int = Field(1, gt=0)
    max_abilities: int = Field(4, gt=0)
    beta: float = Field(5.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_subset_sizes(self) -> "SynthSpec":
        if self.min_abilities > self.max_abilities:
            raise ValueError("min_abilities exceeds max_abilities")
        if self.max_abilities > self.n_abilities:
            raise ValueError(
                f"max_abilities ({self.max_abilities}) exceeds n_abilities ({self.n_abilities})"
            )
        return self


@dataclass(frozen=True, eq=False)
class SyntheticData:
    true_abilities: np.ndarray  # M×K in (0, 1)
    q: QMatrix
    responses: ResponseMatrix
    difficulty: np.ndarray  # N×K, zero off the item's abilities
    discrimination: np.ndarray  # N

    def __iter__(self):
        return iter((self.true_abilities, self.q, self.responses))

    @property
    def dataset(self) -> Dataset:
        return Dataset(self.responses, self.q)


def model_ids(n: int) -> list[str]:
    return [f"model_{m}" for m in range(n)]


def item_ids(n: int) -> list[str]:
    return [f"item_{i}" for i in range(n)]


def ability_ids(n: int) -> list[str]:
    return [f"ability_{j}" for j in range(n)]


def success_probability(
    abilities: np.ndarray, q: np.ndarray, difficulty: np.ndarray, discrimination: np.ndarray, beta: float
) -> np.ndarray:
    """sigmoid(beta · c_i · mean over item i's abilities of (a_mj − d_ij)), M×N"""
    q = q.astype(np.float64)
    sizes = q.sum(axis=1)
    gap = (abilities @ q.T - (difficulty * q).sum(axis=1)) / sizes
    return sigmoid(beta * discrimination * gap)


def _random_q(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    sizes = rng.integers(spec.min_abilities, spec.max_abilities + 1, size=spec.n_items)
    q = np.zeros((spec.n_items, spec.n_abilities), dtype=np.int8)
    for i, size in enumerate(sizes):
        q[i, rng.choice(spec.n_abilities, size, replace=False)] = 1
    return q


def _single_class(responses: np.ndarray) -> np.ndarray:
    correct = responses.sum(axis=1)
    return np.flatnonzero((correct == 0) | (correct == responses.shape[1]))


def generate(spec: SynthSpec, q: QMatrix | None = None) -> SyntheticData:
    """Seed-deterministic draw; a fixed Q-matrix (e.g. a coverage template) may be supplied"""
    rng = np.random.default_rng(spec.seed)
    if q is None:
        q_entries = _random_q(spec, rng)
        q = QMatrix(item_ids(spec.n_items), ability_ids(spec.n_abilities), q_entries)
    elif (q.n_items, q.n_abilities) != (spec.n_items, spec.n_abilities):
        raise DataValidationError(
            f"Q-matrix is {q.n_items}×{q.n_abilities}, spec asks for "
            f"{spec.n_items}×{spec.n_abilities}"
        )
    q_entries = q.entries

    abilities = rng.uniform(*ABILITY_RANGE, size=(spec.n_models, spec.n_abilities))
    difficulty = rng.uniform(*DIFFICULTY_RANGE, size=(spec.n_items, spec.n_abilities)) * q_entries
    discrimination = rng.uniform(*DISCRIMINATION_RANGE, size=spec.n_items)
    prob = success_probability(abilities, q_entries, difficulty, discrimination, spec.beta)
    responses = (rng.random(prob.shape) < prob).astype(np.int8)

    if spec.n_items >= 2:
        for attempt in range(1, MAX_REGENERATE + 1):
            bad = _single_class(responses)
            if bad.size == 0:
                break
            sub_rng = np.random.default_rng([spec.seed, attempt])
            responses[bad] = (sub_rng.random((bad.size, spec.n_items)) < prob[bad]).astype(np.int8)
        else:
            logger.warning(
                "%d model(s) still answer every item alike after %d redraws",
                _single_class(responses).size,
                MAX_REGENERATE,
            )

    spread = float(responses.mean(axis=1).std())
    if spread < MIN_ACCURACY_SPREAD:
        logger.warning("Accuracy spread across models is %.4f; the signal may be too weak", spread)
    logger.info(
        "Generated %d models × %d items × %d abilities (seed %d, accuracy spread %.3f)",
        spec.n_models,
        spec.n_items,
        spec.n_abilities,
        spec.seed,
        spread,
    )

    return SyntheticData(
        true_abilities=abilities,
        q=q,
        responses=ResponseMatrix(model_ids(spec.n_models), q.item_ids, responses),
        difficulty=difficulty,
        discrimination=discrimination,
    )


def recovery_report(
    true_abilities: np.ndarray,
    estimated_profiles: np.ndarray,
    q: QMatrix,
    min_items: int = RECOVERY_MIN_ITEMS,
) -> pd.DataFrame:
    """Spearman between true and estimated ability columns on well-covered dimensions"""
    true_abilities = np.asarray(true_abilities, dtype=np.float64)
    estimated_profiles = np.asarray(estimated_profiles, dtype=np.float64)
    if true_abilities.shape != estimated_profiles.shape:
        raise DataValidationError(
            f"shape mismatch: true {true_abilities.shape} vs estimated {estimated_profiles.shape}"
        )
    if true_abilities.shape[1] != q.n_abilities:
        raise DataValidationError(
            f"profiles have {true_abilities.shape[1]} abilities, Q-matrix has {q.n_abilities}"
        )

    coverage = q.column_counts()
    rows = []
    for j, ability_id in enumerate(q.ability_ids):
        if coverage[j] < min_items:
            continue
        estimate = spearman(true_abilities[:, j], estimated_profiles[:, j])
        rows.append(
            {
                "ability_id": ability_id,
                "n_items": int(coverage[j]),
                "rho": estimate.value,
                "p": estimate.p_value,
            }
        )
    return pd.DataFrame(rows, columns=["ability_id", "n_items", "rho", "p"])


def template_q_matrix(counts, n_items: int, seed: int = 0) -> QMatrix:
    """Q-matrix with exactly `counts[j]` items on ability j and no item left without an ability"""
    counts = np.asarray(counts, dtype=np.int64)
    if (counts < 0).any() or (counts > n_items).any():
        raise DataValidationError(f"every count must lie in [0, {n_items}]")
    if counts.sum() < n_items:
        raise DataValidationError(
            f"counts total {int(counts.sum())} cannot cover {n_items} items"
        )

    rng = np.random.default_rng(seed)
    entries = np.zeros((n_items, counts.size), dtype=np.int8)
    for j in sorted(range(counts.size), key=lambda j: -counts[j]):
        need = int(counts[j])
        if need == 0:
            continue
        covered = entries.any(axis=1)
        uncovered = rng.permutation(np.flatnonzero(~covered))
        rest = rng.permutation(np.flatnonzero(covered))
        rows = np.concatenate([uncovered, rest])[:need]
        entries[rows, j] = 1

    return QMatrix(item_ids(n_items), ability_ids(counts.size), entries)


def load_templates(path=None) -> dict[str, dict]:
    path = Path(path) if path is not None else DATA_DIR / TEMPLATES_FILE
    if not path.is_file():
        raise DataValidationError(f"file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_template(name: str, seed: int = 0) -> QMatrix:
    """Q-matrix reproducing one shipped coverage template"""
    templates = load_templates()
    if name not in templates:
        raise DataValidationError(
            f"unknown coverage template '{name}'; choose from {', '.join(sorted(templates))}"
        )
    template = templates[name]
    return template_q_matrix(template["counts"], template["n_items"], seed)


def write_abilities_csv(abilities: np.ndarray, model_ids_, ability_ids_, path) -> None:
    df = pd.DataFrame(
        abilities, index=pd.Index(list(model_ids_), name=RESPONSE_KEY), columns=list(ability_ids_)
    )
    df.to_csv(path, float_format="%.10f", lineterminator="\n")


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, Path]:
    """responses.csv, qmatrix.csv and abilities.csv under `out_dir`"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "responses": out_dir / "responses.csv",
        "qmatrix": out_dir / "qmatrix.csv",
        "abilities": out_dir / "abilities.csv",
    }
    data.responses.to_csv(paths["responses"])
    data.q.to_csv(paths["qmatrix"])
    write_abilities_csv(
        data.true_abilities, data.responses.model_ids, data.q.ability_ids, paths["abilities"]
    )
    return paths
