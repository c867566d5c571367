"""Response matrices, Q-matrices and their alignment into datasets"""

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import DataValidationError, MatrixParseError

logger = logging.getLogger(__name__)

RESPONSE_KEY = "model_id"
Q_KEY = "item_id"


def _readonly(values: np.ndarray, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_unique(ids: tuple[str, ...], kind: str) -> None:
    dupes = sorted(i for i, n in Counter(ids).items() if n > 1)
    if dupes:
        raise DataValidationError(f"duplicate {kind} id(s): {', '.join(dupes)}")


def _check_binary(entries: np.ndarray, kind: str) -> None:
    if not np.isin(entries, (0, 1)).all():
        raise DataValidationError(f"{kind} entries must be exactly 0 or 1")


def _read_binary_csv(path, key_column: str) -> tuple[list[str], list[str], np.ndarray]:
    """Parse `key,<col_1>,...` CSV with 0/1 cells; returns (row ids, column ids, int8 matrix)"""
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"file not found: {path}")

    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"{path}: cannot parse CSV ({e})") from e

    raw = raw.fillna("")
    header = [str(h).strip() for h in raw.iloc[0]]
    if header[0] != key_column:
        raise DataValidationError(
            f"{path}: header must start with '{key_column}', got '{header[0]}'"
        )
    if len(raw) < 2:
        raise DataValidationError(f"{path}: no data rows")

    row_ids = [str(v).strip() for v in raw.iloc[1:, 0]]
    col_ids = header[1:]
    if not col_ids:
        raise DataValidationError(f"{path}: no value columns")

    cells = raw.iloc[1:, 1:].apply(lambda s: s.str.strip()).to_numpy()
    bad = ~np.isin(cells, ("0", "1"))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise MatrixParseError(path, int(r) + 2, row_ids[r], col_ids[c], str(cells[r, c]))

    return row_ids, col_ids, (cells == "1").astype(np.int8)


def _write_binary_csv(path, key_column: str, row_ids, col_ids, entries: np.ndarray) -> None:
    df = pd.DataFrame(entries, index=pd.Index(row_ids, name=key_column), columns=list(col_ids))
    df.to_csv(path, lineterminator="\n")


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Binary M×N record of model correctness; `mask` marks observed cells (True)"""

    model_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    entries: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "model_ids", tuple(str(m) for m in self.model_ids))
        object.__setattr__(self, "item_ids", tuple(str(i) for i in self.item_ids))
        entries = np.asarray(self.entries)
        expected = (len(self.model_ids), len(self.item_ids))
        if entries.shape != expected:
            raise DataValidationError(
                f"response matrix shape {entries.shape} does not match ids {expected}"
            )
        _check_binary(entries, "response")
        _check_unique(self.model_ids, "model")
        _check_unique(self.item_ids, "item")
        object.__setattr__(self, "entries", _readonly(entries, np.int8))

        if self.mask is not None:
            mask = np.asarray(self.mask)
            if mask.shape != expected:
                raise DataValidationError(f"mask shape {mask.shape} does not match {expected}")
            object.__setattr__(self, "mask", _readonly(mask, bool))

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def observed(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.entries.shape, dtype=bool)
        return self.mask

    def with_mask(self, mask: np.ndarray | None) -> "ResponseMatrix":
        return ResponseMatrix(self.model_ids, self.item_ids, self.entries, mask)

    def take_items(self, indices) -> "ResponseMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        mask = None if self.mask is None else self.mask[:, idx]
        return ResponseMatrix(
            self.model_ids, [self.item_ids[i] for i in idx], self.entries[:, idx], mask
        )

    def take_models(self, indices) -> "ResponseMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        mask = None if self.mask is None else self.mask[idx]
        return ResponseMatrix(
            [self.model_ids[i] for i in idx], self.item_ids, self.entries[idx], mask
        )

    def to_csv(self, path) -> None:
        """Write the documented R-matrix CSV (the mask is not part of the format)"""
        _write_binary_csv(path, RESPONSE_KEY, self.model_ids, self.item_ids, self.entries)


@dataclass(frozen=True, eq=False)
class QMatrix:
    """Binary N×K item-ability association matrix"""

    item_ids: tuple[str, ...]
    ability_ids: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "item_ids", tuple(str(i) for i in self.item_ids))
        object.__setattr__(self, "ability_ids", tuple(str(a) for a in self.ability_ids))
        entries = np.asarray(self.entries)
        expected = (len(self.item_ids), len(self.ability_ids))
        if entries.shape != expected:
            raise DataValidationError(f"Q-matrix shape {entries.shape} does not match ids {expected}")
        _check_binary(entries, "Q-matrix")
        _check_unique(self.item_ids, "item")
        _check_unique(self.ability_ids, "ability")

        empty = np.flatnonzero(entries.sum(axis=1) == 0)
        if empty.size:
            names = ", ".join(self.item_ids[i] for i in empty[:10])
            more = f" (+{empty.size - 10} more)" if empty.size > 10 else ""
            raise DataValidationError(f"item has no associated abilities: {names}{more}")
        object.__setattr__(self, "entries", _readonly(entries, np.int8))

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_abilities(self) -> int:
        return len(self.ability_ids)

    def column_counts(self) -> np.ndarray:
        return self.entries.sum(axis=0).astype(np.int64)

    def take_items(self, indices) -> "QMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return QMatrix([self.item_ids[i] for i in idx], self.ability_ids, self.entries[idx])

    def to_csv(self, path) -> None:
        _write_binary_csv(path, Q_KEY, self.item_ids, self.ability_ids, self.entries)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Responses and Q-matrix sharing one item order (the Q-matrix order)"""

    responses: ResponseMatrix
    q: QMatrix

    def __post_init__(self):
        if self.responses.item_ids != self.q.item_ids:
            raise DataValidationError("dataset items are not aligned; use align()")

    @property
    def model_ids(self) -> tuple[str, ...]:
        return self.responses.model_ids

    @property
    def item_ids(self) -> tuple[str, ...]:
        return self.q.item_ids

    @property
    def ability_ids(self) -> tuple[str, ...]:
        return self.q.ability_ids

    @property
    def n_models(self) -> int:
        return self.responses.n_models

    @property
    def n_items(self) -> int:
        return self.q.n_items

    @property
    def n_abilities(self) -> int:
        return self.q.n_abilities

    def observed_triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-major (model index, item index, label) arrays over observed cells"""
        users, items = np.nonzero(self.responses.observed)
        labels = self.responses.entries[users, items].astype(np.float64)
        return users.astype(np.int64), items.astype(np.int64), labels

    def take_items(self, indices) -> "Dataset":
        return Dataset(self.responses.take_items(indices), self.q.take_items(indices))

    def take_models(self, indices) -> "Dataset":
        return Dataset(self.responses.take_models(indices), self.q)

    def hold_out(self, item_indices) -> "Dataset":
        """Copy whose mask hides every cell of the given item columns"""
        mask = self.responses.observed.copy()
        mask[:, np.asarray(item_indices, dtype=np.int64)] = False
        return Dataset(self.responses.with_mask(mask), self.q)

    def digest(self) -> str:
        h = hashlib.sha256()
        for ids in (self.model_ids, self.item_ids, self.ability_ids):
            h.update("\x1f".join(ids).encode("utf-8"))
            h.update(b"\x1e")
        h.update(self.responses.entries.tobytes())
        h.update(self.q.entries.tobytes())
        if self.responses.mask is not None:
            h.update(self.responses.mask.tobytes())
        return h.hexdigest()


def load_response_matrix(path) -> ResponseMatrix:
    """Load and validate an R-matrix CSV"""
    model_ids, item_ids, entries = _read_binary_csv(path, RESPONSE_KEY)
    responses = ResponseMatrix(model_ids, item_ids, entries)
    logger.info("Loaded responses %s: %d models × %d items", path, *entries.shape)
    return responses


def load_q_matrix(path) -> QMatrix:
    """Load and validate a Q-matrix CSV; all-zero item rows are rejected"""
    item_ids, ability_ids, entries = _read_binary_csv(path, Q_KEY)
    q = QMatrix(item_ids, ability_ids, entries)
    logger.info("Loaded Q-matrix %s: %d items × %d abilities", path, *entries.shape)
    return q


def align(responses: ResponseMatrix, q: QMatrix) -> Dataset:
    """Permute response columns into the Q-matrix item order"""
    r_items, q_items = set(responses.item_ids), set(q.item_ids)
    if r_items != q_items:
        only_r = sorted(r_items - q_items)
        only_q = sorted(q_items - r_items)
        parts = []
        if only_r:
            parts.append(f"only in responses: {', '.join(only_r)}")
        if only_q:
            parts.append(f"only in Q-matrix: {', '.join(only_q)}")
        raise DataValidationError("item id mismatch; " + "; ".join(parts))

    position = {item: i for i, item in enumerate(responses.item_ids)}
    order = [position[item] for item in q.item_ids]
    return Dataset(responses.take_items(order), q)


def coverage_stats(q: QMatrix) -> pd.DataFrame:
    """Per-ability item count and ratio (count / N)"""
    counts = q.column_counts()
    return pd.DataFrame(
        {
            "ability_id": list(q.ability_ids),
            "count": counts,
            "ratio": counts / q.n_items,
        }
    )


def describe_dataset(dataset: Dataset) -> str:
    """Short text summary of a dataset for CLI output"""
    observed = dataset.responses.observed
    accuracy = dataset.responses.entries[observed].mean() if observed.any() else float("nan")
    coverage = dataset.q.column_counts()
    lines = [
        f"Dataset: {dataset.n_models:,} models × {dataset.n_items:,} items × "
        f"{dataset.n_abilities} abilities",
        f"  Observed cells: {int(observed.sum()):,} ({observed.mean() * 100:.1f}%)",
        f"  Overall accuracy: {accuracy:.4f}",
        f"  Abilities per item: {dataset.q.entries.sum(axis=1).mean():.2f}",
        f"  Uncovered abilities: {int((coverage == 0).sum())}",
    ]
    return "\n".join(lines)
