"""Diagnostic network: mIRT interaction layer feeding a monotone sigmoid MLP

Probability that model m answers item i correctly:

    a = sigmoid(A[m]), diff = sigmoid(D[i]), disc = sigmoid(C[i])
    x = q_i * (a - diff) * disc
    p = sigmoid(... sigmoid(sigmoid(x @ W0 + b0) @ W1 + b1) ... @ W_last + b_last)

Every weight matrix is kept non-negative, so p never decreases in any ability
the item engages and ignores abilities it does not engage.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from src.config import DEFAULT_HIDDEN_SIZES
from src.errors import DataValidationError
from src.tools._shared import sigmoid

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7
NEUTRAL_DIFF = 0.5
NEUTRAL_DISC = 1.0
LOGIT_INIT_RANGE = 0.01

CHECKPOINT_MAGIC = "ability-diagnosis-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class DiagnosticModel:
    """All trainable parameters plus the item-ability structure they were fit on"""

    ability_logits: np.ndarray  # M×K
    diff_logits: np.ndarray  # N×K
    disc_logits: np.ndarray  # N
    weights: list[np.ndarray]  # K→H1→...→1
    biases: list[np.ndarray]
    q_matrix: np.ndarray  # N×K, {0, 1}
    model_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    ability_ids: tuple[str, ...]

    def __post_init__(self):
        m, k = self.ability_logits.shape
        n = self.diff_logits.shape[0]
        if self.diff_logits.shape != (n, k) or self.disc_logits.shape != (n,):
            raise DataValidationError("item parameter shapes disagree with ability logits")
        if self.q_matrix.shape != (n, k):
            raise DataValidationError(f"q_matrix shape {self.q_matrix.shape} != {(n, k)}")
        if (len(self.model_ids), len(self.item_ids), len(self.ability_ids)) != (m, n, k):
            raise DataValidationError("id lists do not match parameter shapes")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DataValidationError("weights and biases must be non-empty and paired")
        width = k
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != width or b.shape != (w.shape[1],):
                raise DataValidationError(f"layer shape {w.shape} does not chain from {width}")
            width = w.shape[1]
        if width != 1:
            raise DataValidationError("last layer must produce a single output")
        self.model_ids = tuple(self.model_ids)
        self.item_ids = tuple(self.item_ids)
        self.ability_ids = tuple(self.ability_ids)

    @property
    def n_models(self) -> int:
        return self.ability_logits.shape[0]

    @property
    def n_items(self) -> int:
        return self.diff_logits.shape[0]

    @property
    def n_abilities(self) -> int:
        return self.ability_logits.shape[1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name; the arrays are live views, not copies"""
        params = {
            "ability_logits": self.ability_logits,
            "diff_logits": self.diff_logits,
            "disc_logits": self.disc_logits,
        }
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"weight_{layer}"] = w
            params[f"bias_{layer}"] = b
        return params

    def weight_names(self) -> list[str]:
        return [f"weight_{layer}" for layer in range(len(self.weights))]

    def profiles(self) -> np.ndarray:
        """M×K ability profiles in (0, 1)"""
        return sigmoid(self.ability_logits)

    def copy(self) -> "DiagnosticModel":
        return DiagnosticModel(
            ability_logits=self.ability_logits.copy(),
            diff_logits=self.diff_logits.copy(),
            disc_logits=self.disc_logits.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            q_matrix=self.q_matrix.copy(),
            model_ids=self.model_ids,
            item_ids=self.item_ids,
            ability_ids=self.ability_ids,
        )


class Batch(NamedTuple):
    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray


def as_batch(batch) -> Batch:
    """Accept a Batch or an iterable of (model_index, item_index, label) triples"""
    if not isinstance(batch, Batch):
        rows = np.asarray(list(batch), dtype=np.float64).reshape(-1, 3)
        batch = Batch(rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64), rows[:, 2])
    if len(batch.users) == 0:
        raise DataValidationError("empty batch")
    labels = np.asarray(batch.labels, dtype=np.float64)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise DataValidationError("batch labels must be 0 or 1")
    return Batch(np.asarray(batch.users, np.int64), np.asarray(batch.items, np.int64), labels)


def init_model(
    model_ids,
    item_ids,
    ability_ids,
    q_matrix: np.ndarray,
    rng: np.random.Generator,
    hidden_sizes=DEFAULT_HIDDEN_SIZES,
) -> DiagnosticModel:
    """Fresh parameters: logits near 0, |N(0, 2/(fan_in+fan_out))| weights, centred biases"""
    m, n, k = len(model_ids), len(item_ids), len(ability_ids)
    sizes = (k, *hidden_sizes, 1)

    ability_logits = rng.uniform(-LOGIT_INIT_RANGE, LOGIT_INIT_RANGE, size=(m, k))
    diff_logits = rng.uniform(-LOGIT_INIT_RANGE, LOGIT_INIT_RANGE, size=(n, k))
    disc_logits = rng.uniform(-LOGIT_INIT_RANGE, LOGIT_INIT_RANGE, size=n)

    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        w = np.abs(rng.normal(0.0, std, size=(fan_in, fan_out)))
        # interaction output is centred at 0; sigmoid outputs are centred at 0.5
        b = np.zeros(fan_out) if layer == 0 else -0.5 * w.sum(axis=0)
        weights.append(w)
        biases.append(b)

    return DiagnosticModel(
        ability_logits=ability_logits,
        diff_logits=diff_logits,
        disc_logits=disc_logits,
        weights=weights,
        biases=biases,
        q_matrix=np.asarray(q_matrix, dtype=np.int8).copy(),
        model_ids=tuple(model_ids),
        item_ids=tuple(item_ids),
        ability_ids=tuple(ability_ids),
    )


def check_index(value: int, size: int, kind: str) -> int:
    if not 0 <= value < size:
        raise DataValidationError(f"{kind} index {value} out of range [0, {size})")
    return int(value)


def check_q_row(q_row, k: int) -> np.ndarray:
    q = np.asarray(q_row, dtype=np.float64)
    if q.shape != (k,):
        raise DataValidationError(f"q row has {q.size} entries, model has {k} abilities")
    if not q.any():
        raise DataValidationError("q row has no associated abilities")
    return q


def ability_profile(model_index: int, model: DiagnosticModel) -> np.ndarray:
    m = check_index(model_index, model.n_models, "model")
    return sigmoid(model.ability_logits[m])


def interaction(q, a, diff, disc) -> np.ndarray:
    """x = q ⊙ (a − diff) × disc"""
    q, a, diff = (np.asarray(v, dtype=np.float64) for v in (q, a, diff))
    if not q.shape == a.shape == diff.shape:
        raise DataValidationError(
            f"dimension mismatch: q {q.shape}, a {a.shape}, diff {diff.shape}"
        )
    disc = np.asarray(disc, dtype=np.float64)
    if disc.ndim == q.ndim - 1 and disc.ndim > 0:
        disc = disc[..., None]
    return q * (a - diff) * disc


def _mlp(model: DiagnosticModel, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first, probability column last"""
    activations = [x]
    h = x
    for w, b in zip(model.weights, model.biases):
        h = sigmoid(h @ w + b)
        activations.append(h)
    return activations


def predict_proba(model: DiagnosticModel, users, items, q_rows=None) -> np.ndarray:
    """Batched forward pass using each item's trained difficulty and discrimination"""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    q = model.q_matrix[items] if q_rows is None else q_rows
    a = sigmoid(model.ability_logits[users])
    diff = sigmoid(model.diff_logits[items])
    disc = sigmoid(model.disc_logits[items])
    x = interaction(q, a, diff, disc)
    return _mlp(model, x)[-1][:, 0]


def forward(model_index: int, item_index: int, q_row, model: DiagnosticModel) -> float:
    m = check_index(model_index, model.n_models, "model")
    i = check_index(item_index, model.n_items, "item")
    q = check_q_row(q_row, model.n_abilities)
    return float(predict_proba(model, [m], [i], q[None, :])[0])


def score_unseen(model: DiagnosticModel, users, q_rows) -> np.ndarray:
    """Batched scores for items without trained parameters (neutral diff and disc)"""
    users = np.asarray(users, dtype=np.int64)
    q = np.asarray(q_rows, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != model.n_abilities:
        raise DataValidationError(
            f"q rows have {q.shape[-1]} abilities, model has {model.n_abilities}"
        )
    a = sigmoid(model.ability_logits[users])
    x = interaction(q, a, np.full_like(a, NEUTRAL_DIFF), NEUTRAL_DISC)
    return _mlp(model, x)[-1][:, 0]


def loss(batch, model: DiagnosticModel) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1 − eps]"""
    b = as_batch(batch)
    p = np.clip(predict_proba(model, b.users, b.items), PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(b.labels * np.log(p) + (1.0 - b.labels) * np.log(1.0 - p)))


def gradients(batch, model: DiagnosticModel) -> dict[str, np.ndarray]:
    """Analytic gradient of `loss` for every array in `model.parameters()`"""
    return loss_and_gradients(batch, model)[1]


def loss_and_gradients(batch, model: DiagnosticModel) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and its gradient from one shared forward pass"""
    b = as_batch(batch)
    n = len(b.users)
    q = model.q_matrix[b.items].astype(np.float64)
    a = sigmoid(model.ability_logits[b.users])
    diff = sigmoid(model.diff_logits[b.items])
    disc = sigmoid(model.disc_logits[b.items])
    x = q * (a - diff) * disc[:, None]
    activations = _mlp(model, x)

    p = activations[-1][:, 0]
    # clamp has zero slope outside [eps, 1 - eps]
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    delta = np.where(inside, (p - b.labels) / n, 0.0)[:, None]

    grads: dict[str, np.ndarray] = {}
    for layer in reversed(range(len(model.weights))):
        h_prev = activations[layer]
        grads[f"weight_{layer}"] = h_prev.T @ delta
        grads[f"bias_{layer}"] = delta.sum(axis=0)
        back = delta @ model.weights[layer].T
        delta = back * h_prev * (1.0 - h_prev) if layer > 0 else back

    grad_a = delta * q * disc[:, None]
    grad_disc = (delta * q * (a - diff)).sum(axis=1)

    d_ability = np.zeros_like(model.ability_logits)
    np.add.at(d_ability, b.users, grad_a * a * (1.0 - a))
    d_diff = np.zeros_like(model.diff_logits)
    np.add.at(d_diff, b.items, -grad_a * diff * (1.0 - diff))
    d_disc = np.zeros_like(model.disc_logits)
    np.add.at(d_disc, b.items, grad_disc * disc * (1.0 - disc))

    grads["ability_logits"] = d_ability
    grads["diff_logits"] = d_diff
    grads["disc_logits"] = d_disc

    clipped = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    value = -np.mean(b.labels * np.log(clipped) + (1.0 - b.labels) * np.log(1.0 - clipped))
    return float(value), grads


def _tensors(model: DiagnosticModel) -> list[tuple[str, np.ndarray]]:
    return [*model.parameters().items(), ("q_matrix", model.q_matrix)]


def save_checkpoint(model: DiagnosticModel, path) -> str:
    """Write header line + raw float64 tensors; returns the file's SHA-256"""
    tensors = _tensors(model)
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "n_models": model.n_models,
        "n_items": model.n_items,
        "n_abilities": model.n_abilities,
        "hidden_sizes": list(model.hidden_sizes),
        "model_ids": list(model.model_ids),
        "item_ids": list(model.item_ids),
        "ability_ids": list(model.ability_ids),
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    payload += b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for _, t in tensors)
    Path(path).write_bytes(payload)
    logger.info("Saved checkpoint %s (%d bytes)", path, len(payload))
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path) -> DiagnosticModel:
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"file not found: {path}")
    raw = path.read_bytes()
    line_end = raw.find(b"\n")
    if line_end < 0:
        raise DataValidationError(f"{path}: not a checkpoint (no header line)")
    try:
        header = json.loads(raw[:line_end].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise DataValidationError(f"{path}: not a checkpoint ({e})") from e
    if not isinstance(header, dict) or header.get("magic") != CHECKPOINT_MAGIC:
        raise DataValidationError(f"{path}: not a checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise DataValidationError(
            f"{path}: checkpoint version {header.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )

    try:
        offset = line_end + 1
        tensors = {}
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            end = offset + 8 * count
            if end > len(raw):
                raise DataValidationError(f"{path}: truncated tensor '{entry['name']}'")
            values = np.frombuffer(raw[offset:end], dtype="<f8")
            tensors[entry["name"]] = values.reshape(entry["shape"]).astype(np.float64)
            offset = end
        if offset != len(raw):
            raise DataValidationError(f"{path}: {len(raw) - offset} trailing bytes")

        n_layers = len(header["hidden_sizes"]) + 1
        return DiagnosticModel(
            ability_logits=tensors["ability_logits"],
            diff_logits=tensors["diff_logits"],
            disc_logits=tensors["disc_logits"],
            weights=[tensors[f"weight_{layer}"] for layer in range(n_layers)],
            biases=[tensors[f"bias_{layer}"] for layer in range(n_layers)],
            q_matrix=tensors["q_matrix"].astype(np.int8),
            model_ids=tuple(header["model_ids"]),
            item_ids=tuple(header["item_ids"]),
            ability_ids=tuple(header["ability_ids"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataValidationError(f"{path}: malformed checkpoint header ({e!r})") from e
