"""Alignment training: hard-pair mining, multi-similarity loss, exact gradients.

The trainable model is a bias-free linear projection over fixed input
vectors. That is small enough to gradient-check numerically while
exercising the full loss: per batch, a cosine similarity matrix is built
over projected vectors, hard positive/negative pairs are mined with a
squared-distance margin test, and the multi-similarity loss

    L = (1/M) sum_i [ (1/alpha) log(1 + sum_{n in N_i} e^{ alpha (S_in - eps)})
                    + (1/beta)  log(1 + sum_{p in P_i} e^{-beta  (S_ip - eps)}) ]

is minimized by plain gradient descent. Both log-sum terms are evaluated
in overflow-safe form.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import DataError, TrainingDivergedError, ZeroVectorError
from .ioutil import atomic_write_text, dump_json

IndexPair = tuple[int, int]
MiningPredicate = Callable[[float, float, float], bool]


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise DataError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class LabeledVector:
    """A fixed input embedding paired with its concept label."""

    x: np.ndarray
    label: str

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if x.size == 0:
            raise DataError("labeled vector must be non-empty")
        if not np.all(np.isfinite(x)):
            raise DataError(f"vector for label {self.label!r} has non-finite entries")
        object.__setattr__(self, "x", x)


@dataclass
class ProjectionModel:
    """Bias-free linear map W: d_in -> d_out applied as x @ W.T."""

    W: np.ndarray

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or 0 in W.shape:
            raise DataError(f"W must be a non-empty 2-D matrix, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise DataError("W contains non-finite entries")
        self.W = W

    @property
    def d_in(self) -> int:
        return int(self.W.shape[1])

    @property
    def d_out(self) -> int:
        return int(self.W.shape[0])

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_in:
            raise DataError(f"input dimension {x.shape[-1]} does not match d_in {self.d_in}")
        return x @ self.W.T

    @classmethod
    def initialize(cls, d_in: int, d_out: int, seed: int = 0, noise: float = 0.0) -> "ProjectionModel":
        """Truncated identity plus optional seeded Gaussian noise."""
        if d_in < 1 or d_out < 1:
            raise DataError("dimensions must be positive")
        W = np.eye(d_out, d_in)
        if noise:
            W = W + noise * np.random.default_rng(seed).standard_normal((d_out, d_in))
        return cls(W=W)


@dataclass(frozen=True)
class MiningParams:
    """Margin for the hard-triplet test d_ap^2 < d_an^2 + margin."""

    margin: float = 0.2

    def __post_init__(self) -> None:
        _check_finite("margin", self.margin)
        if self.margin < 0:
            raise DataError(f"margin must be >= 0, got {self.margin}")


@dataclass(frozen=True)
class MSLossParams:
    alpha: float = 2.0
    beta: float = 50.0
    epsilon: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "epsilon"):
            _check_finite(name, getattr(self, name))
        if self.alpha <= 0 or self.beta <= 0:
            raise DataError("alpha and beta must be positive")


def _projected(batch: Sequence[LabeledVector], model: ProjectionModel) -> np.ndarray:
    if not batch:
        raise DataError("empty batch")
    Z = model.project(np.stack([lv.x for lv in batch]))
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0.0):
        i = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroVectorError(f"projection of batch item {i} ({batch[i].label!r}) is zero")
    return Z


def similarity_matrix(batch: Sequence[LabeledVector], model: ProjectionModel) -> np.ndarray:
    """Pairwise cosine of projected vectors: exactly symmetric, unit diagonal."""
    Z = _projected(batch, model)
    U = Z / np.linalg.norm(Z, axis=1, keepdims=True)
    S = U @ U.T
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return S


def default_mining_predicate(d_ap_sq: float, d_an_sq: float, margin: float) -> bool:
    return d_ap_sq < d_an_sq + margin


def mine_hard_pairs(
    batch: Sequence[LabeledVector],
    model: ProjectionModel,
    params: MiningParams,
    predicate: MiningPredicate = default_mining_predicate,
) -> tuple[set[IndexPair], set[IndexPair]]:
    """Collect (anchor, positive) and (anchor, negative) index pairs.

    Every triplet (a, p, n) with label(a) = label(p), a != p, and
    label(n) != label(a) whose squared projected distances pass the
    predicate contributes (a, p) and (a, n). The predicate defaults to the
    margin test and is injectable for alternative triplet families.
    """
    if not batch:
        raise DataError("empty batch")
    Z = model.project(np.stack([lv.x for lv in batch]))
    sq = np.sum(Z * Z, axis=1)
    dist_sq = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T), 0.0)
    labels = [lv.label for lv in batch]
    m = len(batch)
    positives: set[IndexPair] = set()
    negatives: set[IndexPair] = set()
    for a in range(m):
        same = [p for p in range(m) if p != a and labels[p] == labels[a]]
        other = [n for n in range(m) if labels[n] != labels[a]]
        for p in same:
            for n in other:
                if predicate(float(dist_sq[a, p]), float(dist_sq[a, n]), params.margin):
                    positives.add((a, p))
                    negatives.add((a, n))
    return positives, negatives


def _group_pairs(pairs: Iterable[IndexPair], m: int, what: str) -> dict[int, list[int]]:
    grouped: dict[int, list[int]] = {}
    for anchor, other in set(pairs):
        if not (0 <= anchor < m and 0 <= other < m):
            raise DataError(f"{what} pair ({anchor}, {other}) out of range for batch of {m}")
        grouped.setdefault(anchor, []).append(other)
    for others in grouped.values():
        others.sort()
    return grouped


def ms_loss(
    S: np.ndarray,
    positives: Iterable[IndexPair],
    negatives: Iterable[IndexPair],
    params: MSLossParams,
) -> float:
    """Multi-similarity loss over a similarity matrix and mined pair sets."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError(f"similarity matrix must be square, got shape {S.shape}")
    m = S.shape[0]
    pos = _group_pairs(positives, m, "positive")
    neg = _group_pairs(negatives, m, "negative")
    total = 0.0
    for anchor, others in neg.items():
        z = params.alpha * (S[anchor, others] - params.epsilon)
        total += float(np.logaddexp.reduce(np.concatenate(([0.0], z)))) / params.alpha
    for anchor, others in pos.items():
        z = -params.beta * (S[anchor, others] - params.epsilon)
        total += float(np.logaddexp.reduce(np.concatenate(([0.0], z)))) / params.beta
    return total / m


def ms_loss_gradient(
    batch: Sequence[LabeledVector],
    model: ProjectionModel,
    positives: Iterable[IndexPair],
    negatives: Iterable[IndexPair],
    params: MSLossParams,
) -> np.ndarray:
    """Analytic d(ms_loss o similarity_matrix)/dW, shape d_out x d_in.

    Chain: G = dL/dS at the mined entries, symmetrized through the matrix
    averaging, backprop through row normalization, then dL/dW = (dL/dZ)^T X.
    """
    X = np.stack([lv.x for lv in batch]).astype(np.float64)
    Z = _projected(batch, model)
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    U = Z / norms
    S = U @ U.T
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)

    m = len(batch)
    pos = _group_pairs(positives, m, "positive")
    neg = _group_pairs(negatives, m, "negative")
    G = np.zeros((m, m))
    for anchor, others in neg.items():
        z = params.alpha * (S[anchor, others] - params.epsilon)
        log_total = float(np.logaddexp.reduce(np.concatenate(([0.0], z))))
        G[anchor, others] += np.exp(z - log_total)
    for anchor, others in pos.items():
        z = -params.beta * (S[anchor, others] - params.epsilon)
        log_total = float(np.logaddexp.reduce(np.concatenate(([0.0], z))))
        G[anchor, others] -= np.exp(z - log_total)
    G /= m

    H = (G + G.T) / 2.0
    np.fill_diagonal(H, 0.0)  # the fixed unit diagonal carries no gradient
    dU = 2.0 * (H @ U)
    dZ = (dU - np.sum(dU * U, axis=1, keepdims=True) * U) / norms
    return dZ.T @ X


def triplet_margin(a: np.ndarray, p: np.ndarray, n: np.ndarray, margin: float) -> float:
    """Pre-clamp value d_ap^2 - d_an^2 + margin."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    n = np.asarray(n, dtype=np.float64).reshape(-1)
    if not (a.shape == p.shape == n.shape):
        raise DataError("triplet vectors must share one dimension")
    d_ap = a - p
    d_an = a - n
    return float(d_ap @ d_ap - d_an @ d_an + margin)


def triplet_loss(a: np.ndarray, p: np.ndarray, n: np.ndarray, margin: float) -> float:
    """Hinge form max(d_ap^2 - d_an^2 + margin, 0)."""
    return max(triplet_margin(a, p, n, margin), 0.0)


def mean_label_cosines(
    batch: Sequence[LabeledVector], model: ProjectionModel
) -> tuple[float, float]:
    """(mean same-label cosine, mean cross-label cosine) over index pairs i<j."""
    S = similarity_matrix(batch, model)
    intra: list[float] = []
    inter: list[float] = []
    for i in range(len(batch)):
        for j in range(i + 1, len(batch)):
            (intra if batch[i].label == batch[j].label else inter).append(float(S[i, j]))
    if not intra or not inter:
        raise DataError("need at least one same-label and one cross-label pair")
    return float(np.mean(intra)), float(np.mean(inter))


def train(
    batches: Sequence[Sequence[LabeledVector]],
    model: ProjectionModel,
    mining: MiningParams,
    loss_params: MSLossParams,
    rate: float,
    epochs: int,
) -> tuple[ProjectionModel, list[tuple[int, float]]]:
    """Gradient descent with per-batch re-mining each epoch.

    The trace records (epoch, mean batch loss) with losses measured before
    that epoch's updates. Deterministic given batch order; aborts on a
    non-finite loss or weight.
    """
    if not batches:
        raise DataError("need at least one batch")
    _check_finite("rate", rate)
    if rate < 0:
        raise DataError(f"rate must be >= 0, got {rate}")
    if epochs < 1:
        raise DataError(f"epochs must be >= 1, got {epochs}")
    trace: list[tuple[int, float]] = []
    for epoch in range(1, epochs + 1):
        losses = []
        for b, batch in enumerate(batches):
            Z = model.project(np.stack([lv.x for lv in batch]))
            # norms overflow to inf long before W does; catch that as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                norms_finite = bool(np.all(np.isfinite(np.linalg.norm(Z, axis=1))))
            if not np.all(np.isfinite(Z)) or not norms_finite:
                raise TrainingDivergedError(f"epoch {epoch}, batch {b}: projections overflowed")
            positives, negatives = mine_hard_pairs(batch, model, mining)
            S = similarity_matrix(batch, model)
            loss = ms_loss(S, positives, negatives, loss_params)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"epoch {epoch}, batch {b}: loss is {loss!r}")
            grad = ms_loss_gradient(batch, model, positives, negatives, loss_params)
            model.W = model.W - rate * grad
            if not np.all(np.isfinite(model.W)):
                raise TrainingDivergedError(f"epoch {epoch}, batch {b}: weights overflowed")
            losses.append(loss)
        trace.append((epoch, float(np.mean(losses))))
    return model, trace


# ---------------------------------------------------------------------------
# Training-config and loss-trace files


@dataclass(frozen=True)
class TrainingConfig:
    """Everything a training run needs; `margin` serializes as "lambda"."""

    alpha: float = 2.0
    beta: float = 50.0
    epsilon: float = 0.5
    margin: float = 0.2
    rate: float = 0.1
    epochs: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        MSLossParams(self.alpha, self.beta, self.epsilon)
        MiningParams(self.margin)
        _check_finite("rate", self.rate)
        if self.rate < 0:
            raise DataError(f"rate must be >= 0, got {self.rate}")
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")

    @property
    def mining_params(self) -> MiningParams:
        return MiningParams(margin=self.margin)

    @property
    def loss_params(self) -> MSLossParams:
        return MSLossParams(alpha=self.alpha, beta=self.beta, epsilon=self.epsilon)


_CONFIG_KEYS = ("alpha", "beta", "epsilon", "lambda", "rate", "epochs", "seed")


def save_training_config(config: TrainingConfig, path: str | Path) -> None:
    payload = {
        "alpha": config.alpha,
        "beta": config.beta,
        "epsilon": config.epsilon,
        "lambda": config.margin,
        "rate": config.rate,
        "epochs": config.epochs,
        "seed": config.seed,
    }
    atomic_write_text(Path(path), dump_json(payload) + "\n")


def load_training_config(path: str | Path) -> TrainingConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{path}: expected a JSON object")
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise DataError(f"{path}: unknown config keys {sorted(unknown)}")
    defaults = TrainingConfig()
    try:
        return TrainingConfig(
            alpha=float(raw.get("alpha", defaults.alpha)),
            beta=float(raw.get("beta", defaults.beta)),
            epsilon=float(raw.get("epsilon", defaults.epsilon)),
            margin=float(raw.get("lambda", defaults.margin)),
            rate=float(raw.get("rate", defaults.rate)),
            epochs=int(raw.get("epochs", defaults.epochs)),
            seed=int(raw.get("seed", defaults.seed)),
        )
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_loss_trace(trace: Sequence[tuple[int, float]], path: str | Path) -> None:
    lines = ["epoch,loss"]
    lines += [f"{epoch},{loss!r}" for epoch, loss in trace]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_loss_trace(path: str | Path) -> list[tuple[int, float]]:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["epoch", "loss"]:
            raise DataError(f"{path}: expected header 'epoch,loss', got {header}")
        out = []
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row}")
            out.append((int(row[0]), float(row[1])))
    return out
