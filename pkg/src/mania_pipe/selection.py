"""One-vs-rest linear SVM trained by seeded subgradient descent, and SVM-RFE.

The per-class objective is ``0.5 * ||w||^2 + C * mean_i hinge_i`` with an
unregularized bias. Using the mean rather than the sum makes the solution
invariant to duplicating the training set. Updates follow the Pegasos
schedule ``eta_t = 1 / (lambda t)`` with ``lambda = 1 / C`` on seeded
mini-batches.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MissingFile, SchemaViolation, SingleClass, TargetTooLarge
from .features import FeatureTable

N_CLASSES = 3


class NotNormalizedWarning(UserWarning):
    """Feature magnitudes suggest the table was not z-normalized."""


@dataclass
class LinearSvmModel:
    weights: np.ndarray  # (classes, dims)
    bias: np.ndarray  # (classes,)
    c_reg: float
    seed: int
    loss_history: list = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weights.T + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def _ovr_targets(y: np.ndarray, n_classes: int) -> np.ndarray:
    return np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)


def svm_objective(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """Sum over classes of ``0.5 ||w_c||^2 + C * mean hinge`` for the one-vs-rest problems."""
    Y = _ovr_targets(y, W.shape[0])
    margins = Y * (X @ W.T + b)
    return float(0.5 * np.sum(W * W) + C * np.sum(np.mean(np.maximum(0.0, 1.0 - margins), axis=0)))


def svm_subgradient(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, C: float):
    Y = _ovr_targets(y, W.shape[0])
    active = (Y * (X @ W.T + b) < 1.0) * Y
    n = X.shape[0]
    return W - C * (active.T @ X) / n, -C * active.sum(axis=0) / n


def _check_normalized(X: np.ndarray) -> None:
    if X.size and (np.abs(X.mean(axis=0)).max() > 5.0 or X.std(axis=0).max() > 10.0):
        warnings.warn("feature magnitudes suggest the table was not z-normalized",
                      NotNormalizedWarning, stacklevel=3)


def fit_svm_arrays(X: np.ndarray, y: np.ndarray, C: float = 1.0, epochs: int = 200, seed: int = 0,
                   batch_size: int | None = 16, n_classes: int = N_CLASSES) -> LinearSvmModel:
    if len(np.unique(y)) < 2:
        raise SingleClass("SVM training needs at least two classes")
    if C <= 0:
        raise ValueError("C must be positive")
    _check_normalized(X)
    n, d = X.shape
    Y = _ovr_targets(y, n_classes)
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    bs = n if batch_size is None else max(1, min(batch_size, n))
    rng = np.random.default_rng(seed)
    history = []
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            t += 1
            Xb, Yb = X[idx], Y[idx]
            active = (Yb * (Xb @ W.T + b) < 1.0) * Yb
            eta = C / t
            W = (1.0 - 1.0 / t) * W + eta * (active.T @ Xb) / len(idx)
            b = b + eta * active.sum(axis=0) / len(idx)
        history.append(svm_objective(W, b, X, y, C))
    return LinearSvmModel(W, b, float(C), int(seed), history)


def train_linear_svm(X: FeatureTable, C: float = 1.0, epochs: int = 200, seed: int = 0,
                     batch_size: int | None = 16) -> LinearSvmModel:
    return fit_svm_arrays(X.X, X.y, C, epochs, seed, batch_size)


def feature_scores(model: LinearSvmModel) -> np.ndarray:
    """Multiclass RFE criterion: sum over classes of squared weights."""
    return np.sum(model.weights ** 2, axis=0)


@dataclass
class SelectionMask:
    selected: list
    elimination_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.selected = [int(i) for i in self.selected]
        if len(set(self.selected)) != len(self.selected):
            raise SchemaViolation("selection mask has duplicate indices")
        if any(i < 0 for i in self.selected):
            raise SchemaViolation("selection mask has negative indices")

    def __len__(self) -> int:
        return len(self.selected)

    def to_dict(self) -> dict:
        return {"selected": self.selected, "trace": self.elimination_trace}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def from_json(cls, path) -> "SelectionMask":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"selection mask not found: {path}")
        d = json.loads(path.read_text())
        try:
            return cls(d["selected"], d["trace"])
        except KeyError as exc:
            raise SchemaViolation(f"{path}: missing field {exc}") from None


def rfe(X: FeatureTable, target_k: int = 100, step_frac: float = 0.1, C: float = 1.0,
        seed: int = 0, epochs: int = 200, batch_size: int | None = 16) -> SelectionMask:
    """Recursive feature elimination down to ``target_k`` columns.

    Each round trains the OvR SVM on the surviving columns and drops the
    ``max(1, floor(step_frac * remaining))`` lowest-scoring ones, never going
    below ``target_k``. Trace entries carry training accuracy as the score.
    """
    d = X.dim
    if target_k >= d:
        raise TargetTooLarge(f"target_k={target_k} must be below the {d} available features")
    if target_k < 1:
        raise TargetTooLarge("target_k must be >= 1")
    y = X.y
    if len(np.unique(y)) < 2:
        raise SingleClass("RFE needs at least two classes in the training table")
    remaining = np.arange(d)
    trace = []
    rnd = 0
    while len(remaining) > target_k:
        rnd += 1
        Xr = X.X[:, remaining]
        with warnings.catch_warnings():
            if rnd > 1:
                warnings.simplefilter("ignore", NotNormalizedWarning)
            model = fit_svm_arrays(Xr, y, C, epochs, seed, batch_size)
        scores = feature_scores(model)
        n_drop = max(1, int(np.floor(step_frac * len(remaining))))
        n_drop = min(n_drop, len(remaining) - target_k)
        drop_pos = np.argsort(scores, kind="stable")[:n_drop]
        removed = sorted(int(remaining[i]) for i in drop_pos)
        acc = float(np.mean(model.predict(Xr) == y))
        trace.append({"round": rnd, "removed": removed, "score": acc})
        keep = np.ones(len(remaining), dtype=bool)
        keep[drop_pos] = False
        remaining = remaining[keep]
    return SelectionMask([int(i) for i in remaining], trace)


def apply_mask(t: FeatureTable, m: SelectionMask) -> FeatureTable:
    if m.selected and max(m.selected) >= t.dim:
        raise DimensionMismatch(f"mask index {max(m.selected)} out of range for {t.dim} columns")
    idx = np.asarray(m.selected, dtype=np.int64)
    return t.with_X(t.X[:, idx], [t.names[i] for i in idx])
