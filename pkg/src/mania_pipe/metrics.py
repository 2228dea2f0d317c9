"""Confusion matrices and unweighted average recall."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import LABELS
from .errors import EmptyMatrix

CLASS_NAMES = tuple(lab.value for lab in LABELS)


class ZeroSupportWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predictions, in Remission/Hypomania/Mania order."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion matrix counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_labels(cls, y_true, y_pred, n_classes: int = 3) -> "ConfusionMatrix":
        c = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(c, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(c)

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def recalls(self) -> np.ndarray:
        s = self.support
        return np.where(s > 0, np.diag(self.counts) / np.where(s > 0, s, 1), np.nan)

    def tolist(self) -> list:
        return self.counts.tolist()


def uar(cm: ConfusionMatrix) -> float:
    """Mean per-class recall; classes without support are skipped with a warning."""
    s = cm.support
    if not np.any(s > 0):
        raise EmptyMatrix("confusion matrix has no support in any class")
    if np.any(s == 0):
        missing = [CLASS_NAMES[i] if i < len(CLASS_NAMES) else str(i) for i in np.flatnonzero(s == 0)]
        warnings.warn(f"classes without support excluded from UAR: {missing}",
                      ZeroSupportWarning, stacklevel=2)
    r = cm.recalls()
    return float(np.mean(r[s > 0]))


def uar_from_labels(y_true, y_pred, n_classes: int = 3) -> float:
    return uar(ConfusionMatrix.from_labels(y_true, y_pred, n_classes))
