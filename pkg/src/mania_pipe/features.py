"""Feature tables, CSV persistence and train-fitted z-normalization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .corpus import Label
from .errors import DimensionMismatch, EmptyTable, IoError, MissingFile, SchemaViolation
from .functionals import FeatureVector, FunctionalSet, apply_functionals
from .lld import FrameConfig, LldSet, append_deltas, extract_lld

STD_FLOOR = 1e-8
TRAILING = ("label", "recording_id", "task_index")


@dataclass(frozen=True)
class ExtractionConfig:
    frame: FrameConfig = FrameConfig()
    lld: LldSet = LldSet()
    functionals: FunctionalSet = FunctionalSet()
    delta_window: int | None = 2  # None disables deltas

    @property
    def dimension(self) -> int:
        mult = 1 if self.delta_window is None else 2
        return len(self.lld.enabled) * mult * len(self.functionals)


def utterance_features(buf: AudioBuffer, cfg: ExtractionConfig = ExtractionConfig(),
                       recording_id: str = "", task_index: int | None = None) -> FeatureVector:
    m = extract_lld(buf, cfg.lld, cfg.frame)
    if cfg.delta_window is not None:
        m = append_deltas(m, cfg.delta_window)
    return apply_functionals(m, cfg.functionals, recording_id, task_index)


@dataclass(frozen=True)
class FeatureTable:
    X: np.ndarray
    labels: tuple
    names: tuple
    recording_ids: tuple = ()
    task_indices: tuple = ()
    split_tag: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("feature matrix must be 2-D")
        object.__setattr__(self, "X", X)
        n = X.shape[0]
        object.__setattr__(self, "labels", tuple(Label(v).value for v in self.labels))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "recording_ids", tuple(self.recording_ids) or ("",) * n)
        object.__setattr__(self, "task_indices", tuple(self.task_indices) or (None,) * n)
        if len(self.labels) != n or len(self.recording_ids) != n or len(self.task_indices) != n:
            raise DimensionMismatch("labels/ids must have one entry per row")
        if X.shape[1] != len(self.names):
            raise DimensionMismatch(f"{X.shape[1]} columns but {len(self.names)} names")

    @classmethod
    def from_vectors(cls, rows: list[FeatureVector], labels, split_tag: str = "") -> "FeatureTable":
        if not rows:
            raise EmptyTable("no feature vectors")
        names = rows[0].names
        for r in rows:
            if r.names != names:
                raise DimensionMismatch(f"row {r.recording_id!r} has a different feature layout")
        return cls(np.vstack([r.values for r in rows]), labels, names,
                   [r.recording_id for r in rows], [r.task_index for r in rows], split_tag)

    @property
    def rows(self) -> list[FeatureVector]:
        return [FeatureVector(self.X[i], list(self.names), self.recording_ids[i], self.task_indices[i])
                for i in range(len(self))]

    @property
    def y(self) -> np.ndarray:
        return np.array([Label(v).index for v in self.labels], dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "FeatureTable":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], labels=[self.labels[i] for i in idx],
                       recording_ids=[self.recording_ids[i] for i in idx],
                       task_indices=[self.task_indices[i] for i in idx])

    def with_X(self, X: np.ndarray, names=None) -> "FeatureTable":
        return replace(self, X=X, names=self.names if names is None else names)


@dataclass(frozen=True)
class NormParams:
    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "stddev", np.asarray(self.stddev, dtype=np.float64))
        if self.mean.shape != self.stddev.shape:
            raise DimensionMismatch("mean and stddev differ in length")
        if np.any(self.stddev <= 0):
            raise SchemaViolation("stddev entries must be positive")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(
            {"mean": self.mean.tolist(), "stddev": self.stddev.tolist()}) + "\n")

    @classmethod
    def from_json(cls, path) -> "NormParams":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"norm params not found: {path}")
        d = json.loads(path.read_text())
        try:
            return cls(d["mean"], d["stddev"])
        except KeyError as exc:
            raise SchemaViolation(f"{path}: missing field {exc}") from None


def znorm_fit(train: FeatureTable) -> NormParams:
    if len(train) == 0:
        raise EmptyTable("cannot fit normalization on an empty table")
    # Shifting by the first row keeps constant columns exact, so they map to 0
    # rather than to rounding noise divided by the floor.
    ref = train.X[0]
    shifted = train.X - ref
    return NormParams(ref + shifted.mean(axis=0), np.maximum(shifted.std(axis=0), STD_FLOOR))


def znorm_apply(t: FeatureTable, p: NormParams) -> FeatureTable:
    if t.dim != p.mean.shape[0]:
        raise DimensionMismatch(f"table has {t.dim} dims, norm params {p.mean.shape[0]}")
    return t.with_X((t.X - p.mean) / p.stddev)


def znorm_invert(t: FeatureTable, p: NormParams) -> FeatureTable:
    if t.dim != p.mean.shape[0]:
        raise DimensionMismatch(f"table has {t.dim} dims, norm params {p.mean.shape[0]}")
    return t.with_X(t.X * p.stddev + p.mean)


def save_table(t: FeatureTable, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(t.names) + list(TRAILING))
            for i in range(len(t)):
                task = t.task_indices[i]
                w.writerow([format(v, ".17g") for v in t.X[i]]
                           + [t.labels[i], t.recording_ids[i], "" if task is None else str(task)])
    except OSError as exc:
        raise IoError(f"cannot write feature table {path}: {exc}") from exc


def load_table(path, split_tag: str = "") -> FeatureTable:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"feature table not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaViolation(f"{path}: empty file")
    header = rows[0]
    if len(header) < 4 or tuple(header[-3:]) != TRAILING:
        raise SchemaViolation(f"{path}: header must end with label,recording_id,task_index")
    d = len(header) - 3
    X = np.empty((len(rows) - 1, d))
    labels, ids, tasks = [], [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise SchemaViolation(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
        try:
            X[i] = [float(v) for v in row[:d]]
            labels.append(Label(row[d]).value)
            tasks.append(int(row[d + 2]) if row[d + 2] else None)
        except ValueError as exc:
            raise SchemaViolation(f"{path}: row {i + 1}: {exc}") from None
        ids.append(row[d + 1])
    return FeatureTable(X, labels, header[:d], ids, tasks, split_tag)
