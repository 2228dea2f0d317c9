"""Statistical functionals that collapse LLD trajectories into fixed-length vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, InvalidConfig, NumericFailure
from .lld import LldMatrix

ALL_FUNCTIONALS = (
    "mean", "stddev", "skewness", "kurtosis", "min", "max", "range",
    "min_pos_rel", "max_pos_rel", "quartile1", "median", "quartile3",
    "iqr1_2", "iqr2_3", "iqr1_3", "percentile1", "percentile99", "range1_99",
    "linreg_slope", "linreg_offset", "linreg_mse",
)

SIGMA_EPS = 1e-12


@dataclass(frozen=True)
class FunctionalSet:
    enabled: tuple = ALL_FUNCTIONALS

    def __post_init__(self):
        object.__setattr__(self, "enabled", tuple(self.enabled))
        if not self.enabled:
            raise InvalidConfig("functional set must not be empty")
        if len(set(self.enabled)) != len(self.enabled):
            raise InvalidConfig("duplicate functionals")
        unknown = [f for f in self.enabled if f not in ALL_FUNCTIONALS]
        if unknown:
            raise InvalidConfig(f"unknown functionals: {unknown}")

    def __len__(self) -> int:
        return len(self.enabled)


@dataclass
class FeatureVector:
    values: np.ndarray
    names: list = field(default_factory=list)
    recording_id: str = ""
    task_index: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.names),):
            raise ValueError("FeatureVector: values and names differ in length")
        if not np.all(np.isfinite(self.values)):
            raise NumericFailure(f"non-finite feature in recording {self.recording_id!r}")


def _compute(x: np.ndarray) -> dict[str, np.ndarray]:
    """All functionals for every column of x (frames x columns) at once."""
    n = x.shape[0]
    mean = x.mean(axis=0)
    dev = x - mean
    m2 = np.mean(dev ** 2, axis=0)
    sigma = np.sqrt(m2)
    flat = sigma < SIGMA_EPS
    safe = np.where(flat, 1.0, sigma)
    skew = np.where(flat, 0.0, np.mean(dev ** 3, axis=0) / safe ** 3)
    kurt = np.where(flat, 0.0, np.mean(dev ** 4, axis=0) / safe ** 4 - 3.0)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    p1, q1, q2, q3, p99 = np.percentile(x, [1, 25, 50, 75, 99], axis=0)

    t = np.arange(n, dtype=np.float64)
    if n > 1:
        tc = t - t.mean()
        slope = tc @ dev / (tc @ tc)
    else:
        slope = np.zeros(x.shape[1])
    offset = mean - slope * t.mean()
    resid = x - (offset + np.outer(t, slope))
    return {
        "mean": mean, "stddev": sigma, "skewness": skew, "kurtosis": kurt,
        "min": lo, "max": hi, "range": hi - lo,
        "min_pos_rel": np.argmin(x, axis=0) / n, "max_pos_rel": np.argmax(x, axis=0) / n,
        "quartile1": q1, "median": q2, "quartile3": q3,
        "iqr1_2": q2 - q1, "iqr2_3": q3 - q2, "iqr1_3": q3 - q1,
        "percentile1": p1, "percentile99": p99, "range1_99": p99 - p1,
        "linreg_slope": slope, "linreg_offset": offset,
        "linreg_mse": np.mean(resid ** 2, axis=0),
    }


def apply_functionals(m: LldMatrix, fs: FunctionalSet = FunctionalSet(),
                      recording_id: str = "", task_index: int | None = None) -> FeatureVector:
    """Feature order is LLD-major: ``<lld>_<functional>`` for each LLD, then each functional."""
    if m.n_frames < 1:
        raise EmptyMatrix("cannot apply functionals to a matrix with no frames")
    stats = _compute(m.values)
    values = np.stack([stats[f] for f in fs.enabled], axis=1).reshape(-1)
    names = [f"{lld}_{f}" for lld in m.names for f in fs.enabled]
    return FeatureVector(values, names, recording_id, task_index)


def expected_dimension(lld_count: int, with_deltas: bool, fs: FunctionalSet | int,
                       extras: int = 0) -> int:
    """Nominal output length; the stock IS10 accounting is 34 * 2 * 21 + 154 = 1582."""
    if lld_count < 1:
        raise InvalidConfig("lld_count must be >= 1")
    n_func = fs if isinstance(fs, int) else len(fs)
    return lld_count * (2 if with_deltas else 1) * n_func + extras
