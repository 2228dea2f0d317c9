"""A small 1D CNN over the selected feature axis, written directly in numpy.

Each feature vector is read as a one-channel sequence. Two blocks of
conv -> batch norm -> ReLU -> dropout feed a pooling step and a dense
softmax layer. Training uses Adam on mean cross-entropy and keeps the
snapshot with the lowest dev loss.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BatchTooSmall,
    EmptySet,
    InvalidConfig,
    MissingFile,
    NumericFailure,
    SchemaViolation,
    ShapeMismatch,
)
from .metrics import uar_from_labels

TRAIN, EVAL = "train", "eval"


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int = 5
    stride: int = 1


@dataclass(frozen=True)
class CnnConfig:
    input_dim: int = 100
    conv1: ConvSpec = ConvSpec(16, 5)
    conv2: ConvSpec = ConvSpec(25, 5)
    dropout_p: float = 0.3
    n_classes: int = 3
    pooling: str = "global_average"  # or "flatten"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if isinstance(self.conv1, dict):
            object.__setattr__(self, "conv1", ConvSpec(**self.conv1))
        if isinstance(self.conv2, dict):
            object.__setattr__(self, "conv2", ConvSpec(**self.conv2))
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfig("dropout_p must lie in [0, 1)")
        if self.conv1.stride != 1 or self.conv2.stride != 1:
            raise InvalidConfig("only stride 1 convolutions are supported")
        if self.pooling not in ("global_average", "flatten"):
            raise InvalidConfig(f"unknown pooling {self.pooling!r}")
        if self.conv1.kernel > self.input_dim or self.conv2.kernel > self.len1:
            raise InvalidConfig("kernel longer than its input sequence")

    @property
    def len1(self) -> int:
        return self.input_dim - self.conv1.kernel + 1

    @property
    def len2(self) -> int:
        return self.len1 - self.conv2.kernel + 1

    @property
    def dense_in(self) -> int:
        return self.conv2.filters * (1 if self.pooling == "global_average" else self.len2)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 5
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    class_weighting: bool = False
    early_stop_mode: str = "cumulative"  # or "consecutive"

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1:
            raise InvalidConfig("patience and batch_size must be >= 1")
        if self.early_stop_mode not in ("cumulative", "consecutive"):
            raise InvalidConfig(f"unknown early_stop_mode {self.early_stop_mode!r}")


@dataclass
class CnnModel:
    config: CnnConfig
    params: dict
    buffers: dict
    mode: str = EVAL

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    dev_uar: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "dev_loss", "dev_uar", "is_best"])
            for i, (a, b, c) in enumerate(zip(self.train_loss, self.dev_loss, self.dev_uar)):
                w.writerow([i + 1, format(a, ".17g"), format(b, ".17g"), format(c, ".17g"),
                            int(i + 1 == self.best_epoch)])


def init_model(cfg: CnnConfig = CnnConfig(), seed: int = 0) -> CnnModel:
    rng = np.random.default_rng(seed)
    f1, k1 = cfg.conv1.filters, cfg.conv1.kernel
    f2, k2 = cfg.conv2.filters, cfg.conv2.kernel
    params = {
        "conv1.W": rng.normal(0.0, np.sqrt(2.0 / k1), (f1, 1, k1)),
        "conv1.b": np.zeros(f1),
        "bn1.gamma": np.ones(f1),
        "bn1.beta": np.zeros(f1),
        "conv2.W": rng.normal(0.0, np.sqrt(2.0 / (f1 * k2)), (f2, f1, k2)),
        "conv2.b": np.zeros(f2),
        "bn2.gamma": np.ones(f2),
        "bn2.beta": np.zeros(f2),
        "dense.W": rng.normal(0.0, np.sqrt(1.0 / cfg.dense_in), (cfg.n_classes, cfg.dense_in)),
        "dense.b": np.zeros(cfg.n_classes),
    }
    buffers = {"bn1.mean": np.zeros(f1), "bn1.var": np.ones(f1),
               "bn2.mean": np.zeros(f2), "bn2.var": np.ones(f2)}
    return CnnModel(cfg, params, buffers, EVAL)


# ---------------------------------------------------------------------------
# layer primitives


def conv1d(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Valid cross-correlation. x (N, C, L), W (F, C, K) -> (N, F, L-K+1)."""
    n, c, _ = x.shape
    f, _, k = W.shape
    win = sliding_window_view(x, k, axis=2)  # (N, C, Lout, K)
    lout = win.shape[2]
    cols = win.transpose(0, 2, 1, 3).reshape(n * lout, c * k)
    out = (cols @ W.reshape(f, c * k).T).reshape(n, lout, f).transpose(0, 2, 1) + b[None, :, None]
    return out, cols


def conv1d_backward(dout: np.ndarray, cols: np.ndarray, x_shape, W: np.ndarray):
    n, c, length = x_shape
    f, _, k = W.shape
    lout = dout.shape[2]
    d2 = dout.transpose(0, 2, 1).reshape(n * lout, f)
    dW = (d2.T @ cols).reshape(f, c, k)
    db = dout.sum(axis=(0, 2))
    padded = np.pad(dout, ((0, 0), (0, 0), (k - 1, k - 1)))
    win = sliding_window_view(padded, k, axis=2)  # (N, F, L, K)
    wflip = W[:, :, ::-1].transpose(0, 2, 1).reshape(f * k, c)
    dx = (win.transpose(0, 2, 1, 3).reshape(n * length, f * k) @ wflip)
    return dx.reshape(n, length, c).transpose(0, 2, 1), dW, db


def _bn_forward(z, gamma, beta, run_mean, run_var, train: bool, momentum: float, eps: float):
    if train:
        mu = z.mean(axis=(0, 2))
        var = z.var(axis=(0, 2))
        run_mean *= 1.0 - momentum
        run_mean += momentum * mu
        run_var *= 1.0 - momentum
        run_var += momentum * var
    else:
        mu, var = run_mean, run_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (z - mu[None, :, None]) * inv[None, :, None]
    return gamma[None, :, None] * xhat + beta[None, :, None], (xhat, inv)


def _bn_backward(dy, cache, gamma):
    xhat, inv = cache
    m = dy.shape[0] * dy.shape[2]
    dgamma = np.sum(dy * xhat, axis=(0, 2))
    dbeta = dy.sum(axis=(0, 2))
    dxhat = dy * gamma[None, :, None]
    dz = (inv[None, :, None] / m) * (
        m * dxhat - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * np.sum(dxhat * xhat, axis=(0, 2))[None, :, None])
    return dz, dgamma, dbeta


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(model: CnnModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise ShapeMismatch(f"expected (rows, {model.config.input_dim}) input, got {X.shape}")
    return X


def _forward(model: CnnModel, X: np.ndarray, train: bool, rng: np.random.Generator | None):
    cfg, P, B = model.config, model.params, model.buffers
    p = cfg.dropout_p
    if train and rng is None:
        rng = np.random.default_rng(0)
    cache = {}
    h = X[:, None, :]
    for i in (1, 2):
        z, cols = conv1d(h, P[f"conv{i}.W"], P[f"conv{i}.b"])
        y, bn_cache = _bn_forward(z, P[f"bn{i}.gamma"], P[f"bn{i}.beta"], B[f"bn{i}.mean"],
                                  B[f"bn{i}.var"], train, cfg.bn_momentum, cfg.bn_eps)
        a = np.maximum(y, 0.0)
        if train and p > 0:
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            out = a * mask
        else:
            mask = None
            out = a
        cache[i] = (h.shape, cols, bn_cache, y > 0, mask)
        h = out
    pooled = h.mean(axis=2) if cfg.pooling == "global_average" else h.reshape(h.shape[0], -1)
    cache["pool"] = (h.shape, pooled)
    logits = pooled @ P["dense.W"].T + P["dense.b"]
    return logits, cache


def _backward(model: CnnModel, dlogits: np.ndarray, cache) -> dict:
    P = model.params
    grads = {}
    h_shape, pooled = cache["pool"]
    grads["dense.W"] = dlogits.T @ pooled
    grads["dense.b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ P["dense.W"]
    if model.config.pooling == "global_average":
        dh = np.repeat(dpooled[:, :, None] / h_shape[2], h_shape[2], axis=2)
    else:
        dh = dpooled.reshape(h_shape)
    for i in (2, 1):
        x_shape, cols, bn_cache, relu_on, mask = cache[i]
        da = dh * mask if mask is not None else dh
        dy = da * relu_on
        dz, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = _bn_backward(dy, bn_cache, P[f"bn{i}.gamma"])
        dh, grads[f"conv{i}.W"], grads[f"conv{i}.b"] = conv1d_backward(dz, cols, x_shape, P[f"conv{i}.W"])
    return {k: grads[k] for k in P}


def forward(model: CnnModel, batch, mode: str = EVAL, rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities (rows x n_classes). Eval mode is deterministic."""
    X = _check_batch(model, batch)
    train = mode == TRAIN
    if train and X.shape[0] < 2:
        raise BatchTooSmall("batch norm needs at least 2 rows in train mode")
    logits, _ = _forward(model, X, train, rng)
    return softmax(logits)


def cross_entropy(probs: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> float:
    nll = -np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))
    if weights is None:
        return float(nll.mean())
    w = weights[y]
    return float(np.sum(w * nll) / np.sum(w))


def loss_and_grad(model: CnnModel, batch, labels, rng: np.random.Generator | None = None,
                  class_weights: np.ndarray | None = None):
    """Mean cross-entropy in train mode and the gradient of every parameter."""
    X = _check_batch(model, batch)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"{len(y)} labels for {X.shape[0]} rows")
    if X.shape[0] < 2:
        raise BatchTooSmall("batch norm needs at least 2 rows in train mode")
    logits, cache = _forward(model, X, True, rng)
    probs = softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(y)), y] = 1.0
    w = np.ones(len(y)) if class_weights is None else class_weights[y]
    loss = cross_entropy(probs, y, class_weights)
    dlogits = (probs - onehot) * (w / w.sum())[:, None]
    return loss, _backward(model, dlogits, cache)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, model: CnnModel) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in model.params.items()},
                   {k: np.zeros_like(p) for k, p in model.params.items()}, 0)


def adam_step(model: CnnModel, grads: dict, state: AdamState, cfg: TrainConfig = TrainConfig()):
    """Bias-corrected Adam update, in place; returns (model, state)."""
    if set(grads) != set(model.params):
        raise ShapeMismatch("gradient keys do not match model parameters")
    state.t += 1
    t = state.t
    for k, p in model.params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeMismatch(f"shape mismatch for {k}: {g.shape} vs {p.shape}")
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[k] / (1.0 - cfg.beta1 ** t)
        v_hat = state.v[k] / (1.0 - cfg.beta2 ** t)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return model, state


class EarlyStopping:
    """Counts epochs whose dev loss exceeds the best seen so far.

    ``cumulative`` never resets the counter; ``consecutive`` resets it on
    every new best.
    """

    def __init__(self, patience: int = 5, mode: str = "cumulative"):
        self.patience = patience
        self.mode = mode
        self.best = np.inf
        self.best_epoch = 0
        self.counter = 0

    def update(self, loss: float, epoch: int) -> bool:
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            if self.mode == "consecutive":
                self.counter = 0
        elif loss > self.best:
            self.counter += 1
        return self.counter >= self.patience


def predict_proba(model: CnnModel, X) -> np.ndarray:
    return forward(model, X, EVAL)


def predict(model: CnnModel, table) -> np.ndarray:
    """Argmax class indices; exact ties resolve to the lower index."""
    X = table.X if hasattr(table, "X") else table
    return np.argmax(predict_proba(model, X), axis=1)


def _class_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    return np.where(counts > 0, len(y) / (n_classes * np.maximum(counts, 1)), 0.0)


def _dev_metrics(model: CnnModel, X: np.ndarray, y: np.ndarray):
    probs = forward(model, X, EVAL)
    return cross_entropy(probs, y), uar_from_labels(y, np.argmax(probs, axis=1), model.config.n_classes)


def _batches(order: np.ndarray, size: int):
    chunks = [order[i:i + size] for i in range(0, len(order), size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train(trainset, devset, ccfg: CnnConfig = CnnConfig(), tcfg: TrainConfig = TrainConfig()):
    """Adam training with dev-loss early stopping; returns the best snapshot and history."""
    if len(trainset) == 0 or len(devset) == 0:
        raise EmptySet("train and dev sets must be non-empty")
    if len(trainset) < 2:
        raise BatchTooSmall("need at least 2 training rows for batch norm")
    Xtr, ytr = np.asarray(trainset.X, dtype=np.float64), trainset.y
    Xdv, ydv = np.asarray(devset.X, dtype=np.float64), devset.y
    for X in (Xtr, Xdv):
        if X.shape[1] != ccfg.input_dim:
            raise ShapeMismatch(f"table has {X.shape[1]} dims, network expects {ccfg.input_dim}")

    model = init_model(ccfg, tcfg.seed)
    state = AdamState.zeros_like(model)
    rng = np.random.default_rng([tcfg.seed, 1])
    cw = _class_weights(ytr, ccfg.n_classes) if tcfg.class_weighting else None
    stopper = EarlyStopping(tcfg.patience, tcfg.early_stop_mode)
    hist = TrainHistory()
    best = model.copy()

    for epoch in range(1, tcfg.max_epochs + 1):
        model.mode = TRAIN
        total = 0.0
        for idx in _batches(rng.permutation(len(ytr)), tcfg.batch_size):
            loss, grads = loss_and_grad(model, Xtr[idx], ytr[idx], rng, cw)
            if not np.isfinite(loss):
                raise NumericFailure(f"non-finite training loss at epoch {epoch}")
            adam_step(model, grads, state, tcfg)
            total += loss * len(idx)
        model.mode = EVAL
        dev_loss, dev_uar = _dev_metrics(model, Xdv, ydv)
        if not np.isfinite(dev_loss):
            raise NumericFailure(f"non-finite dev loss at epoch {epoch}")
        hist.train_loss.append(total / len(ytr))
        hist.dev_loss.append(dev_loss)
        hist.dev_uar.append(dev_uar)
        stop = stopper.update(dev_loss, epoch)
        if stopper.best_epoch == epoch:
            best = model.copy()
        hist.stopped_epoch = epoch
        if stop:
            break
    hist.best_epoch = stopper.best_epoch
    best.mode = EVAL
    return best, hist


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: CnnModel, path) -> None:
    doc = {
        "config": asdict(model.config),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.params.items()},
        "buffers": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.buffers.items()},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> CnnModel:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"checkpoint not found: {path}")
    doc = json.loads(path.read_text())
    try:
        cfg = CnnConfig(**doc["config"])

        def arrays(d):
            return {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d.items()}

        model = CnnModel(cfg, arrays(doc["params"]), arrays(doc["buffers"]), EVAL)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"{path}: malformed checkpoint ({exc})") from None
    ref = init_model(cfg)
    for k, v in ref.params.items():
        if k not in model.params or model.params[k].shape != v.shape:
            raise SchemaViolation(f"{path}: parameter {k} missing or misshapen")
    return model
