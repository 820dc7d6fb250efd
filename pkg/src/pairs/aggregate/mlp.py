"""One-hidden-layer MLP over concatenated patch scores.

``logits = relu(batchnorm(x @ W1 + b1)) @ W2 + b2``

Training mode normalises with batch statistics; eval mode uses running
statistics updated as ``running = momentum * running + (1 - momentum) * batch``
(biased batch variance).  Training is plain mini-batch gradient descent on
softmax cross-entropy with hand-written backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateSplit, DimensionMismatch
from .scores import ScoreTensor

BN_EPS = 1e-5
PARAMS = ("W1", "b1", "gamma", "beta", "W2", "b2")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    momentum: float = 0.9
    eps: float = BN_EPS

    def __post_init__(self):
        for name in PARAMS + ("running_mean", "running_var"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d, h = self.W1.shape
        if self.W2.shape[0] != h:
            raise DimensionMismatch(f"hidden widths disagree: W1 {self.W1.shape}, W2 {self.W2.shape}")
        for name in ("b1", "gamma", "beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (h,):
                raise DimensionMismatch(f"{name} must have shape ({h},)")
        if self.b2.shape != (self.W2.shape[1],):
            raise DimensionMismatch(f"b2 must have shape ({self.W2.shape[1]},)")
        if np.any(self.running_var < 0):
            raise ValueError("batch-norm running variance must be non-negative")

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel(*(getattr(self, f).copy() for f in
                          ("W1", "b1", "gamma", "beta", "running_mean", "running_var", "W2", "b2")),
                        momentum=self.momentum, eps=self.eps)


def init_mlp(in_dim: int, n_classes: int, hidden: int = 1024, rng=None) -> MlpModel:
    rng = np.random.default_rng(rng)
    return MlpModel(
        W1=rng.normal(0.0, np.sqrt(2.0 / in_dim), (in_dim, hidden)),
        b1=np.zeros(hidden),
        gamma=np.ones(hidden),
        beta=np.zeros(hidden),
        running_mean=np.zeros(hidden),
        running_var=np.ones(hidden),
        W2=rng.normal(0.0, np.sqrt(1.0 / hidden), (hidden, n_classes)),
        b2=np.zeros(n_classes),
    )


def _forward(model: MlpModel, X: np.ndarray, train: bool):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise DimensionMismatch(f"MLP expects inputs of length {model.in_dim}, got shape {X.shape}")
    z = X @ model.W1 + model.b1
    if train:
        mu = z.mean(axis=0)
        var = z.var(axis=0)
    else:
        mu, var = model.running_mean, model.running_var
    inv_std = 1.0 / np.sqrt(var + model.eps)
    xhat = (z - mu) * inv_std
    a = model.gamma * xhat + model.beta
    hid = np.maximum(a, 0.0)
    logits = hid @ model.W2 + model.b2
    return logits, (X, xhat, inv_std, a, hid, mu, var)


def mlp_forward(model: MlpModel, x, mode: str = "eval") -> np.ndarray:
    """Class logits for one input vector or a batch of rows.

    ``mode="train"`` normalises with the statistics of the given batch.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    logits, _ = _forward(model, x[None, :] if single else x, mode == "train")
    return logits[0] if single else logits


def _xent(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return logp


def mlp_loss(model: MlpModel, X, y, mode: str = "train") -> float:
    logits = mlp_forward(model, np.atleast_2d(X), mode)
    y = np.asarray(y)
    return float(-np.mean(_xent(logits, y)[np.arange(len(y)), y]))


def mlp_loss_and_grads(model: MlpModel, X, y):
    """Training-mode loss and gradients for every parameter in ``PARAMS``."""
    y = np.asarray(y)
    logits, (X, xhat, inv_std, a, hid, mu, var) = _forward(model, np.atleast_2d(X), True)
    n = len(y)
    logp = _xent(logits, y)
    loss = float(-np.mean(logp[np.arange(n), y]))

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    g = {"W2": hid.T @ dlogits, "b2": dlogits.sum(axis=0)}
    da = (dlogits @ model.W2.T) * (a > 0)
    g["gamma"] = np.sum(da * xhat, axis=0)
    g["beta"] = da.sum(axis=0)
    dxhat = da * model.gamma
    dz = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    g["W1"] = X.T @ dz
    g["b1"] = dz.sum(axis=0)
    return loss, g, (mu, var)


def accuracy(model: MlpModel, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(mlp_forward(model, X, "eval"), axis=1) == np.asarray(y)))


@dataclass
class TrainResult:
    model: MlpModel
    losses: list = field(default_factory=list)  # mean training loss per epoch
    best_epoch: int | None = None


def fit_mlp(X, y, n_classes: int, hidden: int = 1024, batch_size: int = 64, lr: float = 1e-3,
            epochs: int = 100, seed: int = 0, X_val=None, y_val=None) -> TrainResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise DegenerateSplit("no training images")
    rng = np.random.default_rng(seed)
    model = init_mlp(X.shape[1], n_classes, hidden, rng)
    result = TrainResult(model)
    best_acc = -1.0
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            loss, grads, (mu, var) = mlp_loss_and_grads(model, X[idx], y[idx])
            for name in PARAMS:
                getattr(model, name)[...] -= lr * grads[name]
            m = model.momentum
            model.running_mean = m * model.running_mean + (1 - m) * mu
            model.running_var = m * model.running_var + (1 - m) * var
            total += loss * len(idx)
        result.losses.append(total / len(y))
        if X_val is not None:
            acc = accuracy(model, X_val, y_val)
            if acc > best_acc:
                best_acc = acc
                result.model = model.copy()
                result.best_epoch = epoch
    if X_val is None:
        result.model = model
    return result


def mlp_train(st: ScoreTensor, hidden: int = 1024, batch_size: int = 64, lr: float = 1e-3,
              epochs: int = 100, seed: int = 0, val_fraction: float = 0.0) -> TrainResult:
    """Train on the train split of ``st``.

    ``val_fraction > 0`` holds out a seeded share of the train images and
    returns the model from the epoch with the best held-out accuracy.
    """
    X_all = st.features()
    m = st.mask("train")
    X, y = X_all[m], st.labels[m]
    if len(y) == 0:
        raise DegenerateSplit("the train split has no images")
    X_val = y_val = None
    if val_fraction > 0:
        n_val = int(round(val_fraction * len(y)))
        if n_val < 1 or n_val >= len(y):
            raise DegenerateSplit(f"validation fraction {val_fraction} leaves an empty split")
        perm = np.random.default_rng([seed, 1]).permutation(len(y))
        X_val, y_val = X[perm[:n_val]], y[perm[:n_val]]
        X, y = X[perm[n_val:]], y[perm[n_val:]]
    return fit_mlp(X, y, st.n_classes, hidden, batch_size, lr, epochs, seed, X_val, y_val)
