"""Sparse top-k gating over patches.

A linear map ``H(x) = x @ W + b`` scores every patch for an input; only the
``k`` highest entries survive (ties: lower patch index) and a softmax over
the survivors gives the patch weights.  The image prediction is the argmax
of the weighted sum of patch class scores.  ``normalize="sigmoid"`` swaps the
softmax for an element-wise sigmoid on the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSplit, DimensionMismatch
from .scores import ScoreTensor


@dataclass
class GateModel:
    W: np.ndarray  # (n_features, n_patches)
    b: np.ndarray  # (n_patches,)
    k: int
    normalize: str = "softmax"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise DimensionMismatch(f"gate weights {self.W.shape} do not match bias {self.b.shape}")
        if not 1 <= self.k <= self.n_patches:
            raise ValueError(f"k must lie in [1, {self.n_patches}], got {self.k}")
        if self.normalize not in ("softmax", "sigmoid"):
            raise ValueError(f"unknown normalization {self.normalize!r}")

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def n_patches(self) -> int:
        return self.W.shape[1]


def constant_gate(n_features: int, n_patches: int, k: int, value: float = 0.0) -> GateModel:
    return GateModel(np.zeros((n_features, n_patches)), np.full(n_patches, value), k)


def _topk_mask(h: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-h, axis=1, kind="stable")
    mask = np.zeros(h.shape, dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=1)
    return mask


def gate_weights(model: GateModel, X: np.ndarray) -> np.ndarray:
    """Patch weights, shape (n_images, n_patches); at most ``k`` non-zero per row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"gate expects {model.n_features} features, got {X.shape[1]}")
    h = X @ model.W + model.b
    mask = _topk_mask(h, model.k)
    if model.normalize == "sigmoid":
        return np.where(mask, 1.0 / (1.0 + np.exp(-h)), 0.0)
    z = np.where(mask, h, -np.inf)
    z = np.exp(z - z.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _mixture(model, X, S):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 3 or S.shape[1] != model.n_patches:
        raise DimensionMismatch(f"gate expects scores with {model.n_patches} patches, got shape {S.shape}")
    if S.shape[0] != np.atleast_2d(X).shape[0]:
        raise DimensionMismatch("features and scores disagree on the number of images")
    g = gate_weights(model, X)
    return g, np.einsum("np,npc->nc", g, S)


def gate_predict_batch(model: GateModel, X: np.ndarray, S: np.ndarray) -> np.ndarray:
    return np.argmax(_mixture(model, X, S)[1], axis=1)


def gate_predict(model: GateModel, x: np.ndarray, scores: np.ndarray) -> int:
    """Class for one image: ``x`` is its feature vector, ``scores`` is (n_patches, n_classes)."""
    return int(gate_predict_batch(model, np.asarray(x)[None, :], np.asarray(scores)[None])[0])


def gate_loss_and_grads(model: GateModel, X, S, y):
    """Mean softmax cross-entropy of the gated mixture and its gradients.

    The top-k selection is treated as fixed, so the gradients are exact
    wherever the selected set does not change.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    g, z = _mixture(model, X, S)
    n = len(y)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(p[np.arange(n), y])))
    dz = p
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dg = np.einsum("nc,npc->np", dz, np.asarray(S, dtype=np.float64))
    if model.normalize == "sigmoid":
        dh = dg * g * (1.0 - g)
    else:
        dh = g * (dg - np.sum(g * dg, axis=1, keepdims=True))
    return loss, {"W": X.T @ dh, "b": dh.sum(axis=0)}


def gate_train(st: ScoreTensor, k: int, features: np.ndarray | None = None, epochs: int = 100,
               lr: float = 1e-2, batch_size: int = 64, seed: int = 0,
               normalize: str = "softmax") -> GateModel:
    """Fit the gate on the train split by mini-batch gradient descent.

    ``features`` defaults to the concatenated patch scores.
    """
    X = st.features() if features is None else np.asarray(features, dtype=np.float64)
    if X.shape[0] != st.n_images:
        raise DimensionMismatch(f"{X.shape[0]} feature rows for {st.n_images} images")
    m = st.mask("train")
    if not m.any():
        raise DegenerateSplit("the train split has no images")
    X, S, y = X[m], st.data[m].astype(np.float64), st.labels[m]
    rng = np.random.default_rng(seed)
    model = GateModel(rng.normal(0.0, 0.01, (X.shape[1], st.n_patches)), np.zeros(st.n_patches), k, normalize)
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            _, grads = gate_loss_and_grads(model, X[idx], S[idx], y[idx])
            model.W -= lr * grads["W"]
            model.b -= lr * grads["b"]
    return model
