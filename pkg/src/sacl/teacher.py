"""Frozen teacher classifier and its temperature-smoothed similarity matrix.

The teacher is a linear softmax classifier trained once with
cross-entropy on the base classes and then frozen. Its smoothed class
posteriors on an augmented batch form the similarity matrix that drives
the pair weights, and its batch accuracy supplies the adaptive mixing
weight lambda.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .datasets import AugmentedBatch, LabeledFeatureSet
from .exceptions import ConfigurationError, ProtocolError, ShapeError, TrainingError
from .numerics import RngStream, softmax_rows
from .optim import Adam
from .validation import as_labels, as_matrix

_MAGIC = b"SACLTCH1"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Row-stochastic teacher posteriors for a batch of views.

    ``class_ids[c]`` names the label that column c scores, so weight
    construction can look up the column for an arbitrary anchor label.
    """

    rows: np.ndarray
    tau_hot: float
    class_ids: np.ndarray

    def __post_init__(self):
        rows = as_matrix(self.rows, "rows")
        class_ids = as_labels(self.class_ids, "class_ids")
        if class_ids.shape[0] != rows.shape[1]:
            raise ShapeError("one class id per posterior column required")
        if self.tau_hot <= 0:
            raise ConfigurationError(f"tau_hot must be positive, got {self.tau_hot}")
        sums = rows.sum(axis=1)
        # [0,1] rather than (0,1): the idealized one-hot teacher is a valid limit
        if np.any(np.abs(sums - 1.0) > 1e-12) or np.any(rows < 0) or np.any(rows > 1):
            raise ConfigurationError("similarity rows must lie in [0,1] and sum to 1")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "class_ids", class_ids)
        self.rows.setflags(write=False)

    def column_of(self, label: int) -> int:
        hits = np.flatnonzero(self.class_ids == label)
        if hits.shape[0] != 1:
            raise ProtocolError(f"label {label} not scored by this similarity matrix")
        return int(hits[0])


class LinearSoftmaxClassifier(BaseEstimator, ClassifierMixin):
    """Linear classifier trained with minibatch Adam on cross-entropy.

    Parameters
    ----------
    epochs : passes over the training set.
    learning_rate : Adam step size.
    batch_size : minibatch size (clamped to the set size).
    init_scale : stddev of the Gaussian weight initialization.
    seed, stream : random stream for initialization and batch order.

    After ``fit`` the parameters are frozen (the arrays are marked
    read-only); inference never mutates the model.
    """

    def __init__(self, epochs=200, learning_rate=1e-3, batch_size=128,
                 init_scale=0.01, seed=0, stream=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.init_scale = init_scale
        self.seed = seed
        self.stream = stream

    def fit(self, X, y):
        X = as_matrix(X, "X")
        y = as_labels(y, "y")
        if X.shape[0] == 0:
            raise ConfigurationError("cannot fit on an empty set")
        if X.shape[0] != y.shape[0]:
            raise ShapeError("X and y disagree on sample count")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        classes = np.unique(y)
        dense = np.searchsorted(classes, y)
        n, dim = X.shape
        c = classes.shape[0]
        batch = min(int(self.batch_size), n)

        gen = RngStream(self.seed, self.stream).generator()
        W = gen.normal(0.0, self.init_scale, size=(c, dim))
        b = np.zeros(c)

        opt = Adam([W.shape, b.shape], learning_rate=self.learning_rate)
        for epoch in range(int(self.epochs)):
            order = gen.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                logits = X[idx] @ W.T + b
                probs = softmax_rows(logits, 1.0)
                loss = -float(np.mean(np.log(probs[np.arange(len(idx)), dense[idx]])))
                if not np.isfinite(loss):
                    raise TrainingError(f"cross-entropy diverged at epoch {epoch}")
                resid = (probs - np.eye(c)[dense[idx]]) / len(idx)
                W, b = opt.step([W, b], [resid.T @ X[idx], resid.sum(axis=0)])

        W.setflags(write=False)
        b.setflags(write=False)
        self.coef_ = W
        self.intercept_ = b
        self.classes_ = classes
        self.n_features_in_ = dim
        return self

    @property
    def frozen(self) -> bool:
        return hasattr(self, "coef_")

    def _check_fitted(self):
        if not self.frozen:
            raise NotFittedError("classifier is not fitted; call fit first")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X @ self.coef_.T + self.intercept_

    def predict(self, X) -> np.ndarray:
        # np.argmax breaks ties toward the lowest index
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        return softmax_rows(self.decision_function(X), 1.0)

    def class_posteriors(self, X, tau: float) -> np.ndarray:
        """Temperature-smoothed posteriors: softmax of logits / tau per row."""
        return softmax_rows(self.decision_function(X), tau)

    def save(self, path) -> None:
        """Flat binary checkpoint: magic, u32 class count, u32 dim, then
        row-major weights and biases as little-endian f64."""
        self._check_fitted()
        c, dim = self.coef_.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", c, dim))
            fh.write(np.ascontiguousarray(self.coef_, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.intercept_, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "LinearSoftmaxClassifier":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != _MAGIC:
            raise ConfigurationError(f"{path} is not a teacher checkpoint")
        c, dim = struct.unpack_from("<II", blob, 8)
        need = 16 + 8 * (c * dim + c)
        if len(blob) != need:
            raise ConfigurationError(f"{path}: expected {need} bytes, found {len(blob)}")
        W = np.frombuffer(blob, dtype="<f8", count=c * dim, offset=16).reshape(c, dim).copy()
        b = np.frombuffer(blob, dtype="<f8", count=c, offset=16 + 8 * c * dim).copy()
        model = cls()
        W.setflags(write=False)
        b.setflags(write=False)
        model.coef_ = W
        model.intercept_ = b
        model.classes_ = np.arange(c, dtype=np.int64)
        model.n_features_in_ = dim
        return model


def train_teacher(
    base: LabeledFeatureSet,
    epochs: int = 200,
    learning_rate: float = 1e-3,
    rng: RngStream = RngStream(0),
    batch_size: int = 128,
) -> LinearSoftmaxClassifier:
    """Fit the frozen teacher on un-augmented base samples."""
    model = LinearSoftmaxClassifier(
        epochs=epochs, learning_rate=learning_rate, batch_size=batch_size,
        seed=rng.seed, stream=rng.stream,
    )
    return model.fit(base.features, base.labels)


def structural_similarity(
    model: LinearSoftmaxClassifier, batch: AugmentedBatch, tau_hot: float
) -> SimilarityMatrix:
    """Teacher posteriors for every view, smoothed by the hot temperature."""
    if not model.frozen:
        raise NotFittedError("teacher must be fitted (frozen) before extracting similarity")
    if tau_hot <= 0:
        raise ConfigurationError(f"tau_hot must be positive, got {tau_hot}")
    rows = model.class_posteriors(batch.views, tau_hot)
    return SimilarityMatrix(rows=rows, tau_hot=float(tau_hot), class_ids=model.classes_)


def batch_accuracy_lambda(model: LinearSoftmaxClassifier, batch: AugmentedBatch) -> float:
    """Fraction of views whose argmax logit matches their label; the
    adaptive weight for non-homolog pairs."""
    if not model.frozen:
        raise NotFittedError("teacher must be fitted before measuring accuracy")
    if len(batch) == 0:
        raise ProtocolError("cannot measure accuracy of an empty batch")
    pred = model.predict(batch.views)
    return float(np.mean(pred == batch.labels))
