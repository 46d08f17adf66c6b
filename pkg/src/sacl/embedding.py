"""Encoder training loop and the sklearn-style embedding transformer.

Each iteration: sample a source batch, make two augmented views per
source, score the views with the frozen teacher (similarity matrix and
batch accuracy), run the encoder forward, evaluate the weighted
contrastive loss and its exact feature gradient, backpropagate through
the encoder, and take one Adam step. The teacher is never updated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .datasets import LabeledFeatureSet, augment_batch
from .encoder import MlpEncoder
from .exceptions import ConfigurationError, TrainingError
from .losses import (
    EmbeddingBatch,
    cl_weights,
    pair_weights,
    sacl_grad_features,
    sacl_loss,
    scl_weights,
)
from .numerics import RngStream
from .optim import Adam
from .teacher import (
    LinearSoftmaxClassifier,
    batch_accuracy_lambda,
    structural_similarity,
    train_teacher,
)
from .validation import as_labels, as_matrix

LOSSES = ("sacl", "cl", "scl")

# stream-id allocation: everything the trainer draws is keyed off the run
# seed with non-overlapping stream ranges, so adding consumers never
# perturbs existing ones
TEACHER_STREAM = 1
ENCODER_INIT_STREAM = 2
BATCH_STREAM_BASE = 1 << 34
AUGMENT_STREAM_BASE = 1 << 35


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one encoder training run."""

    hidden_dims: tuple[int, ...] = (64, 64)
    embed_dim: int = 32
    loss: str = "sacl"
    iterations: int = 1000
    batch_size: int = 128
    learning_rate: float = 1e-3
    tau_hot: float = 2.5
    tau_cold: float = 0.05
    lam: float | str = "adaptive"
    noise_sigma: float = 0.1
    scale_range: tuple[float, float] = (0.8, 1.2)
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        for name in ("iterations", "batch_size", "embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("tau_hot", "tau_cold"):
            if float(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.lam != "adaptive":
            lam = float(self.lam)
            if not (0.0 <= lam <= 1.0):
                raise ConfigurationError(f"fixed lam must lie in [0,1], got {lam}")


@dataclass
class TrainingLog:
    """Per-iteration record of the run, written as the training-log CSV."""

    loss: list[float] = field(default_factory=list)
    lam: list[float] = field(default_factory=list)
    teacher_batch_acc: list[float] = field(default_factory=list)

    def append(self, loss: float, lam: float, teacher_batch_acc: float) -> None:
        self.loss.append(loss)
        self.lam.append(lam)
        self.teacher_batch_acc.append(teacher_batch_acc)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iter,loss,lambda,teacher_batch_acc\n")
            for i, (l, m, a) in enumerate(zip(self.loss, self.lam, self.teacher_batch_acc), 1):
                fh.write(f"{i},{l!r},{m!r},{a!r}\n")


def train_encoder(
    base: LabeledFeatureSet,
    teacher: LinearSoftmaxClassifier,
    cfg: TrainConfig,
    callback=None,
) -> tuple[MlpEncoder, TrainingLog]:
    """Run the training loop on base classes; returns the encoder frozen
    in the sense that nothing downstream ever updates it again.

    ``callback(iteration, encoder)`` fires after each parameter update,
    for accuracy-trend tracking.
    """
    if not teacher.frozen:
        raise NotFittedError("teacher must be fitted before encoder training")
    n = len(base)
    batch_size = min(cfg.batch_size, n)
    encoder = MlpEncoder.initialize(
        base.dim, cfg.hidden_dims, cfg.embed_dim, RngStream(cfg.seed, ENCODER_INIT_STREAM)
    )
    opt = Adam([p.shape for p in encoder.parameters()], learning_rate=cfg.learning_rate)
    log = TrainingLog()

    for it in range(int(cfg.iterations)):
        pick = RngStream(cfg.seed, BATCH_STREAM_BASE + it).generator()
        idx = pick.choice(n, size=batch_size, replace=False)
        batch = augment_batch(
            base.features[idx],
            base.labels[idx],
            RngStream(cfg.seed, AUGMENT_STREAM_BASE + it),
            noise_sigma=cfg.noise_sigma,
            scale_range=cfg.scale_range,
        )
        teacher_acc = batch_accuracy_lambda(teacher, batch)
        if cfg.loss == "sacl":
            lam = teacher_acc if cfg.lam == "adaptive" else float(cfg.lam)
            sim = structural_similarity(teacher, batch, cfg.tau_hot)
            weights = pair_weights(sim, batch.labels, batch.homolog, lam)
        elif cfg.loss == "cl":
            lam = 0.0
            weights = cl_weights(batch.homolog)
        else:
            lam = 1.0
            weights = scl_weights(batch.labels)

        cache, features = encoder.forward(batch.views)
        emb = EmbeddingBatch.from_features(features, batch.labels, batch.homolog)
        report = sacl_loss(emb, weights, cfg.tau_cold)
        if not np.isfinite(report.total):
            raise TrainingError(f"loss became non-finite at iteration {it + 1}")
        grad_f = sacl_grad_features(emb, weights, cfg.tau_cold)
        grads_w, grads_b = encoder.backward(cache, grad_f)
        encoder.set_parameters(opt.step(encoder.parameters(), [*grads_w, *grads_b]))

        log.append(report.total, lam, teacher_acc)
        if callback is not None:
            callback(it + 1, encoder)
    return encoder, log


class ContrastiveEncoder(BaseEstimator, TransformerMixin):
    """Embedding transformer trained with a contrastive objective.

    ``fit(X, y)`` trains (or reuses) the frozen teacher and then the
    encoder on the labeled base classes; ``transform(X)`` maps features
    to unit-norm embeddings with the frozen encoder.

    Parameters mirror :class:`TrainConfig`; ``loss`` selects the
    objective ("sacl", "cl" or "scl"), ``lam`` is "adaptive" (teacher
    batch accuracy) or a fixed value in [0, 1], and ``teacher`` may be a
    pre-fitted :class:`~sacl.teacher.LinearSoftmaxClassifier`.
    """

    def __init__(
        self,
        hidden_dims=(64, 64),
        embed_dim=32,
        loss="sacl",
        iterations=1000,
        batch_size=128,
        learning_rate=1e-3,
        tau_hot=2.5,
        tau_cold=0.05,
        lam="adaptive",
        noise_sigma=0.1,
        scale_range=(0.8, 1.2),
        teacher=None,
        teacher_epochs=200,
        teacher_learning_rate=1e-3,
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.embed_dim = embed_dim
        self.loss = loss
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.tau_hot = tau_hot
        self.tau_cold = tau_cold
        self.lam = lam
        self.noise_sigma = noise_sigma
        self.scale_range = scale_range
        self.teacher = teacher
        self.teacher_epochs = teacher_epochs
        self.teacher_learning_rate = teacher_learning_rate
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_dims=tuple(self.hidden_dims),
            embed_dim=self.embed_dim,
            loss=self.loss,
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            tau_hot=self.tau_hot,
            tau_cold=self.tau_cold,
            lam=self.lam,
            noise_sigma=self.noise_sigma,
            scale_range=tuple(self.scale_range),
            seed=self.seed,
        )

    def fit(self, X, y, callback=None):
        X = as_matrix(X, "X")
        y = as_labels(y, "y")
        base = LabeledFeatureSet(features=X, labels=_densify(y))
        if self.teacher is not None:
            if not self.teacher.frozen:
                raise NotFittedError("supplied teacher must already be fitted")
            teacher = self.teacher
        else:
            teacher = train_teacher(
                base,
                epochs=self.teacher_epochs,
                learning_rate=self.teacher_learning_rate,
                rng=RngStream(self.seed, TEACHER_STREAM),
            )
        encoder, log = train_encoder(base, teacher, self._config(), callback=callback)
        self.teacher_ = teacher
        self.encoder_ = encoder
        self.training_log_ = log
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "encoder_"):
            raise NotFittedError("ContrastiveEncoder is not fitted; call fit first")
        return self.encoder_.embed(X)

    def raw_features(self, X) -> np.ndarray:
        """Encoder output before unit normalization."""
        if not hasattr(self, "encoder_"):
            raise NotFittedError("ContrastiveEncoder is not fitted; call fit first")
        _, features = self.encoder_.forward(X)
        return features


def _densify(y: np.ndarray) -> np.ndarray:
    classes = np.unique(y)
    return np.searchsorted(classes, y)
