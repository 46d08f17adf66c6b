"""Batch gradient verification against central finite differences.

Sweeps batch size, embedding dimension, mixing weight, and temperature;
for every sampled configuration it compares the analytic embedding-level
and feature-level gradients with central differences of the loss and
records the normalized maximum deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .losses import EmbeddingBatch, pair_weights, sacl_grad_embeddings, sacl_grad_features, sacl_loss
from .numerics import RngStream
from .teacher import SimilarityMatrix


@dataclass(frozen=True)
class GradCheckRow:
    config_id: int
    views: int
    dim: int
    lam: float
    tau_cold: float
    level: str
    rel_error: float


@dataclass(frozen=True)
class GradCheckResult:
    rows: list[GradCheckRow]
    max_rel_error: float

    @property
    def config_count(self) -> int:
        return len(self.rows) // 2


def _relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(reference))), 1e-12)
    return float(np.max(np.abs(analytic - reference))) / scale


def _fd_grad(loss_fn, X: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(X)
    flat_in = X.reshape(-1)
    flat_out = grad.reshape(-1)
    for k in range(flat_in.size):
        original = flat_in[k]
        flat_in[k] = original + step
        hi = loss_fn()
        flat_in[k] = original - step
        lo = loss_fn()
        flat_in[k] = original
        flat_out[k] = (hi - lo) / (2.0 * step)
    return grad


def gradient_check(
    view_counts=(8, 32),
    dims=(4, 16),
    lams=(0.0, 0.3, 1.0),
    taus=(0.05, 0.5),
    reps: int = 5,
    step: float = 1e-6,
    seed: int = 0,
    classes: int = 3,
) -> GradCheckResult:
    """Run the full sweep; ``reps`` random draws per parameter combination."""
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    rows: list[GradCheckRow] = []
    config_id = 0
    for views in view_counts:
        if views % 2 or views < 4:
            raise ConfigurationError(f"view counts must be even and >= 4, got {views}")
        for dim in dims:
            for lam in lams:
                for tau in taus:
                    for rep in range(int(reps)):
                        gen = RngStream(seed, config_id).generator()
                        labels = np.repeat(gen.integers(0, classes, size=views // 2), 2)
                        homolog = np.arange(views)
                        homolog[0::2] += 1
                        homolog[1::2] -= 1
                        feats = gen.normal(0.0, 1.5, size=(views, dim))
                        batch = EmbeddingBatch.from_features(feats, labels, homolog)
                        sim_rows = gen.random((views, classes)) + 0.05
                        sim_rows /= sim_rows.sum(axis=1, keepdims=True)
                        sim = SimilarityMatrix(rows=sim_rows, tau_hot=2.5,
                                               class_ids=np.arange(classes))
                        weights = pair_weights(sim, labels, homolog, lam)

                        grad_e = sacl_grad_embeddings(batch, weights, tau)
                        e_work = batch.e.copy()
                        probe_e = EmbeddingBatch(f=batch.f, e=e_work,
                                                 labels=labels, homolog=homolog)
                        fd_e = _fd_grad(
                            lambda: sacl_loss(probe_e, weights, tau).total, e_work, step
                        )
                        rows.append(GradCheckRow(config_id, views, dim, lam, tau,
                                                 "embedding",
                                                 _relative_error(grad_e, fd_e)))

                        grad_f = sacl_grad_features(batch, weights, tau)
                        f_work = batch.f.copy()

                        def feature_loss():
                            probe = EmbeddingBatch.from_features(f_work, labels, homolog)
                            return sacl_loss(probe, weights, tau).total

                        fd_f = _fd_grad(feature_loss, f_work, step)
                        rows.append(GradCheckRow(config_id, views, dim, lam, tau,
                                                 "feature",
                                                 _relative_error(grad_f, fd_f)))
                        config_id += 1
    return GradCheckResult(rows=rows, max_rel_error=max(r.rel_error for r in rows))
