"""Structure-aware contrastive loss, its exact gradients, and variants.

For a batch of 2N views with homolog map h, each anchor i scores every
other view j with a log-softmax over scaled inner products,

    L_ij = log softmax_{j' != i}( <e_i, e_j'> / tau_cold )  evaluated at j,

and pays the weighted negative sum  L_i = -sum_j w~_ij L_ij  where the
weights w~ are the anchor-normalized pair weights: 1.0 for the homolog,
lambda times the teacher's posterior for the anchor's class at view j
otherwise. Self-supervised (homolog-only) and supervised (same-class)
contrastive losses fall out as the lambda -> 0 and one-hot-teacher
special cases and are exposed directly.

Gradients are analytic. With F the row-softmax of the masked similarity
logits and W~ the normalized weights, the derivative of the total loss
with respect to the embedding matrix is (D + D^T) E / tau with
D = F - W~; the feature-level gradient chains each row through the
normalization Jacobian (I - e e^T)/||f||.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConfigurationError,
    DegenerateInputError,
    NumericError,
    ProtocolError,
    ShapeError,
)
from .numerics import NORM_FLOOR, l2_normalize_rows
from .teacher import SimilarityMatrix
from .validation import as_labels, as_matrix, check_in_unit_interval, check_positive


@dataclass
class EmbeddingBatch:
    """Raw features with their unit-normalized embeddings and pair structure.

    Build through :meth:`from_features`, which validates and normalizes;
    the plain constructor exists for numerical experiments that need to
    perturb ``e`` directly.
    """

    f: np.ndarray
    e: np.ndarray
    labels: np.ndarray
    homolog: np.ndarray

    @classmethod
    def from_features(cls, features, labels, homolog) -> "EmbeddingBatch":
        f = as_matrix(features, "features")
        labels = as_labels(labels, "labels")
        homolog = as_labels(homolog, "homolog")
        n = f.shape[0]
        if labels.shape[0] != n or homolog.shape[0] != n:
            raise ShapeError("features, labels and homolog must agree in length")
        idx = np.arange(n)
        if np.any(homolog == idx) or np.any(homolog[homolog] != idx):
            raise ConfigurationError("homolog map must be a fixed-point-free involution")
        if np.any(labels[homolog] != labels):
            raise ConfigurationError("homologous views must share a label")
        return cls(f=f, e=l2_normalize_rows(f), labels=labels, homolog=homolog)

    def __len__(self) -> int:
        return self.e.shape[0]


@dataclass
class PairWeights:
    """Raw pair weights and their per-anchor normalized form.

    ``raw`` has a zero diagonal; ``normalized`` divides each row by its
    off-diagonal sum, so every anchor's candidate weights sum to 1.
    """

    raw: np.ndarray
    normalized: np.ndarray
    lam: float | None = None

    @classmethod
    def from_raw(cls, raw: np.ndarray, lam: float | None = None) -> "PairWeights":
        raw = as_matrix(raw, "raw").copy()
        n = raw.shape[0]
        if raw.shape[1] != n:
            raise ShapeError(f"pair weights must be square, got {raw.shape}")
        np.fill_diagonal(raw, 0.0)
        if np.any(raw < 0):
            raise ConfigurationError("pair weights must be nonnegative")
        sums = raw.sum(axis=1)
        if np.any(sums <= 0):
            bad = int(np.argmin(sums))
            raise ConfigurationError(f"anchor {bad} has no positive candidate weight")
        return cls(raw=raw, normalized=raw / sums[:, None], lam=lam)


def pair_weights(
    sim: SimilarityMatrix, labels, homolog, lam: float
) -> PairWeights:
    """Teacher-taught pair weights: 1.0 for the homolog, otherwise lambda
    times the teacher posterior that candidate j belongs to the anchor's
    class."""
    lam = check_in_unit_interval(lam, "lam")
    labels = as_labels(labels, "labels")
    homolog = as_labels(homolog, "homolog")
    n = labels.shape[0]
    if sim.rows.shape[0] != n or homolog.shape[0] != n:
        raise ShapeError("similarity rows, labels and homolog must agree in length")
    cols = np.array([sim.column_of(int(l)) for l in labels])
    # raw[i, j] = lam * P(class(i) | view j)
    raw = lam * sim.rows[:, cols].T
    np.fill_diagonal(raw, 0.0)
    raw[np.arange(n), homolog] = 1.0
    return PairWeights.from_raw(raw, lam=lam)


def cl_weights(homolog) -> PairWeights:
    """Homolog-only weights: the self-supervised special case."""
    homolog = as_labels(homolog, "homolog")
    n = homolog.shape[0]
    raw = np.zeros((n, n))
    raw[np.arange(n), homolog] = 1.0
    return PairWeights.from_raw(raw, lam=0.0)


def scl_weights(labels) -> PairWeights:
    """Binary same-class weights: the supervised special case."""
    labels = as_labels(labels, "labels")
    raw = (labels[:, None] == labels[None, :]).astype(np.float64)
    np.fill_diagonal(raw, 0.0)
    return PairWeights.from_raw(raw, lam=1.0)


@dataclass
class LossReport:
    """Total loss, per-anchor terms, and (optionally) the per-pair matrix."""

    total: float
    per_anchor: np.ndarray
    per_pair: np.ndarray | None = None


def _check_loss_inputs(batch: EmbeddingBatch, weights: PairWeights, tau_cold: float):
    tau = check_positive(tau_cold, "tau_cold")
    n = len(batch)
    if n < 2:
        raise ProtocolError(f"contrastive loss needs a batch of >= 2 views, got {n}")
    if not np.all(np.isfinite(batch.e)):
        raise NumericError("embeddings contain non-finite entries")
    if weights.normalized.shape != (n, n):
        raise ShapeError(
            f"weights are {weights.normalized.shape}, batch has {n} views"
        )
    return tau


def _masked_log_softmax(E: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row log-softmax and softmax of <e_i, e_j>/tau over j != i.

    Diagonals come back as 0 in the log matrix and 0 in the softmax, so
    they drop out of weighted sums.
    """
    n = E.shape[0]
    logits = (E @ E.T) / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - row_max)
    denom = expd.sum(axis=1, keepdims=True)
    log_probs = logits - (np.log(denom) + row_max)
    probs = expd / denom
    np.fill_diagonal(log_probs, 0.0)
    return log_probs, probs


def sacl_loss(
    batch: EmbeddingBatch,
    weights: PairWeights,
    tau_cold: float,
    keep_pair_matrix: bool = False,
) -> LossReport:
    """Weighted contrastive loss over all anchors; always >= 0."""
    tau = _check_loss_inputs(batch, weights, tau_cold)
    log_probs, _ = _masked_log_softmax(batch.e, tau)
    per_anchor = -(weights.normalized * log_probs).sum(axis=1)
    return LossReport(
        total=float(per_anchor.sum()),
        per_anchor=per_anchor,
        per_pair=log_probs if keep_pair_matrix else None,
    )


def sacl_grad_embeddings(
    batch: EmbeddingBatch, weights: PairWeights, tau_cold: float
) -> np.ndarray:
    """Exact gradient of the total loss w.r.t. every embedding row."""
    tau = _check_loss_inputs(batch, weights, tau_cold)
    _, probs = _masked_log_softmax(batch.e, tau)
    diff = probs - weights.normalized
    return (diff + diff.T) @ batch.e / tau


def sacl_anchor_grad(
    batch: EmbeddingBatch, weights: PairWeights, tau_cold: float, anchor: int
) -> np.ndarray:
    """Gradient of the single anchor term L_i w.r.t. its own embedding.

    This is the anchor-only derivative (candidate appearances of e_i in
    other anchors' terms excluded); kept as the verified special case of
    the closed-form derivation.
    """
    tau = _check_loss_inputs(batch, weights, tau_cold)
    n = len(batch)
    if not (0 <= anchor < n):
        raise ProtocolError(f"anchor {anchor} outside batch of {n}")
    _, probs = _masked_log_softmax(batch.e, tau)
    diff = probs[anchor] - weights.normalized[anchor]
    return diff @ batch.e / tau


def sacl_grad_features(
    batch: EmbeddingBatch, weights: PairWeights, tau_cold: float
) -> np.ndarray:
    """Gradient w.r.t. raw features: each embedding-gradient row chained
    through the normalization Jacobian (I - e e^T)/||f||."""
    grad_e = sacl_grad_embeddings(batch, weights, tau_cold)
    norms = np.linalg.norm(batch.f, axis=1)
    if np.any(norms < NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"feature row {bad} has near-zero norm")
    radial = np.sum(grad_e * batch.e, axis=1, keepdims=True)
    return (grad_e - radial * batch.e) / norms[:, None]


def cl_loss(batch: EmbeddingBatch, tau_cold: float, keep_pair_matrix: bool = False) -> LossReport:
    """Self-supervised contrastive loss: only the homolog counts as positive."""
    return sacl_loss(batch, cl_weights(batch.homolog), tau_cold, keep_pair_matrix)


def scl_loss(batch: EmbeddingBatch, tau_cold: float, keep_pair_matrix: bool = False) -> LossReport:
    """Supervised contrastive loss: every same-class view counts equally."""
    return sacl_loss(batch, scl_weights(batch.labels), tau_cold, keep_pair_matrix)


@dataclass(frozen=True)
class HardPositiveDiagnostic:
    """One anchor's hard-positive amplification record."""

    anchor: int
    k: float
    positive_count: int
    negative_count: int
    magnitude: float


def hard_positive_diagnostic(
    batch: EmbeddingBatch, anchor: int, k: float, tau: float
) -> HardPositiveDiagnostic:
    """The magnitude together with the set sizes it was computed from."""
    magnitude = hard_positive_magnitude(batch, anchor, k, tau)
    same = batch.labels == batch.labels[anchor]
    same[anchor] = False
    return HardPositiveDiagnostic(
        anchor=anchor,
        k=float(k),
        positive_count=int(same.sum()),
        negative_count=int((batch.labels != batch.labels[anchor]).sum()),
        magnitude=magnitude,
    )


def hard_positive_magnitude(
    batch: EmbeddingBatch, anchor: int, k: float, tau: float
) -> float:
    """Scalar tracking how strongly hard positives steer the update.

    With P the anchor's same-class candidates and N the rest,

        k * sum_{a in P} exp(<e_i,e_a>/tau)
          + k * sum_{a in N} exp(<e_i,e_a>/tau)
          - (|P| k + |N|).

    Under all-positive inner products this grows with k and with 1/tau:
    a stronger teacher multiple and a colder temperature both amplify
    the hard-positive contribution.
    """
    tau = check_positive(tau, "tau")
    if k < 1.0:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    n = len(batch)
    if not (0 <= anchor < n):
        raise ProtocolError(f"anchor {anchor} outside batch of {n}")
    same = batch.labels == batch.labels[anchor]
    same[anchor] = False
    other = ~(batch.labels == batch.labels[anchor])
    p_count = int(same.sum())
    n_count = int(other.sum())
    if p_count == 0 or n_count == 0:
        raise ProtocolError(
            f"anchor {anchor} needs nonempty positive and negative sets "
            f"(got {p_count} positives, {n_count} negatives)"
        )
    sims = batch.e @ batch.e[anchor] / tau
    return float(
        k * np.exp(sims[same]).sum()
        + k * np.exp(sims[other]).sum()
        - (p_count * k + n_count)
    )
