"""Monte Carlo checks of the asymptotic loss decomposition.

For an anchor in a mixture of directional clusters on the unit sphere,
the shifted per-anchor loss L_i - log n should approach

    alignment + uniformity
      = -E_pos <e_i, e_a>/tau  +  log E_all exp(<e_i, e_a>/tau)

as the sample grows, when the pair weights come from a consistent
labeler (same-class weight 1 - eps, cross-class eps, with n_k * eps
vanishing). This module samples such mixtures, evaluates both sides on
the same draw, and tracks how the decomposition error shrinks with n.

The study reports the fitted slope of log(error) against n and asserts
only monotone decrease; a finite-sample experiment cannot certify the
exponential rate constant itself.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ProtocolError
from .numerics import RngStream, logsumexp
from .validation import as_labels, as_matrix

THEORY_STREAM_BASE = 1 << 33
_REP_STRIDE = 1 << 20


@dataclass(frozen=True)
class SphereMixture:
    """Labeled unit-norm embeddings drawn from directional class clusters."""

    embeddings: np.ndarray
    labels: np.ndarray
    proportions: np.ndarray
    concentration: float

    def __post_init__(self):
        emb = as_matrix(self.embeddings, "embeddings")
        labels = as_labels(self.labels, "labels")
        props = np.asarray(self.proportions, dtype=np.float64)
        if labels.shape[0] != emb.shape[0]:
            raise ConfigurationError("labels and embeddings disagree in length")
        if np.any(props <= 0) or abs(props.sum() - 1.0) > 1e-9:
            raise ConfigurationError("proportions must be positive and sum to 1")
        norms = np.linalg.norm(emb, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ConfigurationError("embeddings must be unit-norm")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "proportions", props)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]


def sample_sphere_mixture(
    class_count: int,
    proportions,
    dim: int,
    concentration: float,
    size: int,
    rng: RngStream,
) -> SphereMixture:
    """Multinomial class counts, then per class normalize(mean + g/concentration).

    Class means are themselves uniform random directions from the same
    stream; infinite concentration collapses every sample onto its mean.
    """
    props = np.asarray(proportions, dtype=np.float64)
    if props.shape != (class_count,) or np.any(props <= 0) or abs(props.sum() - 1.0) > 1e-9:
        raise ConfigurationError("proportions must be positive, one per class, summing to 1")
    if size < class_count:
        raise ConfigurationError(f"need size >= class_count, got {size} < {class_count}")
    if concentration <= 0:
        raise ConfigurationError("concentration must be positive")
    gen = rng.generator()
    means = gen.normal(size=(class_count, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    counts = gen.multinomial(size, props)
    blocks, labels = [], []
    for k in range(class_count):
        noise = gen.normal(size=(counts[k], dim))
        raw = means[k] + noise / concentration  # infinite concentration: exact means
        blocks.append(raw / np.linalg.norm(raw, axis=1, keepdims=True))
        labels.append(np.full(counts[k], k, dtype=np.int64))
    return SphereMixture(
        embeddings=np.vstack(blocks),
        labels=np.concatenate(labels),
        proportions=props,
        concentration=float(concentration),
    )


def consistency_weights(
    labels, anchor: int, n_k: int, delta: float = 1.0, scale: float = 1.0
) -> np.ndarray:
    """Pair weights of a consistent labeler: 1 - eps on the anchor's class,
    eps across classes, with eps = scale / n_k^(1 + delta).

    The anchor's own entry is zero. The deviation eps must stay below 1,
    and n_k * eps -> 0 as n_k grows since delta > 0.
    """
    labels = as_labels(labels, "labels")
    if delta <= 0 or scale <= 0:
        raise ConfigurationError("delta and scale must be positive")
    if n_k < 1:
        raise ConfigurationError("n_k must be >= 1")
    eps = scale / float(n_k) ** (1.0 + delta)
    if eps >= 1.0:
        raise ConfigurationError(
            f"deviation {eps:.3g} >= 1; increase n_k, delta, or lower scale"
        )
    if not (0 <= anchor < labels.shape[0]):
        raise ProtocolError(f"anchor {anchor} outside {labels.shape[0]} samples")
    w = np.where(labels == labels[anchor], 1.0 - eps, eps)
    w[anchor] = 0.0
    return w


@dataclass(frozen=True)
class TheoremEstimate:
    """Both sides of the decomposition at one anchor, and their gap."""

    anchor: int
    lhs: float
    alignment: float
    uniformity: float

    @property
    def error(self) -> float:
        return abs(self.lhs - (self.alignment + self.uniformity))


def alignment_uniformity(
    mixture: SphereMixture,
    anchor: int,
    tau: float,
    delta: float = 1.0,
    scale: float = 1.0,
) -> TheoremEstimate:
    """Evaluate L_i - log n against alignment + uniformity on one draw.

    L_i is the weighted per-anchor loss under consistency weights;
    alignment averages scaled inner products over the anchor's same-class
    partners, uniformity is the log of the mean exponentiated scaled
    inner product over all other samples.
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    n = mixture.size
    if not (0 <= anchor < n):
        raise ProtocolError(f"anchor {anchor} outside {n} samples")
    same = mixture.labels == mixture.labels[anchor]
    n_k = int(same.sum())
    if n_k < 2:
        raise ProtocolError(f"anchor {anchor}'s class is a singleton; no positives")

    sims = mixture.embeddings @ mixture.embeddings[anchor] / tau
    others = np.ones(n, dtype=bool)
    others[anchor] = False
    positives = same & others

    alignment = -float(sims[positives].mean())
    uniformity = float(logsumexp(sims[others]) - math.log(n - 1))

    w = consistency_weights(mixture.labels, anchor, n_k, delta=delta, scale=scale)
    w_norm = w / w.sum()
    log_probs = sims - logsumexp(sims[others])
    loss_i = -float(np.dot(w_norm[others], log_probs[others]))
    return TheoremEstimate(
        anchor=anchor,
        lhs=loss_i - math.log(n),
        alignment=alignment,
        uniformity=uniformity,
    )


@dataclass(frozen=True)
class ConvergenceRecord:
    size: int
    rep: int
    estimate: TheoremEstimate


@dataclass(frozen=True)
class ConvergenceStudy:
    records: list[ConvergenceRecord]
    sizes: list[int]
    median_errors: list[float]
    iqrs: list[float]
    monotone_decreasing: bool
    log_error_slope: float


def convergence_study(
    sizes,
    reps: int,
    tau: float,
    class_count: int = 5,
    dim: int = 16,
    concentration: float = 4.0,
    rng: RngStream = RngStream(0),
    delta: float = 1.0,
    scale: float = 1.0,
    threads: int = 1,
) -> ConvergenceStudy:
    """Median decomposition error per sample size, over fresh mixtures.

    Each (size, rep) cell draws its own mixture and a random anchor from
    a dedicated stream, so cells are independent, reproducible, and safe
    to run in parallel; aggregation stays in (size, rep) order.
    """
    sizes = [int(s) for s in sizes]
    if sorted(sizes) != sizes or len(sizes) < 2:
        raise ConfigurationError("sizes must be an increasing list of at least 2 entries")
    if not (5 <= reps < _REP_STRIDE // 2):
        raise ConfigurationError(f"need 5 <= reps < {_REP_STRIDE // 2}, got {reps}")
    props = np.full(class_count, 1.0 / class_count)

    def run_cell(s_idx: int, n: int, rep: int) -> TheoremEstimate:
        # two stream ids per (size, rep) cell: mixture draw, anchor draw
        cell = THEORY_STREAM_BASE + s_idx * _REP_STRIDE + 2 * rep
        mixture = sample_sphere_mixture(
            class_count, props, dim, concentration, n, rng.substream(cell)
        )
        anchor = int(rng.substream(cell + 1).generator().integers(0, n))
        return alignment_uniformity(mixture, anchor, tau, delta=delta, scale=scale)

    cells = [(s_idx, n, rep) for s_idx, n in enumerate(sizes) for rep in range(int(reps))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            estimates = list(pool.map(lambda c: run_cell(*c), cells))
    else:
        estimates = [run_cell(*c) for c in cells]

    records = [ConvergenceRecord(size=n, rep=rep, estimate=est)
               for (_, n, rep), est in zip(cells, estimates)]
    medians, iqrs = [], []
    for n in sizes:
        errors = [r.estimate.error for r in records if r.size == n]
        medians.append(float(np.median(errors)))
        iqrs.append(float(np.percentile(errors, 75) - np.percentile(errors, 25)))
    monotone = all(b < a for a, b in zip(medians, medians[1:]))
    slope = float(np.polyfit(np.asarray(sizes, dtype=float), np.log(medians), 1)[0])
    return ConvergenceStudy(
        records=records,
        sizes=sizes,
        median_errors=medians,
        iqrs=iqrs,
        monotone_decreasing=monotone,
        log_error_slope=slope,
    )
