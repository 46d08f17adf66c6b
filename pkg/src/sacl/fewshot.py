"""Episode sampling, prototype classification, and evaluation protocols.

The classifier-learning stage: build one prototype per class as the mean
of its support embeddings, predict by softmax over cosine similarities,
and (transductively) rectify each prototype once with the
posterior-weighted query embeddings before the final prediction.
Episode batches report mean accuracy with a 95% confidence interval.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .datasets import LabeledFeatureSet
from .exceptions import ConfigurationError, DegenerateInputError, ProtocolError, ShapeError
from .numerics import NORM_FLOOR, RngStream, mean_and_ci95, softmax_rows
from .validation import as_labels, as_matrix

#: stream-id offsets; keep disjoint from the trainer's allocations
EPISODE_STREAM_BASE = 1 << 32
GFSL_STREAM_BASE = 1 << 36

MODES = ("inductive", "transductive")


def _embed(encoder, X) -> np.ndarray:
    """Unit-norm embeddings from anything encoder-shaped."""
    if hasattr(encoder, "transform"):
        return encoder.transform(X)
    return encoder.embed(X)


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task with embedded support and query sets.

    Labels are episode-local (0..way-1); ``class_ids`` maps them back to
    the sampled dataset's dense labels.
    """

    way: int
    shot: int
    query_count: int
    support_embeddings: np.ndarray
    support_labels: np.ndarray
    query_embeddings: np.ndarray
    query_labels: np.ndarray
    class_ids: np.ndarray


@dataclass
class PrototypeSet:
    """Per-class prototypes, optionally carrying their rectified form."""

    prototypes: np.ndarray
    class_ids: np.ndarray
    shot_counts: np.ndarray
    rectified: np.ndarray | None = None

    def active(self) -> np.ndarray:
        """Rectified prototypes when present, the originals otherwise."""
        return self.prototypes if self.rectified is None else self.rectified


def compute_prototypes(support_embeddings, support_labels) -> PrototypeSet:
    """Arithmetic mean of support embeddings per class, not re-normalized."""
    E = as_matrix(support_embeddings, "support_embeddings")
    y = as_labels(support_labels, "support_labels")
    if E.shape[0] != y.shape[0]:
        raise ShapeError("support embeddings and labels disagree in length")
    classes = np.unique(y)
    protos = np.empty((classes.shape[0], E.shape[1]))
    counts = np.empty(classes.shape[0], dtype=np.int64)
    for k, c in enumerate(classes):
        rows = E[y == c]
        if rows.shape[0] == 0:
            raise ProtocolError(f"class {c} has no support samples")
        protos[k] = rows.mean(axis=0)
        counts[k] = rows.shape[0]
    return PrototypeSet(prototypes=protos, class_ids=classes, shot_counts=counts)


def predict_inductive(
    query_embeddings, protos: PrototypeSet
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax over cosine similarity to each (possibly rectified) prototype.

    Returns predicted class ids and the posterior matrix; argmax ties
    break toward the lowest index.
    """
    Q = as_matrix(query_embeddings, "query_embeddings")
    P = protos.active()
    qn = np.linalg.norm(Q, axis=1)
    pn = np.linalg.norm(P, axis=1)
    if np.any(qn < NORM_FLOOR) or np.any(pn < NORM_FLOOR):
        raise DegenerateInputError("zero-norm query or prototype")
    cos = (Q / qn[:, None]) @ (P / pn[:, None]).T
    posteriors = softmax_rows(cos, 1.0)
    labels = protos.class_ids[np.argmax(posteriors, axis=1)]
    return labels, posteriors


def rectify_prototypes(
    protos: PrototypeSet, query_embeddings, posteriors
) -> PrototypeSet:
    """One rectification round: fold posterior-weighted query embeddings
    into each prototype,

        p~_c = (K_c p_c + sum_x pi(c|x) e_x) / (K_c + sum_x pi(c|x)).
    """
    Q = as_matrix(query_embeddings, "query_embeddings")
    pi = as_matrix(posteriors, "posteriors")
    if pi.shape != (Q.shape[0], protos.prototypes.shape[0]):
        raise ProtocolError(
            f"posteriors {pi.shape} do not pair queries {Q.shape[0]} with "
            f"{protos.prototypes.shape[0]} prototypes"
        )
    mass = pi.sum(axis=0)
    k = protos.shot_counts.astype(np.float64)
    rectified = (k[:, None] * protos.prototypes + pi.T @ Q) / (k + mass)[:, None]
    return PrototypeSet(
        prototypes=protos.prototypes,
        class_ids=protos.class_ids,
        shot_counts=protos.shot_counts,
        rectified=rectified,
    )


def sample_episode(
    novel: LabeledFeatureSet,
    encoder,
    way: int,
    shot: int,
    query: int,
    rng: RngStream,
) -> Episode:
    """Draw classes and per-class samples without replacement, then embed
    support and query in a single encoder pass."""
    if way < 2 or shot < 1 or query < 1:
        raise ConfigurationError("need way >= 2, shot >= 1, query >= 1")
    if novel.class_count < way:
        raise ProtocolError(
            f"novel set has {novel.class_count} classes, episode needs {way}"
        )
    gen = rng.generator()
    chosen = gen.choice(novel.class_count, size=way, replace=False)
    support_rows, query_rows = [], []
    for c in chosen:
        idx = novel.indices_of(int(c))
        if idx.shape[0] < shot + query:
            raise ProtocolError(
                f"class {int(c)} has {idx.shape[0]} samples, episode needs {shot + query}"
            )
        pick = gen.choice(idx.shape[0], size=shot + query, replace=False)
        support_rows.append(idx[pick[:shot]])
        query_rows.append(idx[pick[shot:]])
    support_idx = np.concatenate(support_rows)
    query_idx = np.concatenate(query_rows)
    all_idx = np.concatenate([support_idx, query_idx])
    embedded = _embed(encoder, novel.features[all_idx])
    n_support = way * shot
    return Episode(
        way=way,
        shot=shot,
        query_count=query,
        support_embeddings=embedded[:n_support],
        support_labels=np.repeat(np.arange(way), shot),
        query_embeddings=embedded[n_support:],
        query_labels=np.repeat(np.arange(way), query),
        class_ids=np.asarray(chosen, dtype=np.int64),
    )


def episode_accuracy(episode: Episode, transductive: bool) -> float:
    protos = compute_prototypes(episode.support_embeddings, episode.support_labels)
    pred, posteriors = predict_inductive(episode.query_embeddings, protos)
    if transductive:
        protos = rectify_prototypes(protos, episode.query_embeddings, posteriors)
        pred, _ = predict_inductive(episode.query_embeddings, protos)
    return float(np.mean(pred == episode.query_labels))


@dataclass(frozen=True)
class EvaluationResult:
    mode: str
    mean_accuracy: float
    ci95: float
    episode_accuracies: np.ndarray


def evaluate(
    encoder,
    novel: LabeledFeatureSet,
    way: int = 5,
    shot: int = 1,
    query: int = 15,
    episodes: int = 1000,
    mode: str = "both",
    rng: RngStream = RngStream(0),
    threads: int = 1,
) -> list[EvaluationResult]:
    """Episode-batch evaluation with per-episode random streams.

    Episode i always uses stream ``rng.stream + EPISODE_STREAM_BASE + i``,
    so results are identical for any thread count and aggregation happens
    in episode order.
    """
    if episodes < 2:
        raise ProtocolError(f"need >= 2 episodes for a confidence interval, got {episodes}")
    wanted = MODES if mode == "both" else (mode,)
    for m in wanted:
        if m not in MODES:
            raise ConfigurationError(f"unknown mode {m!r}")

    def run_episode(i: int) -> tuple[float, float]:
        ep = sample_episode(
            novel, encoder, way, shot, query, rng.substream(EPISODE_STREAM_BASE + i)
        )
        ind = episode_accuracy(ep, transductive=False) if "inductive" in wanted else np.nan
        tra = episode_accuracy(ep, transductive=True) if "transductive" in wanted else np.nan
        return ind, tra

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            rows = list(pool.map(run_episode, range(int(episodes))))
    else:
        rows = [run_episode(i) for i in range(int(episodes))]

    results = []
    for m, column in zip(MODES, np.array(rows).T):
        if m not in wanted:
            continue
        mean, halfwidth = mean_and_ci95(column)
        results.append(
            EvaluationResult(mode=m, mean_accuracy=mean, ci95=halfwidth,
                             episode_accuracies=column)
        )
    return results


@dataclass(frozen=True)
class GfslReport:
    """Joint-label-space accuracies over base and novel test samples.

    ``acc_joint`` is the sample-count-weighted mean of the per-domain
    accuracies; ``acc_harmonic`` is their harmonic mean (0 when either
    domain is at 0). Both aggregates are reported because they answer
    different questions (overall hit rate vs balance across domains).
    """

    acc_base: float
    acc_novel: float
    acc_joint: float
    acc_harmonic: float
    base_class_count: int
    novel_class_count: int

    @classmethod
    def from_accuracies(
        cls,
        acc_base: float,
        acc_novel: float,
        base_samples: int,
        novel_samples: int,
        base_class_count: int,
        novel_class_count: int,
    ) -> "GfslReport":
        total = base_samples + novel_samples
        if total <= 0:
            raise ProtocolError("need at least one test sample")
        joint = (base_samples * acc_base + novel_samples * acc_novel) / total
        if acc_base <= 0.0 or acc_novel <= 0.0:
            harmonic = 0.0
        else:
            harmonic = 2.0 * acc_base * acc_novel / (acc_base + acc_novel)
        return cls(
            acc_base=float(acc_base),
            acc_novel=float(acc_novel),
            acc_joint=float(joint),
            acc_harmonic=float(harmonic),
            base_class_count=int(base_class_count),
            novel_class_count=int(novel_class_count),
        )


def gfsl_evaluate(
    encoder,
    base_test: LabeledFeatureSet,
    novel_test: LabeledFeatureSet,
    protos: PrototypeSet,
) -> GfslReport:
    """Classify base and novel test samples over the joint label space."""
    base_ids = set(int(c) for c in base_test.class_ids)
    novel_ids = set(int(c) for c in novel_test.class_ids)
    if base_ids & novel_ids:
        raise ProtocolError(f"base and novel class ids overlap: {sorted(base_ids & novel_ids)}")
    missing = (base_ids | novel_ids) - set(int(c) for c in protos.class_ids)
    if missing:
        raise ProtocolError(f"no prototype for classes {sorted(missing)}")

    def domain_accuracy(data: LabeledFeatureSet) -> float:
        pred, _ = predict_inductive(_embed(encoder, data.features), protos)
        truth = data.class_ids[data.labels]
        return float(np.mean(pred == truth))

    acc_b = domain_accuracy(base_test)
    acc_n = domain_accuracy(novel_test)
    return GfslReport.from_accuracies(
        acc_b,
        acc_n,
        base_samples=len(base_test),
        novel_samples=len(novel_test),
        base_class_count=base_test.class_count,
        novel_class_count=novel_test.class_count,
    )


def joint_prototypes(
    encoder,
    base: LabeledFeatureSet,
    novel: LabeledFeatureSet,
    shot: int,
    rng: RngStream,
) -> tuple[PrototypeSet, np.ndarray]:
    """Prototypes over the joint space: all base samples per base class,
    a K-shot support draw per novel class.

    Returns the prototype set (class ids are the original ids) and the
    novel-set row indices used as support, so callers can exclude them
    from the test split.
    """
    base_emb = _embed(encoder, base.features)
    gen = rng.generator()
    support_rows = []
    for c in range(novel.class_count):
        idx = novel.indices_of(c)
        if idx.shape[0] < shot:
            raise ProtocolError(f"novel class {c} has {idx.shape[0]} samples, need {shot}")
        pick = gen.choice(idx.shape[0], size=shot, replace=False)
        support_rows.append(idx[pick])
    support_idx = np.concatenate(support_rows)
    novel_emb = _embed(encoder, novel.features[support_idx])

    embeddings = np.vstack([base_emb, novel_emb])
    labels = np.concatenate(
        [base.class_ids[base.labels], novel.class_ids[novel.labels[support_idx]]]
    )
    protos = compute_prototypes(embeddings, labels)
    return protos, support_idx


class PrototypeClassifier(BaseEstimator, ClassifierMixin):
    """Nearest-prototype classifier over embeddings.

    ``fit`` stores per-class mean prototypes; ``predict`` scores queries
    by softmax over cosine similarity. With ``transductive=True`` the
    whole query set passed to ``predict``/``predict_proba`` first
    rectifies the prototypes once.
    """

    def __init__(self, transductive=False):
        self.transductive = transductive

    def fit(self, X, y):
        protos = compute_prototypes(X, y)
        self.prototypes_ = protos
        self.classes_ = protos.class_ids
        self.n_features_in_ = protos.prototypes.shape[1]
        return self

    def _protos_for(self, X) -> PrototypeSet:
        if not hasattr(self, "prototypes_"):
            raise NotFittedError("PrototypeClassifier is not fitted; call fit first")
        if not self.transductive:
            return self.prototypes_
        _, posteriors = predict_inductive(X, self.prototypes_)
        return rectify_prototypes(self.prototypes_, X, posteriors)

    def predict(self, X) -> np.ndarray:
        labels, _ = predict_inductive(X, self._protos_for(X))
        return labels

    def predict_proba(self, X) -> np.ndarray:
        _, posteriors = predict_inductive(X, self._protos_for(X))
        return posteriors
