"""Synthetic confusable-cluster data, CSV ingestion, splits, and augmentation.

The synthetic generator stands in for image datasets at desk scale: each
class is an isotropic Gaussian cloud around a unit-norm mean direction,
and selected class pairs are placed at a small angular separation so a
nearest-mean classifier confuses them — the "visually similar,
semantically different" situation the loss is designed to handle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ParseError
from .numerics import RngStream
from .validation import as_labels, as_matrix


@dataclass(frozen=True)
class LabeledFeatureSet:
    """Feature vectors with dense integer class labels.

    ``class_ids[c]`` maps the dense label ``c`` back to the class id in
    the originating set, so splits stay comparable (identity by default).
    """

    features: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        features = as_matrix(self.features, "features")
        labels = as_labels(self.labels, "labels")
        if labels.shape[0] != features.shape[0]:
            raise ConfigurationError(
                f"{labels.shape[0]} labels for {features.shape[0]} samples"
            )
        if labels.shape[0] == 0:
            raise ConfigurationError("feature set must contain at least one sample")
        count = int(labels.max()) + 1
        present = np.unique(labels)
        if labels.min() < 0 or present.shape[0] != count:
            raise ConfigurationError(
                "labels must be dense integers 0..C-1 with every class present"
            )
        class_ids = self.class_ids
        if class_ids is None:
            class_ids = np.arange(count, dtype=np.int64)
        class_ids = as_labels(class_ids, "class_ids")
        if class_ids.shape[0] != count:
            raise ConfigurationError("class_ids must have one entry per class")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_ids", class_ids)
        self.features.setflags(write=False)
        self.labels.setflags(write=False)
        self.class_ids.setflags(write=False)

    @property
    def class_count(self) -> int:
        return self.class_ids.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def indices_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


@dataclass(frozen=True)
class AugmentedBatch:
    """2N augmented views with labels and the homolog map h.

    Views 2i and 2i+1 derive from source sample i, so h swaps them:
    h(h(i)) = i, h(i) != i, and labels are preserved across homologs.
    """

    views: np.ndarray
    labels: np.ndarray
    homolog: np.ndarray

    def __post_init__(self):
        views = as_matrix(self.views, "views")
        labels = as_labels(self.labels, "labels")
        homolog = as_labels(self.homolog, "homolog")
        n = views.shape[0]
        if labels.shape[0] != n or homolog.shape[0] != n:
            raise ConfigurationError("views, labels and homolog must agree in length")
        idx = np.arange(n)
        if np.any(homolog == idx) or np.any(homolog[homolog] != idx):
            raise ConfigurationError("homolog map must be a fixed-point-free involution")
        if np.any(labels[homolog] != labels):
            raise ConfigurationError("homologous views must share a label")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "homolog", homolog)

    def __len__(self) -> int:
        return self.views.shape[0]


@dataclass(frozen=True)
class ClusterSpec:
    """Geometry of the synthetic class clusters.

    ``confusable_pairs`` records (class_a, class_b, angle) triples; the
    means already realize those separations, the record is kept so
    downstream code can tell which pairs were planted.
    """

    means: np.ndarray
    stddev: float
    confusable_pairs: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        means = as_matrix(self.means, "means")
        if self.stddev <= 0 or not math.isfinite(self.stddev):
            raise ConfigurationError(f"stddev must be positive, got {self.stddev!r}")
        norms = np.linalg.norm(means, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ConfigurationError("class means must be unit-norm")
        pairs = tuple((int(a), int(b), float(t)) for a, b, t in self.confusable_pairs)
        for a, b, theta in pairs:
            if not (0.0 < theta <= math.pi):
                raise ConfigurationError(f"pair angle must lie in (0, pi], got {theta}")
            if a == b or min(a, b) < 0 or max(a, b) >= means.shape[0]:
                raise ConfigurationError(f"invalid confusable pair ({a}, {b})")
            actual = math.acos(float(np.clip(np.dot(means[a], means[b]), -1.0, 1.0)))
            if abs(actual - theta) > 1e-6:
                raise ConfigurationError(
                    f"means of pair ({a}, {b}) sit at {actual:.6f} rad, expected {theta:.6f}"
                )
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "confusable_pairs", pairs)
        self.means.setflags(write=False)

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def random(
        cls,
        dim: int,
        class_count: int,
        stddev: float,
        rng: RngStream,
        confusable: tuple[tuple[int, int, float], ...] = (),
    ) -> "ClusterSpec":
        """Draw unit-norm class means, then re-place each pair's second
        class at the requested angle from the first."""
        if class_count < 1 or dim < 2:
            raise ConfigurationError("need class_count >= 1 and dim >= 2")
        gen = rng.generator()
        means = gen.normal(size=(class_count, dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        for a, b, theta in confusable:
            if not (0 <= a < class_count and 0 <= b < class_count) or a == b:
                raise ConfigurationError(f"invalid confusable pair ({a}, {b})")
            # rotate mean a by theta toward a random orthogonal direction
            anchor = means[a]
            raw = gen.normal(size=dim)
            ortho = raw - np.dot(raw, anchor) * anchor
            ortho /= np.linalg.norm(ortho)
            means[b] = math.cos(theta) * anchor + math.sin(theta) * ortho
        return cls(means=means, stddev=stddev, confusable_pairs=tuple(confusable))


def generate_clusters(spec: ClusterSpec, per_class: int, rng: RngStream) -> LabeledFeatureSet:
    """Sample ``per_class`` points per class as mean + isotropic Gaussian noise.

    Deterministic for a fixed stream: classes are filled in label order.
    """
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    gen = rng.generator()
    blocks = []
    for c in range(spec.class_count):
        noise = gen.normal(0.0, spec.stddev, size=(per_class, spec.dim))
        blocks.append(spec.means[c] + noise)
    features = np.vstack(blocks)
    labels = np.repeat(np.arange(spec.class_count, dtype=np.int64), per_class)
    return LabeledFeatureSet(features=features, labels=labels)


def augment_batch(
    X: np.ndarray,
    labels: np.ndarray,
    rng: RngStream,
    noise_sigma: float = 0.1,
    scale_range: tuple[float, float] = (0.8, 1.2),
) -> AugmentedBatch:
    """Produce two homologous views per source row: s*x + eps with
    independent s ~ U[lo, hi] and eps ~ N(0, noise_sigma^2 I)."""
    X = as_matrix(X, "X")
    labels = as_labels(labels, "labels")
    lo, hi = float(scale_range[0]), float(scale_range[1])
    if not (0.0 < lo <= hi):
        raise ConfigurationError(f"scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
    if noise_sigma < 0:
        raise ConfigurationError(f"noise_sigma must be >= 0, got {noise_sigma}")
    n, dim = X.shape
    gen = rng.generator()
    scales = gen.uniform(lo, hi, size=2 * n)
    noise = gen.normal(0.0, 1.0, size=(2 * n, dim)) * noise_sigma
    sources = np.repeat(X, 2, axis=0)
    views = scales[:, None] * sources + noise
    out_labels = np.repeat(labels, 2)
    homolog = np.arange(2 * n, dtype=np.int64)
    homolog[0::2] += 1
    homolog[1::2] -= 1
    return AugmentedBatch(views=views, labels=out_labels, homolog=homolog)


def augment_pair(
    x: np.ndarray,
    rng: RngStream,
    noise_sigma: float = 0.1,
    scale_range: tuple[float, float] = (0.8, 1.2),
) -> tuple[np.ndarray, np.ndarray]:
    """Two augmented views of a single feature vector."""
    batch = augment_batch(
        np.asarray(x, dtype=np.float64).reshape(1, -1),
        np.zeros(1, dtype=np.int64),
        rng,
        noise_sigma=noise_sigma,
        scale_range=scale_range,
    )
    return batch.views[0].copy(), batch.views[1].copy()


def split_base_novel(
    data: LabeledFeatureSet, novel_class_count: int, rng: RngStream
) -> tuple[LabeledFeatureSet, LabeledFeatureSet]:
    """Randomly partition classes into a base set and a novel set."""
    if not (0 < novel_class_count < data.class_count):
        raise ConfigurationError(
            f"novel_class_count must lie strictly between 0 and {data.class_count}, "
            f"got {novel_class_count}"
        )
    gen = rng.generator()
    novel = np.sort(gen.choice(data.class_count, size=novel_class_count, replace=False))
    return split_by_class_ids(data, novel)


def split_by_class_ids(
    data: LabeledFeatureSet, novel_labels: np.ndarray
) -> tuple[LabeledFeatureSet, LabeledFeatureSet]:
    """Partition by an explicit novel-class list (dense labels of ``data``)."""
    novel_labels = np.unique(as_labels(novel_labels, "novel_labels"))
    if novel_labels.size == 0 or novel_labels.size >= data.class_count:
        raise ConfigurationError("novel class list must be a proper nonempty subset")
    if novel_labels.min() < 0 or novel_labels.max() >= data.class_count:
        raise ConfigurationError("novel class list contains unknown labels")
    base_labels = np.setdiff1d(np.arange(data.class_count), novel_labels)
    return _subset(data, base_labels), _subset(data, novel_labels)


def _subset(data: LabeledFeatureSet, keep: np.ndarray) -> LabeledFeatureSet:
    mask = np.isin(data.labels, keep)
    remap = {int(old): new for new, old in enumerate(keep)}
    labels = np.array([remap[int(l)] for l in data.labels[mask]], dtype=np.int64)
    return LabeledFeatureSet(
        features=data.features[mask].copy(),
        labels=labels,
        class_ids=data.class_ids[keep].copy(),
    )


def load_feature_csv(path) -> LabeledFeatureSet:
    """Read ``label,feat_0,...,feat_{D-1}`` rows into a feature set.

    A header line is auto-detected by a non-numeric first cell. Labels are
    re-indexed densely in order of first appearance; original label tokens
    that parse as integers are kept in ``class_ids``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    rows: list[tuple[str, list[float]]] = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            continue
        cells = line.split(",")
        if width is None:
            # header detection: a non-numeric first cell on the first data line
            try:
                float(cells[0])
            except ValueError:
                width = len(cells)
                continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise ParseError(
                f"{path}: line {lineno}: expected {width} cells, found {len(cells)}"
            )
        if len(cells) < 2:
            raise ParseError(f"{path}: line {lineno}: need a label and at least one feature")
        feats = []
        for k, cell in enumerate(cells[1:], start=1):
            try:
                feats.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: line {lineno}: cell {k} ({cell!r}) is not numeric"
                ) from None
        rows.append((cells[0].strip(), feats))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    order: dict[str, int] = {}
    labels = []
    for token, _ in rows:
        if token not in order:
            order[token] = len(order)
        labels.append(order[token])
    class_ids = []
    for token in order:
        try:
            class_ids.append(int(float(token)))
        except ValueError:
            class_ids.append(len(class_ids))
    return LabeledFeatureSet(
        features=np.array([f for _, f in rows], dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        class_ids=np.array(class_ids, dtype=np.int64),
    )


def save_feature_csv(data: LabeledFeatureSet, path) -> None:
    """Write rows as ``label,feat_0,...``; floats use shortest round-trip form."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(data)):
            cells = [str(int(data.class_ids[data.labels[i]]))]
            cells.extend(repr(float(v)) for v in data.features[i])
            fh.write(",".join(cells) + "\n")


def nearest_mean_confusion(data: LabeledFeatureSet) -> np.ndarray:
    """Row-normalized confusion matrix of a nearest-class-mean classifier.

    Diagnostic used to confirm planted confusable pairs actually confuse.
    """
    means = np.stack([data.features[data.indices_of(c)].mean(axis=0) for c in range(data.class_count)])
    d2 = ((data.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    pred = np.argmin(d2, axis=1)
    conf = np.zeros((data.class_count, data.class_count))
    for true, hat in zip(data.labels, pred):
        conf[true, hat] += 1.0
    conf /= conf.sum(axis=1, keepdims=True)
    return conf
