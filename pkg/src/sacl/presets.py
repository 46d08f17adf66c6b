"""Bundled configurations for the synthetic confusable-cluster worlds.

A preset fixes the data geometry (with its own data seed, independent of
the run seed, so `train` and `eval` regenerate the identical world), the
teacher and encoder training settings, and the evaluation protocol.

World design: base-class means are random unit directions; novel means
live inside the span of the base means — two sit at a small angle from a
base mean (the planted confusable pairs) and the rest are normalized
blends of two base means. Novel classes therefore share structure with
the base classes, which is the regime the structure-aware objective is
built for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .datasets import ClusterSpec, LabeledFeatureSet, generate_clusters, split_by_class_ids
from .exceptions import ConfigurationError
from .numerics import RngStream


def confusable_cluster_spec(
    dim: int,
    base_classes: int,
    novel_classes: int,
    stddev: float,
    rng: RngStream,
    confusable_count: int = 2,
    confusable_angle: float = 0.15,
) -> tuple[ClusterSpec, np.ndarray]:
    """Spec for base+novel clusters with in-span novel means.

    Returns the spec over ``base_classes + novel_classes`` classes and
    the dense ids of the novel ones (the trailing block).
    """
    if novel_classes < 1 or base_classes < 4:
        raise ConfigurationError("need >= 4 base classes and >= 1 novel class")
    confusable_count = min(confusable_count, novel_classes, base_classes)
    gen = rng.generator()
    base_means = gen.normal(size=(base_classes, dim))
    base_means /= np.linalg.norm(base_means, axis=1, keepdims=True)
    total = base_classes + novel_classes
    means = np.zeros((total, dim))
    means[:base_classes] = base_means

    pairs = []
    for k in range(confusable_count):
        novel_idx = base_classes + k
        anchor = base_means[k]
        raw = gen.normal(size=dim)
        ortho = raw - np.dot(raw, anchor) * anchor
        ortho /= np.linalg.norm(ortho)
        means[novel_idx] = math.cos(confusable_angle) * anchor + math.sin(confusable_angle) * ortho
        pairs.append((k, novel_idx, confusable_angle))

    # remaining novel classes: blends of two base means, cycling over pairs
    # that do not touch the confusable anchors
    free = list(range(confusable_count, base_classes))
    for j in range(confusable_count, novel_classes):
        i_a = free[(2 * j) % len(free)]
        i_b = free[(2 * j + 1) % len(free)]
        if i_a == i_b:
            i_b = free[(2 * j + 2) % len(free)]
        mix = gen.uniform(0.3, 0.7)
        blend = mix * base_means[i_a] + (1.0 - mix) * base_means[i_b]
        means[base_classes + j] = blend / np.linalg.norm(blend)

    spec = ClusterSpec(means=means, stddev=stddev, confusable_pairs=tuple(pairs))
    return spec, np.arange(base_classes, total, dtype=np.int64)


@dataclass(frozen=True)
class Preset:
    """All knobs for one reproducible run, CLI-overridable field by field."""

    name: str
    # world
    dim: int = 32
    base_classes: int = 12
    novel_classes: int = 5
    per_class: int = 200
    cluster_stddev: float = 0.25
    confusable_pairs: int = 2
    confusable_angle: float = 0.15
    data_seed: int = 20240601
    # teacher
    teacher_epochs: int = 200
    teacher_learning_rate: float = 1e-3
    teacher_batch_size: int = 128
    # encoder
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
    scale_lo: float = 0.8
    scale_hi: float = 1.2
    # evaluation protocol
    way: int = 5
    shot: int = 1
    query: int = 15
    episodes: int = 1000

    def with_overrides(self, **kwargs) -> "Preset":
        return replace(self, **kwargs)

    def build_spec(self) -> tuple[ClusterSpec, np.ndarray]:
        return confusable_cluster_spec(
            self.dim,
            self.base_classes,
            self.novel_classes,
            self.cluster_stddev,
            RngStream(self.data_seed, 0),
            confusable_count=self.confusable_pairs,
            confusable_angle=self.confusable_angle,
        )

    def build_world(self) -> tuple[LabeledFeatureSet, LabeledFeatureSet]:
        """Deterministic base/novel feature sets for this preset."""
        spec, novel_ids = self.build_spec()
        full = generate_clusters(spec, self.per_class, RngStream(self.data_seed, 1))
        return split_by_class_ids(full, novel_ids)

    def fresh_test_world(
        self, per_class: int, stream: int = 2
    ) -> tuple[LabeledFeatureSet, LabeledFeatureSet]:
        """Additional held-out draws from the same clusters (for gFSL)."""
        spec, novel_ids = self.build_spec()
        full = generate_clusters(spec, per_class, RngStream(self.data_seed, stream))
        return split_by_class_ids(full, novel_ids)


PRESETS: dict[str, Preset] = {
    "synthetic-default": Preset(name="synthetic-default"),
    "synthetic-small": Preset(
        name="synthetic-small",
        per_class=50,
        teacher_epochs=100,
        iterations=400,
        episodes=100,
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
