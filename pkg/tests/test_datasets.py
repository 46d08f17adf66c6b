import numpy as np
import pytest

from sacl.datasets import (
    AugmentedBatch,
    ClusterSpec,
    LabeledFeatureSet,
    augment_batch,
    augment_pair,
    generate_clusters,
    load_feature_csv,
    nearest_mean_confusion,
    save_feature_csv,
    split_base_novel,
    split_by_class_ids,
)
from sacl.exceptions import ConfigurationError, ParseError
from sacl.numerics import RngStream, l2_normalize


def two_cluster_spec(angle=None, stddev=0.2, dim=8, classes=4):
    confusable = ((0, 1, angle),) if angle is not None else ()
    return ClusterSpec.random(dim, classes, stddev, RngStream(11), confusable=confusable)


class TestClusterSpec:
    def test_random_spec_realizes_requested_angle(self):
        spec = two_cluster_spec(angle=0.15)
        cos = float(np.dot(spec.means[0], spec.means[1]))
        assert np.arccos(cos) == pytest.approx(0.15, abs=1e-9)

    def test_invalid_specs_rejected(self):
        means = np.eye(3)
        with pytest.raises(ConfigurationError):
            ClusterSpec(means=means * 2.0, stddev=0.1)  # not unit norm
        with pytest.raises(ConfigurationError):
            ClusterSpec(means=means, stddev=0.0)
        with pytest.raises(ConfigurationError):
            ClusterSpec(means=means, stddev=0.1, confusable_pairs=((0, 0, 0.1),))
        with pytest.raises(ConfigurationError):
            # recorded angle does not match the means
            ClusterSpec(means=means, stddev=0.1, confusable_pairs=((0, 1, 0.3),))


class TestGenerateClusters:
    def test_zero_noise_by_tiny_stddev(self):
        # stddev must be > 0; at 1e-12 every sample coincides with its mean
        spec = ClusterSpec(means=np.eye(3), stddev=1e-12)
        data = generate_clusters(spec, 4, RngStream(0))
        for c in range(3):
            np.testing.assert_allclose(
                data.features[data.indices_of(c)], np.tile(spec.means[c], (4, 1)), atol=1e-10
            )

    def test_counts_balanced(self):
        spec = two_cluster_spec()
        data = generate_clusters(spec, 10, RngStream(1))
        assert len(data) == 40
        assert data.class_count == 4
        np.testing.assert_array_equal(np.bincount(data.labels), [10, 10, 10, 10])

    def test_confusable_pair_confuses_nearest_mean(self):
        spec = ClusterSpec.random(32, 6, 0.2, RngStream(3), confusable=((0, 1, 0.15),))
        data = generate_clusters(spec, 400, RngStream(4))
        conf = nearest_mean_confusion(data)
        # planted pair crosses over on >10% of samples, everything else <1%
        assert conf[0, 1] > 0.10 and conf[1, 0] > 0.10
        off = conf - np.diag(np.diag(conf))
        off[0, 1] = off[1, 0] = 0.0
        assert off.max() < 0.01

    def test_determinism(self):
        spec = two_cluster_spec()
        a = generate_clusters(spec, 25, RngStream(9, 2))
        b = generate_clusters(spec, 25, RngStream(9, 2))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_per_class_validated(self):
        with pytest.raises(ConfigurationError):
            generate_clusters(two_cluster_spec(), 0, RngStream(0))


class TestAugmentation:
    def test_identity_augmentation(self):
        x = np.array([1.0, 2.0, 3.0])
        a, b = augment_pair(x, RngStream(0), noise_sigma=0.0, scale_range=(1.0, 1.0))
        np.testing.assert_array_equal(a, x)
        np.testing.assert_array_equal(b, x)

    def test_pure_scaling_preserves_normalized_direction(self):
        x = np.array([1.0, 2.0, 3.0])
        a, b = augment_pair(x, RngStream(0), noise_sigma=0.0, scale_range=(2.0, 2.0))
        np.testing.assert_array_equal(a, 2 * x)
        np.testing.assert_allclose(l2_normalize(a), l2_normalize(x), atol=1e-15)
        np.testing.assert_allclose(l2_normalize(b), l2_normalize(x), atol=1e-15)

    def test_replay_determinism(self):
        x = np.arange(5.0)
        a1, b1 = augment_pair(x, RngStream(77, 3), noise_sigma=0.1)
        a2, b2 = augment_pair(x, RngStream(77, 3), noise_sigma=0.1)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(b1, b2)
        assert not np.array_equal(a1, b1)

    def test_batch_structure(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(6, 4))
        y = np.array([0, 0, 1, 1, 2, 2])
        batch = augment_batch(X, y, RngStream(8))
        assert len(batch) == 12
        idx = np.arange(12)
        np.testing.assert_array_equal(batch.homolog[batch.homolog], idx)
        assert np.all(batch.homolog != idx)
        np.testing.assert_array_equal(batch.labels[batch.homolog], batch.labels)
        np.testing.assert_array_equal(batch.labels, np.repeat(y, 2))

    def test_invalid_scale_range(self):
        with pytest.raises(ConfigurationError):
            augment_pair(np.ones(3), RngStream(0), scale_range=(0.0, 1.0))
        with pytest.raises(ConfigurationError):
            augment_pair(np.ones(3), RngStream(0), scale_range=(1.2, 0.8))
        with pytest.raises(ConfigurationError):
            augment_pair(np.ones(3), RngStream(0), noise_sigma=-0.1)

    def test_homolog_invariants_enforced(self):
        views = np.zeros((4, 2))
        labels = np.array([0, 0, 1, 1])
        with pytest.raises(ConfigurationError):
            AugmentedBatch(views=views, labels=labels, homolog=np.array([0, 1, 3, 2]))
        with pytest.raises(ConfigurationError):
            AugmentedBatch(views=views, labels=np.array([0, 1, 1, 0]),
                           homolog=np.array([1, 0, 3, 2]))


class TestSplits:
    def make_set(self, classes=10, per_class=6, dim=3):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(classes * per_class, dim))
        labels = np.repeat(np.arange(classes), per_class)
        return LabeledFeatureSet(features=features, labels=labels)

    def test_partition_counts_and_disjointness(self):
        base, novel = split_base_novel(self.make_set(), 2, RngStream(4))
        assert base.class_count == 8
        assert novel.class_count == 2
        assert set(base.class_ids) & set(novel.class_ids) == set()
        assert set(base.class_ids) | set(novel.class_ids) == set(range(10))

    def test_boundary_rejected(self):
        data = self.make_set()
        with pytest.raises(ConfigurationError):
            split_base_novel(data, 10, RngStream(0))
        with pytest.raises(ConfigurationError):
            split_base_novel(data, 0, RngStream(0))

    def test_replay_determinism(self):
        data = self.make_set()
        b1, n1 = split_base_novel(data, 3, RngStream(123, 5))
        b2, n2 = split_base_novel(data, 3, RngStream(123, 5))
        np.testing.assert_array_equal(n1.class_ids, n2.class_ids)
        np.testing.assert_array_equal(b1.features, b2.features)

    def test_split_by_explicit_ids(self):
        data = self.make_set()
        base, novel = split_by_class_ids(data, np.array([1, 4]))
        np.testing.assert_array_equal(novel.class_ids, [1, 4])
        assert novel.labels.max() == 1  # re-indexed densely
        np.testing.assert_array_equal(
            novel.features[novel.indices_of(0)], data.features[data.indices_of(1)]
        )


class TestCsvRoundTrip:
    def test_basic_parse(self, tmp_path):
        p = tmp_path / "feat.csv"
        p.write_text("0,1.5,-2.0\n1,0.25,3.5\n0,0.0,1.0\n")
        data = load_feature_csv(p)
        assert len(data) == 3
        assert data.dim == 2
        np.testing.assert_array_equal(data.labels, [0, 1, 0])

    def test_header_autodetected(self, tmp_path):
        p = tmp_path / "feat.csv"
        p.write_text("label,feat_0,feat_1\n3,1.0,2.0\n7,0.5,0.5\n")
        data = load_feature_csv(p)
        assert len(data) == 2
        np.testing.assert_array_equal(data.labels, [0, 1])
        np.testing.assert_array_equal(data.class_ids, [3, 7])

    def test_ragged_row_names_line(self, tmp_path):
        p = tmp_path / "feat.csv"
        p.write_text("0,1.0,2.0\n1,3.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_feature_csv(p)

    def test_non_numeric_cell_names_line(self, tmp_path):
        p = tmp_path / "feat.csv"
        p.write_text("0,1.0,2.0\n1,oops,4.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_feature_csv(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "feat.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            load_feature_csv(p)

    def test_round_trip_identity(self, tmp_path):
        spec = two_cluster_spec()
        data = generate_clusters(spec, 7, RngStream(2))
        p = tmp_path / "round.csv"
        save_feature_csv(data, p)
        back = load_feature_csv(p)
        np.testing.assert_allclose(back.features, data.features, atol=1e-12)
        np.testing.assert_array_equal(back.labels, data.labels)
