import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from sacl.datasets import ClusterSpec, generate_clusters
from sacl.embedding import ContrastiveEncoder, TrainConfig, train_encoder
from sacl.encoder import MlpEncoder
from sacl.exceptions import ConfigurationError
from sacl.losses import EmbeddingBatch, pair_weights, sacl_grad_features, sacl_loss
from sacl.numerics import RngStream
from sacl.teacher import structural_similarity, train_teacher
from sacl.datasets import augment_batch


def small_world(classes=6, per_class=40, dim=12):
    spec = ClusterSpec.random(dim, classes, 0.2, RngStream(50), confusable=((0, 1, 0.15),))
    return generate_clusters(spec, per_class, RngStream(51))


def small_config(**overrides):
    defaults = dict(
        hidden_dims=(16, 16), embed_dim=8, iterations=40, batch_size=32,
        learning_rate=1e-3, seed=0,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestTrainEncoder:
    def test_zero_learning_rate_returns_initialization(self):
        base = small_world()
        teacher = train_teacher(base, epochs=30)
        cfg = small_config(learning_rate=0.0, iterations=5)
        encoder, _ = train_encoder(base, teacher, cfg)
        init = MlpEncoder.initialize(base.dim, cfg.hidden_dims, cfg.embed_dim,
                                     RngStream(cfg.seed, 2))
        for a, b in zip(encoder.weights, init.weights):
            np.testing.assert_array_equal(a, b)

    def test_losses_logged_and_finite(self):
        base = small_world()
        teacher = train_teacher(base, epochs=50)
        encoder, log = train_encoder(base, teacher, small_config())
        assert len(log.loss) == 40
        assert np.all(np.isfinite(log.loss))
        assert np.all((np.array(log.lam) >= 0) & (np.array(log.lam) <= 1))

    def test_loss_decreases_on_synthetic_run(self):
        base = small_world(per_class=60)
        teacher = train_teacher(base, epochs=100)
        _, log = train_encoder(base, teacher, small_config(iterations=300))
        first = np.median(log.loss[:10])
        last = np.median(log.loss[-10:])
        assert last < first

    def test_determinism_bit_for_bit(self):
        base = small_world()
        teacher = train_teacher(base, epochs=30)
        cfg = small_config(iterations=25, seed=9)
        enc_a, log_a = train_encoder(base, teacher, cfg)
        enc_b, log_b = train_encoder(base, teacher, cfg)
        for a, b in zip(enc_a.parameters(), enc_b.parameters()):
            np.testing.assert_array_equal(a, b)
        assert log_a.loss == log_b.loss

    def test_teacher_untouched_by_training(self):
        base = small_world()
        teacher = train_teacher(base, epochs=30)
        coef_before = teacher.coef_.copy()
        train_encoder(base, teacher, small_config(iterations=15))
        np.testing.assert_array_equal(teacher.coef_, coef_before)

    def test_end_to_end_gradient_against_finite_differences(self):
        # composed chain: encoder params -> features -> embeddings -> loss
        base = small_world(classes=3, per_class=6, dim=3)
        teacher = train_teacher(base, epochs=20)
        enc = MlpEncoder.initialize(3, (4,), 2, RngStream(1, 2))
        batch = augment_batch(base.features[:5], base.labels[:5], RngStream(4),
                              noise_sigma=0.1)
        sim = structural_similarity(teacher, batch, 2.5)
        weights = pair_weights(sim, batch.labels, batch.homolog, 0.5)
        tau = 0.1

        cache, feats = enc.forward(batch.views)
        emb = EmbeddingBatch.from_features(feats, batch.labels, batch.homolog)
        grad_f = sacl_grad_features(emb, weights, tau)
        grads_w, grads_b = enc.backward(cache, grad_f)

        def total_loss(probe: MlpEncoder) -> float:
            _, f = probe.forward(batch.views)
            e = EmbeddingBatch.from_features(f, batch.labels, batch.homolog)
            return sacl_loss(e, weights, tau).total

        step = 1e-6
        params = enc.parameters()
        analytic = [*grads_w, *grads_b]
        for p_idx in range(len(params)):
            fd = np.zeros(params[p_idx].size)
            for k in range(params[p_idx].size):
                bumped = [p.copy() for p in params]
                bumped[p_idx].reshape(-1)[k] += step
                probe = MlpEncoder(weights=bumped[:2], biases=bumped[2:])
                hi = total_loss(probe)
                bumped = [p.copy() for p in params]
                bumped[p_idx].reshape(-1)[k] -= step
                probe = MlpEncoder(weights=bumped[:2], biases=bumped[2:])
                lo = total_loss(probe)
                fd[k] = (hi - lo) / (2 * step)
            fd = fd.reshape(params[p_idx].shape)
            # atol floor covers finite-difference roundoff on dead-unit columns
            np.testing.assert_allclose(analytic[p_idx], fd, rtol=1e-5, atol=1e-7)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(loss="infonce")
        with pytest.raises(ConfigurationError):
            TrainConfig(tau_cold=0.0)
        with pytest.raises(ConfigurationError):
            TrainConfig(lam=1.5)
        with pytest.raises(ConfigurationError):
            TrainConfig(iterations=0)


class TestContrastiveEncoderEstimator:
    def test_fit_transform_shapes_and_norms(self):
        base = small_world()
        model = ContrastiveEncoder(hidden_dims=(16,), embed_dim=8, iterations=20,
                                   batch_size=24, teacher_epochs=30, seed=3)
        emb = model.fit(base.features, base.labels).transform(base.features)
        assert emb.shape == (len(base), 8)
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-12)

    def test_sklearn_params_round_trip(self):
        model = ContrastiveEncoder(tau_cold=0.1, loss="scl")
        params = model.get_params()
        assert params["tau_cold"] == 0.1
        assert params["loss"] == "scl"
        clone = ContrastiveEncoder(**params)
        assert clone.get_params() == params

    def test_prefitted_teacher_reused(self):
        base = small_world()
        teacher = train_teacher(base, epochs=40, rng=RngStream(8))
        model = ContrastiveEncoder(hidden_dims=(16,), embed_dim=4, iterations=10,
                                   teacher=teacher, seed=1)
        model.fit(base.features, base.labels)
        assert model.teacher_ is teacher

    def test_unfitted_transform_rejected(self):
        with pytest.raises(NotFittedError):
            ContrastiveEncoder().transform(np.zeros((2, 4)))

    def test_callback_sees_every_iteration(self):
        base = small_world(classes=3, per_class=10, dim=6)
        seen = []
        model = ContrastiveEncoder(hidden_dims=(8,), embed_dim=4, iterations=7,
                                   batch_size=8, teacher_epochs=10, seed=2)
        model.fit(base.features, base.labels, callback=lambda it, enc: seen.append(it))
        assert seen == list(range(1, 8))

    def test_loss_variants_train(self):
        base = small_world(classes=4, per_class=15, dim=8)
        for loss in ("cl", "scl"):
            model = ContrastiveEncoder(hidden_dims=(8,), embed_dim=4, iterations=8,
                                       batch_size=12, teacher_epochs=10,
                                       loss=loss, seed=4)
            model.fit(base.features, base.labels)
            assert np.all(np.isfinite(model.training_log_.loss))


class TestTrainingLogCsv:
    def test_csv_layout(self, tmp_path):
        base = small_world(classes=3, per_class=8, dim=4)
        teacher = train_teacher(base, epochs=10)
        _, log = train_encoder(base, teacher, small_config(iterations=3, batch_size=8,
                                                           hidden_dims=(4,), embed_dim=2))
        p = tmp_path / "log.csv"
        log.write_csv(p)
        lines = p.read_text().strip().split("\n")
        assert lines[0] == "iter,loss,lambda,teacher_batch_acc"
        assert len(lines) == 4
        assert lines[1].startswith("1,")
