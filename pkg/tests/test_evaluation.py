import numpy as np
import pytest

from zslkit.data import SyntheticSpec, make_synthetic
from zslkit.encoder import Encoder, EncoderConfig
from zslkit.errors import ConfigError, DataError, MetricError, StateError
from zslkit.evaluation import (
    EvalReport,
    GenerationConfig,
    evaluate,
    export_latent_means,
    generate_latent_dataset,
    harmonic_mean,
    per_class_top1,
    predict_zsl,
    softmax_cross_entropy,
    train_softmax_classifier,
)
from zslkit.training import TrainConfig, train

from conftest import central_fd, max_rel_error


class TestHarmonicMean:
    def test_published_benchmark_values(self):
        assert harmonic_mean(74.4, 53.9) == pytest.approx(62.5, abs=0.05)
        assert harmonic_mean(68.6, 49.2) == pytest.approx(57.3, abs=0.05)

    def test_equal_arguments(self):
        assert harmonic_mean(0.7, 0.7) == pytest.approx(0.7)

    def test_zero_sum(self):
        assert harmonic_mean(0.0, 0.0) == 0.0

    def test_symmetric_and_bounded_by_arithmetic_mean(self, rng):
        for _ in range(50):
            s, u = rng.random(2)
            h = harmonic_mean(s, u)
            assert h == pytest.approx(harmonic_mean(u, s))
            assert h <= (s + u) / 2 + 1e-12
            assert h <= 2 * min(s, u)


class TestPerClassTop1:
    def test_all_correct(self):
        accs, mean = per_class_top1([0, 1, 2], [0, 1, 2])
        assert mean == 1.0

    def test_imbalance_defining_case(self):
        # class A: 2/2, class B: 0/8 -> mean 0.5, not 0.2
        preds = [0, 0] + [0] * 8
        truths = [0, 0] + [1] * 8
        accs, mean = per_class_top1(preds, truths)
        assert accs == {0: 1.0, 1: 0.0}
        assert mean == 0.5

    def test_chance_level_on_balanced_classes(self):
        rng = np.random.default_rng(5)
        truths = np.repeat(np.arange(10), 1000)
        preds = rng.integers(0, 10, truths.size)
        _, mean = per_class_top1(preds, truths)
        assert mean == pytest.approx(0.1, abs=0.02)

    def test_order_invariance(self, rng):
        preds = rng.integers(0, 4, 40)
        truths = rng.integers(0, 4, 40)
        perm = rng.permutation(40)
        _, a = per_class_top1(preds, truths)
        _, b = per_class_top1(preds[perm], truths[perm])
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            per_class_top1([], [])


def frozen_encoders(rng, feat_dim=6, attr_dim=4, latent=3):
    visual = Encoder(EncoderConfig(feat_dim, 8, latent, 0.0), rng).eval()
    semantic = Encoder(EncoderConfig(attr_dim, 8, latent, 0.0), rng).eval()
    return visual, semantic


class TestPredictZsl:
    def test_single_candidate_always_predicted(self, rng):
        visual, semantic = frozen_encoders(rng)
        preds = predict_zsl(
            visual, semantic, rng.standard_normal((5, 6)), [3],
            rng.standard_normal((1, 4)),
        )
        assert (preds == 3).all()

    def test_matches_exhaustive_distance_table(self, rng):
        from zslkit.gaussian import w2_squared
        visual, semantic = frozen_encoders(rng)
        x = rng.standard_normal((10, 6))
        attrs = rng.standard_normal((12, 4))
        ids = np.arange(12)
        preds = predict_zsl(visual, semantic, x, ids, attrs)
        img = visual.encode(x)
        cls = semantic.encode(attrs)
        for i in range(10):
            table = [w2_squared(img[i], cls[j]) for j in range(12)]
            assert preds[i] == int(np.argmin(table))

    def test_candidate_order_and_duplicates(self, rng):
        visual, semantic = frozen_encoders(rng)
        x = rng.standard_normal((8, 6))
        attrs = rng.standard_normal((5, 4))
        ids = np.arange(5)
        base = predict_zsl(visual, semantic, x, ids, attrs)
        perm = rng.permutation(5)
        shuffled = predict_zsl(visual, semantic, x, ids[perm], attrs[perm])
        np.testing.assert_array_equal(base, shuffled)
        dup_ids = np.concatenate([ids, ids[:2]])
        dup_attrs = np.vstack([attrs, attrs[:2]])
        np.testing.assert_array_equal(
            base, predict_zsl(visual, semantic, x, dup_ids, dup_attrs)
        )

    def test_training_mode_rejected(self, rng):
        visual, semantic = frozen_encoders(rng)
        visual.train()
        with pytest.raises(StateError):
            predict_zsl(visual, semantic, np.zeros((1, 6)), [0], np.zeros((1, 4)))

    def test_empty_candidates_rejected(self, rng):
        visual, semantic = frozen_encoders(rng)
        with pytest.raises(ConfigError):
            predict_zsl(visual, semantic, np.zeros((1, 6)), [], np.zeros((0, 4)))

    def test_attribute_row_count_must_match(self, rng):
        visual, semantic = frozen_encoders(rng)
        with pytest.raises(DataError):
            predict_zsl(visual, semantic, np.zeros((1, 6)), [0, 1], np.zeros((1, 4)))


class TestGeneration:
    def test_ratio_arithmetic(self):
        gen = GenerationConfig(samples_per_unseen_class=200,
                               seen_to_unseen_ratio=(1, 2))
        assert gen.samples_per_seen_class == 100

    def test_counts_and_determinism(self, rng):
        _, semantic = frozen_encoders(rng)
        attrs = rng.standard_normal((4, 4))
        gen = GenerationConfig(samples_per_unseen_class=20,
                               seen_to_unseen_ratio=(1, 2))
        z1, y1 = generate_latent_dataset(
            semantic, attrs, [0, 1, 2, 3], [0, 1], gen, np.random.default_rng(2)
        )
        z2, y2 = generate_latent_dataset(
            semantic, attrs, [0, 1, 2, 3], [0, 1], gen, np.random.default_rng(2)
        )
        assert np.array_equal(z1, z2) and np.array_equal(y1, y2)
        assert (y1 == 0).sum() == 10 and (y1 == 2).sum() == 20

    def test_sample_mean_near_class_embedding(self, rng):
        _, semantic = frozen_encoders(rng)
        attrs = rng.standard_normal((2, 4))
        gen = GenerationConfig(samples_per_unseen_class=100_000)
        z, y = generate_latent_dataset(
            semantic, attrs, [0, 1], [], gen, np.random.default_rng(4)
        )
        embs = semantic.encode(attrs)
        for c in (0, 1):
            rows = z[y == c]
            n = rows.shape[0]
            bound = 3.0 * embs.std[c] / np.sqrt(n)
            assert (np.abs(rows.mean(axis=0) - embs.mean[c]) <= bound).all()

    def test_invalid_ratio(self):
        with pytest.raises(ConfigError):
            GenerationConfig(seen_to_unseen_ratio=(0, 2))


class TestSoftmaxClassifier:
    def test_separable_classes_reach_perfect_accuracy(self):
        rng = np.random.default_rng(6)
        z0 = rng.standard_normal((100, 3)) * 0.1
        z1 = rng.standard_normal((100, 3)) * 0.1 + 10.0
        z = np.vstack([z0, z1])
        y = np.array([0] * 100 + [1] * 100)
        gen = GenerationConfig(classifier_epochs=100, classifier_batch=16)
        clf = train_softmax_classifier(z, y, gen, rng)
        held0 = rng.standard_normal((50, 3)) * 0.1
        held1 = rng.standard_normal((50, 3)) * 0.1 + 10.0
        assert (clf.predict(held0) == 0).all()
        assert (clf.predict(held1) == 1).all()

    def test_cross_entropy_gradient_matches_finite_differences(self, rng):
        logits = rng.standard_normal((6, 4))
        targets = rng.integers(0, 4, 6)
        _, grad = softmax_cross_entropy(logits, targets)

        def loss():
            return softmax_cross_entropy(logits, targets)[0]

        assert max_rel_error(grad, central_fd(loss, logits)) < 1e-4

    def test_degenerate_identical_samples_predict_majority(self):
        rng = np.random.default_rng(8)
        z = np.zeros((30, 3))
        y = np.array([0] * 20 + [1] * 10)
        clf = train_softmax_classifier(z, y, GenerationConfig(), rng)
        assert (clf.predict(np.zeros((5, 3))) == 0).all()

    def test_missing_class_rejected(self, rng):
        with pytest.raises(ConfigError, match="no training samples"):
            train_softmax_classifier(
                np.zeros((4, 2)), [0, 0, 1, 1], GenerationConfig(),
                rng, class_ids=[0, 1, 2],
            )


@pytest.fixture(scope="module")
def trained():
    ds = make_synthetic(SyntheticSpec(
        n_seen=5, n_unseen=3, feature_dim=12, attribute_dim=6,
        examples_per_class=30, feature_noise=0.05,
    ))
    cfg = TrainConfig(iterations=1500, batch_size=32, learning_rate=2e-3,
                      latent_dim=12, visual_hidden=32, semantic_hidden=32,
                      seed=0)
    visual, semantic, _ = train(ds, cfg)
    return ds, visual, semantic


class TestEvaluate:

    def test_zsl_report_covers_unseen_only(self, trained):
        ds, visual, semantic = trained
        report = evaluate(visual, semantic, ds, "zsl")
        assert set(report.per_class_acc) == set(ds.unseen_classes.tolist())
        assert report.seen_acc is None and report.harmonic is None
        assert 0.0 <= report.unseen_acc <= 100.0

    def test_gzsl_nn_harmonic_consistent(self, trained):
        ds, visual, semantic = trained
        report = evaluate(visual, semantic, ds, "gzsl_nn")
        assert report.harmonic == harmonic_mean(report.seen_acc, report.unseen_acc)

    def test_gzsl_generated_requires_config(self, trained):
        ds, visual, semantic = trained
        with pytest.raises(ConfigError):
            evaluate(visual, semantic, ds, "gzsl_generated")

    def test_gzsl_generated_runs(self, trained):
        ds, visual, semantic = trained
        gen = GenerationConfig(samples_per_unseen_class=50, classifier_epochs=10)
        report = evaluate(visual, semantic, ds, "gzsl_generated", gen=gen,
                          rng=np.random.default_rng(0))
        assert report.harmonic == harmonic_mean(report.seen_acc, report.unseen_acc)

    def test_unknown_mode_rejected(self, trained):
        ds, visual, semantic = trained
        with pytest.raises(ConfigError):
            evaluate(visual, semantic, ds, "nope")

    def test_report_serialization(self, trained):
        ds, visual, semantic = trained
        report = evaluate(visual, semantic, ds, "gzsl_nn")
        kv = report.to_key_values()
        assert "harmonic_mean=" in kv
        assert "unseen per-class top-1" in report.to_text()

    def test_export_latent_means_shape(self, trained):
        ds, visual, _ = trained
        text = export_latent_means(visual, ds.features[:4], ds.labels[:4])
        rows = [line.split(",") for line in text.strip().splitlines()]
        assert len(rows) == 4
        assert len(rows[0]) == visual.config.latent_dim + 1
        assert rows[0][-1] == str(int(ds.labels[0]))


class TestPerfectConstruction:
    def test_zsl_u_is_one_when_embeddings_coincide(self, rng):
        # images of each unseen class embed exactly at the class embedding
        visual, semantic = frozen_encoders(rng)
        attrs = rng.standard_normal((3, 4))
        cls = semantic.encode(attrs)

        class IdentityVisual:
            training = False
            def encode(self, x):
                from zslkit.gaussian import GaussianBatch
                idx = x[:, 0].astype(int)
                return GaussianBatch(cls.mean[idx], cls.log_var[idx])

        x = np.array([[0.0], [1.0], [2.0]])
        preds = predict_zsl(IdentityVisual(), semantic, x, [0, 1, 2], attrs)
        np.testing.assert_array_equal(preds, [0, 1, 2])
