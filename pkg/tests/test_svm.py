import numpy as np
import pytest

from bilin.errors import DegenerateModelError, ProtocolError, ShapeError
from bilin.svm import (
    GalleryModelSet,
    LinearModel,
    hinge_objective,
    raw_score,
    rescale_model,
    score,
    train_binary_svm,
    train_ovr_svm,
)


def blobs(rng, centers, per=10, sigma=0.3):
    X, labels = [], []
    for name, c in centers.items():
        X.append(rng.normal(c, sigma, (per, len(c))))
        labels += [name] * per
    return np.vstack(X), labels


class TestBinarySolver:
    def test_separable_1d_recovers_margin(self):
        X = np.array([[2.0], [3.0], [4.0], [-2.0], [-3.0], [-4.0]])
        y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
        w, b, trace = train_binary_svm(X, y)
        assert np.all(np.sign(X @ w + b) == y)
        # max-margin solution for this data is w = 0.5, b = 0
        assert abs(w[0] - 0.5) < 1e-6 and abs(b) < 1e-6
        assert trace[-1] <= trace[0]

    def test_objective_non_increasing_endpoints(self, rng):
        X = rng.standard_normal((30, 5))
        y = np.sign(X[:, 0] + 0.1 * rng.standard_normal(30))
        _, _, trace = train_binary_svm(X, y, reg_c=2.0, epochs=150)
        assert trace[-1] <= trace[0]

    def test_deterministic(self, rng):
        X = rng.standard_normal((20, 4))
        y = np.sign(rng.standard_normal(20))
        y[y == 0] = 1.0
        w1, b1, t1 = train_binary_svm(X, y)
        w2, b2, t2 = train_binary_svm(X, y)
        assert np.array_equal(w1, w2) and b1 == b2 and t1 == t2

    def test_balance_weights_shift_boundary(self, rng):
        X = np.vstack([rng.normal(1.5, 0.2, (2, 1)),
                       rng.normal(-1.5, 0.2, (40, 1))])
        y = np.array([1.0] * 2 + [-1.0] * 40)
        weights = np.where(y > 0, 20.0, 1.0)
        w_plain, b_plain, _ = train_binary_svm(X, y)
        w_bal, b_bal, _ = train_binary_svm(X, y, weights=weights)
        assert (w_bal[0], b_bal) != (w_plain[0], b_plain)
        assert np.all(np.sign(X @ w_bal + b_bal) == y)


class TestRescaleModel:
    def test_affine_solution_from_medians(self):
        m = LinearModel("a", np.array([1.0]), 0.0)
        out = rescale_model(m, [2.0, 2.0, 9.0], [-0.5, -0.5, -7.0])
        assert out.rescale_a == pytest.approx(0.8)
        assert out.rescale_b == pytest.approx(-0.6)
        assert 0.8 * 2.0 - 0.6 == pytest.approx(1.0)
        assert 0.8 * -0.5 - 0.6 == pytest.approx(-1.0)

    def test_identity_when_medians_already_plus_minus_one(self):
        m = LinearModel("a", np.array([1.0]), 0.0)
        out = rescale_model(m, [1.0, 1.0], [-1.0, -1.0])
        assert out.rescale_a == pytest.approx(1.0)
        assert out.rescale_b == pytest.approx(0.0)

    def test_equal_medians_rejected(self):
        m = LinearModel("a", np.array([1.0]), 0.0)
        with pytest.raises(DegenerateModelError):
            rescale_model(m, [0.5], [0.5])

    def test_median_property_on_random_score_sets(self, rng):
        for _ in range(50):
            n_pos = int(rng.integers(1, 30))
            n_neg = int(rng.integers(1, 50))
            pos = rng.normal(2.0, 1.0, n_pos)
            neg = rng.normal(-2.0, 1.0, n_neg)
            if np.median(pos) <= np.median(neg):
                continue
            m = rescale_model(LinearModel("x", np.ones(1), 0.0), pos, neg)
            assert abs(np.median(m.rescale_a * pos + m.rescale_b) - 1.0) < 1e-9
            assert abs(np.median(m.rescale_a * neg + m.rescale_b) + 1.0) < 1e-9

    def test_rescaling_preserves_rank(self, rng):
        m = LinearModel("a", rng.standard_normal(4), 0.2)
        rescaled = rescale_model(m, [3.0, 4.0], [-1.0, 0.1])
        for _ in range(20):
            d1, d2 = rng.standard_normal((2, 4))
            before = raw_score(m, d1) - raw_score(m, d2)
            after = score(rescaled, d1) - score(rescaled, d2)
            assert np.sign(before) == np.sign(after)


class TestScore:
    def test_zero_model_scores_zero(self, rng):
        m = LinearModel("z", np.zeros(5), 0.0)
        assert score(m, rng.standard_normal(5)) == 0.0

    def test_affine_arithmetic(self):
        m = LinearModel("a", np.array([1.0, 0.0]), 0.0, rescale_a=2.0,
                        rescale_b=-1.0)
        assert score(m, np.array([3.0, 5.0])) == 5.0

    def test_dim_mismatch(self):
        m = LinearModel("a", np.zeros(3), 0.0)
        with pytest.raises(ShapeError):
            score(m, np.zeros(4))


class TestTrainOvr:
    def test_one_model_per_identity_sorted(self, rng):
        X, labels = blobs(rng, {"carol": [0, 3], "alice": [3, 0], "bob": [-3, -3]})
        gallery = train_ovr_svm(X, labels)
        assert gallery.identity_ids == ["alice", "bob", "carol"]
        assert gallery.descriptor_dim == 2

    def test_training_points_classified_correctly(self, rng):
        X, labels = blobs(rng, {"a": [3, 0], "b": [0, 3], "c": [-3, -3]})
        gallery = train_ovr_svm(X, labels)
        for x, label in zip(X, labels):
            scores = gallery.score_vector(x)
            assert max(scores, key=scores.get) == label

    def test_duplicating_samples_keeps_held_out_signs(self, rng):
        X, labels = blobs(rng, {"a": [2.5, 0], "b": [-2.5, 0]}, per=8)
        held_out = rng.normal(0.0, 2.0, (20, 2))
        g1 = train_ovr_svm(X, labels)
        g2 = train_ovr_svm(np.vstack([X, X]), labels + labels)
        for x in held_out:
            s1 = g1.score_vector(x)
            s2 = g2.score_vector(x)
            for ident in s1:
                assert np.sign(s1[ident]) == np.sign(s2[ident])

    def test_single_identity_rejected(self, rng):
        with pytest.raises(ProtocolError):
            train_ovr_svm(rng.standard_normal((5, 3)), ["only"] * 5)

    def test_label_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            train_ovr_svm(rng.standard_normal((5, 3)), ["a", "b"])

    def test_non_matrix_rejected(self, rng):
        with pytest.raises(ShapeError):
            train_ovr_svm(rng.standard_normal(5), ["a"] * 5)

    def test_deterministic_models(self, rng):
        X, labels = blobs(rng, {"a": [2, 0], "b": [-2, 0]})
        g1 = train_ovr_svm(X, labels)
        g2 = train_ovr_svm(X, labels)
        for m1, m2 in zip(g1.models, g2.models):
            assert np.array_equal(m1.w, m2.w)
            assert (m1.b, m1.rescale_a, m1.rescale_b) == \
                (m2.b, m2.rescale_a, m2.rescale_b)

    def test_workers_do_not_change_models(self, rng):
        X, labels = blobs(rng, {"a": [2, 1], "b": [-2, 1], "c": [0, -2]})
        g1 = train_ovr_svm(X, labels, workers=1)
        g2 = train_ovr_svm(X, labels, workers=3)
        for m1, m2 in zip(g1.models, g2.models):
            assert np.array_equal(m1.w, m2.w) and m1.b == m2.b

    def test_balanced_flag_trains(self, rng):
        X, labels = blobs(rng, {"a": [2, 0], "b": [-2, 0], "c": [0, 2]}, per=6)
        gallery = train_ovr_svm(X, labels, balanced=True)
        assert len(gallery.models) == 3

    def test_rescaled_median_scores(self, rng):
        X, labels = blobs(rng, {"a": [3, 0], "b": [0, 3], "c": [-3, -3]})
        gallery = train_ovr_svm(X, labels)
        for model in gallery.models:
            own = [score(model, x) for x, l in zip(X, labels)
                   if l == model.identity_id]
            rest = [score(model, x) for x, l in zip(X, labels)
                    if l != model.identity_id]
            assert np.median(own) == pytest.approx(1.0, abs=1e-9)
            assert np.median(rest) == pytest.approx(-1.0, abs=1e-9)


class TestGalleryModelSet:
    def test_duplicate_ids_rejected(self):
        models = [LinearModel("a", np.zeros(2), 0.0),
                  LinearModel("a", np.zeros(2), 0.0)]
        with pytest.raises(ProtocolError):
            GalleryModelSet(models=models, descriptor_dim=2)

    def test_dim_mismatch_rejected(self):
        models = [LinearModel("a", np.zeros(3), 0.0)]
        with pytest.raises(ShapeError):
            GalleryModelSet(models=models, descriptor_dim=2)

    def test_score_vector_keys(self, rng):
        X, labels = blobs(rng, {"a": [2, 0], "b": [-2, 0]})
        gallery = train_ovr_svm(X, labels)
        assert set(gallery.score_vector(np.zeros(2))) == {"a", "b"}


def test_hinge_objective_counts_margin_violations():
    X = np.array([[1.0], [-1.0]])
    y = np.array([1.0, -1.0])
    w = np.array([0.5])
    # margins are 0.5 -> hinge 0.5 each; plus regularizer 0.125
    assert hinge_objective(w, 0.0, X, y, reg_c=1.0) == pytest.approx(1.125)
