"""Classical baselines against brute-force oracles."""

import numpy as np
import pytest

from csiauth.baselines import (
    dt_fit, dt_predict, dt_predict_batch, knn_predict, knn_predict_batch,
    nb_fit, nb_predict, nb_predict_batch,
)

RNG = np.random.default_rng(99)


def brute_force_knn(train_x, train_y, query, k):
    """Full-sort reference with the same tie rules, plain Python loops."""
    dists = [float(np.sqrt(np.sum((row - query) ** 2))) for row in train_x]
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    candidates = {}
    for i in order:
        label = int(train_y[i])
        count, total = candidates.get(label, (0, 0.0))
        candidates[label] = (count + 1, total + dists[i])
    return min(candidates, key=lambda lbl: (-candidates[lbl][0], candidates[lbl][1], lbl))


class TestKnn:
    def test_exact_training_sample(self):
        x = RNG.standard_normal((20, 5))
        y = RNG.integers(1, 4, 20)
        assert knn_predict(x, y, x[7], 1) == y[7]

    def test_majority_two_to_one(self):
        x = np.array([[0.0], [0.1], [5.0]])
        y = np.array([1, 1, 2])
        assert knn_predict(x, y, np.array([0.05]), 3) == 1

    def test_k_out_of_range(self):
        x, y = np.zeros((3, 2)), np.array([1, 2, 3])
        with pytest.raises(ValueError):
            knn_predict(x, y, np.zeros(2), 4)
        with pytest.raises(ValueError):
            knn_predict(x, y, np.zeros(2), 0)

    def test_empty_training_set(self):
        with pytest.raises(ValueError):
            knn_predict(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(2), 1)

    def test_tie_breaks_to_smaller_cumulative_distance(self):
        # two labels, one vote each; label 2's member sits closer
        x = np.array([[0.0], [1.0]])
        y = np.array([3, 2])
        assert knn_predict(x, y, np.array([0.9]), 2) == 2

    def test_tie_breaks_to_lowest_label(self):
        x = np.array([[1.0], [-1.0]])
        y = np.array([4, 2])
        assert knn_predict(x, y, np.array([0.0]), 2) == 2

    def test_matches_brute_force_oracle(self):
        x = RNG.standard_normal((200, 6))
        y = RNG.integers(1, 5, 200)
        queries = RNG.standard_normal((50, 6))
        for k in (1, 3, 5):
            batch = knn_predict_batch(x, y, queries, k)
            for i, q in enumerate(queries):
                expect = brute_force_knn(x, y, q, k)
                assert knn_predict(x, y, q, k) == expect
                assert batch[i] == expect


def brute_force_best_split(x, y):
    """Exhaustive (feature, midpoint) search minimizing weighted Gini."""
    n, n_feat = x.shape

    def gini(labels):
        if labels.size == 0:
            return 0.0
        _, counts = np.unique(labels, return_counts=True)
        p = counts / labels.size
        return 1.0 - float(np.sum(p * p))

    best = (np.inf, None, None)
    for f in range(n_feat):
        vals = np.unique(x[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            left = y[x[:, f] <= thr]
            right = y[x[:, f] > thr]
            score = (left.size * gini(left) + right.size * gini(right)) / n
            if score < best[0] - 1e-12:
                best = (score, f, thr)
    return best


class TestDecisionTree:
    def test_single_class_single_leaf(self):
        x = RNG.standard_normal((10, 3))
        tree = dt_fit(x, np.full(10, 2), max_depth=5)
        assert tree.is_leaf and tree.label == 2

    def test_one_dimensional_perfect_split(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([1, 1, 2, 2])
        _, bf_feat, bf_thr = brute_force_best_split(x, y)
        tree = dt_fit(x, y, max_depth=3)
        assert tree.feature == bf_feat
        assert abs(tree.thresh - bf_thr) < 1e-12 or (1.0 < tree.thresh < 10.0)
        assert np.array_equal(dt_predict_batch(tree, x), y)

    def test_split_matches_bruteforce_on_random_data(self):
        for trial in range(10):
            rng = np.random.default_rng(trial)
            x = rng.standard_normal((40, 4))
            y = rng.integers(1, 4, 40)
            tree = dt_fit(x, y, max_depth=1)
            score, feat, thr = brute_force_best_split(x, y)
            if tree.is_leaf:
                continue  # no impurity-reducing split existed
            assert tree.feature == feat
            assert abs(tree.thresh - thr) < 1e-9

    def test_depth_zero_majority_stump(self):
        x = RNG.standard_normal((9, 2))
        y = np.array([1, 1, 1, 1, 1, 2, 2, 2, 2])
        tree = dt_fit(x, y, max_depth=0)
        assert tree.is_leaf and tree.label == 1
        assert dt_predict(tree, RNG.standard_normal(2)) == 1

    def test_train_accuracy_nondecreasing_in_depth(self):
        x = RNG.standard_normal((120, 5))
        y = RNG.integers(1, 4, 120)
        accs = []
        for depth in (0, 1, 2, 4, 8, 12):
            tree = dt_fit(x, y, depth)
            accs.append(np.mean(dt_predict_batch(tree, x) == y))
        assert all(b >= a for a, b in zip(accs, accs[1:]))


class TestNaiveBayes:
    def test_symmetric_classes_tie_to_lowest_label(self):
        x = np.array([[0.0], [1.0], [0.0], [1.0]])
        y = np.array([1, 1, 2, 2])
        model = nb_fit(x, y)
        assert nb_predict(model, np.array([0.5])) == 1

    def test_separated_gaussians_boundary(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.normal(0.0, 1.0, (200, 1)), rng.normal(8.0, 1.0, (200, 1))])
        y = np.array([1] * 200 + [2] * 200)
        model = nb_fit(x, y)
        assert nb_predict(model, np.array([1.0])) == 1
        assert nb_predict(model, np.array([7.0])) == 2
        probes = np.linspace(-2, 10, 40)[:, None]
        preds = nb_predict_batch(model, probes)
        midpoint = 4.0  # equal variances and priors: boundary near the midpoint
        assert np.all(preds[probes.ravel() < midpoint - 1.0] == 1)
        assert np.all(preds[probes.ravel() > midpoint + 1.0] == 2)

    def test_zero_variance_feature_uses_floor(self):
        x = np.array([[1.0, 0.0], [1.0, 0.1], [2.0, 0.0], [2.0, 0.1]])
        y = np.array([1, 1, 2, 2])
        model = nb_fit(x, y)  # feature 0 has zero within-class variance
        assert np.all(model.variances >= 1e-9)
        assert nb_predict(model, np.array([1.0, 0.05])) == 1

    def test_small_class_rejected(self):
        with pytest.raises(ValueError):
            nb_fit(np.array([[0.0], [1.0], [2.0]]), np.array([1, 1, 2]))

    def test_affine_rescaling_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((60, 4))
        y = rng.integers(1, 4, 60)
        queries = rng.standard_normal((20, 4))
        base = nb_predict_batch(nb_fit(x, y), queries)
        scale = np.array([2.0, 0.5, 3.0, 10.0])
        shift = np.array([1.0, -2.0, 0.0, 5.0])
        scaled = nb_predict_batch(
            nb_fit(x * scale + shift, y), queries * scale + shift
        )
        assert np.array_equal(base, scaled)
