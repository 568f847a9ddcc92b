"""Classical comparators over flattened fingerprint sequences.

All three consume (n, d*l) float matrices with 1-based integer labels:
k-nearest neighbors with majority voting, a Gini CART decision tree with
midpoint thresholds, and Gaussian naive Bayes with a variance floor.
"""

from dataclasses import dataclass

import numpy as np

_VAR_FLOOR = 1e-9


def _check_train(train_x, train_y):
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=int)
    if train_x.ndim != 2 or train_x.shape[0] == 0:
        raise ValueError("training set must be a non-empty (n, D) matrix")
    if train_y.shape != (train_x.shape[0],):
        raise ValueError("labels must align with training rows")
    return train_x, train_y


def knn_predict(train_x, train_y, query, k):
    """Majority label among the k Euclidean-nearest training samples.

    Vote ties break toward the smallest cumulative distance within the
    tied labels, then toward the lowest label index.
    """
    train_x, train_y = _check_train(train_x, train_y)
    if not 1 <= k <= train_x.shape[0]:
        raise ValueError(f"k={k} out of range 1..{train_x.shape[0]}")
    query = np.asarray(query, dtype=np.float64)
    dists = np.sqrt(((train_x - query[None, :]) ** 2).sum(axis=1))
    nearest = np.argsort(dists, kind="stable")[:k]
    best_label, best_key = None, None
    for label in np.unique(train_y[nearest]):
        members = nearest[train_y[nearest] == label]
        key = (-len(members), dists[members].sum(), label)
        if best_key is None or key < best_key:
            best_key, best_label = key, int(label)
    return best_label


def knn_predict_batch(train_x, train_y, queries, k, chunk=256):
    """knn_predict over many query rows (chunked distance matrix)."""
    train_x, train_y = _check_train(train_x, train_y)
    if not 1 <= k <= train_x.shape[0]:
        raise ValueError(f"k={k} out of range 1..{train_x.shape[0]}")
    queries = np.asarray(queries, dtype=np.float64)
    out = np.empty(queries.shape[0], dtype=int)
    train_sq = (train_x ** 2).sum(axis=1)
    for lo in range(0, queries.shape[0], chunk):
        q = queries[lo : lo + chunk]
        d2 = train_sq[None, :] - 2.0 * q @ train_x.T + (q ** 2).sum(axis=1)[:, None]
        dists = np.sqrt(np.maximum(d2, 0.0))
        order = np.argsort(dists, axis=1, kind="stable")[:, :k]
        for i in range(q.shape[0]):
            nearest = order[i]
            best_label, best_key = None, None
            for label in np.unique(train_y[nearest]):
                members = nearest[train_y[nearest] == label]
                key = (-len(members), dists[i, members].sum(), label)
                if best_key is None or key < best_key:
                    best_key, best_label = key, int(label)
            out[lo + i] = best_label
    return out


@dataclass
class _TreeNode:
    label: int = 0
    feature: int = -1
    thresh: float = 0.0
    left: "_TreeNode" = None
    right: "_TreeNode" = None

    @property
    def is_leaf(self):
        return self.left is None


def _majority(y):
    labels, counts = np.unique(y, return_counts=True)
    return int(labels[counts.argmax()])  # ties go to the lowest label


def _gini_from_counts(counts, totals):
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / totals[..., None]
    g = 1.0 - np.nansum(p * p, axis=-1)
    return np.where(totals > 0, g, 0.0)


def _best_split(x, y, classes):
    """Lowest weighted-Gini (feature, midpoint threshold) or None.

    Candidate thresholds are midpoints between consecutive distinct
    sorted values of each feature, evaluated from prefix class counts.
    """
    n, n_feat = x.shape
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ys = y[order]
    onehot = ys[:, :, None] == classes[None, None, :]
    prefix = np.cumsum(onehot, axis=0)
    left_counts = prefix[:-1]  # class counts of the first 1..n-1 samples
    total_counts = prefix[-1]
    right_counts = total_counts[None, :, :] - left_counts
    n_left = np.arange(1, n)[:, None].astype(float)
    n_right = n - n_left
    weighted = (
        n_left * _gini_from_counts(left_counts, n_left)
        + n_right * _gini_from_counts(right_counts, n_right)
    ) / n
    valid = xs[:-1] != xs[1:]
    weighted = np.where(valid, weighted, np.inf)
    flat = np.argmin(weighted)
    pos, feat = np.unravel_index(flat, weighted.shape)
    if not np.isfinite(weighted[pos, feat]):
        return None
    parent = _gini_from_counts(total_counts[feat][None, :], np.array([float(n)]))[0]
    if weighted[pos, feat] >= parent - 1e-12:
        return None
    thresh = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return int(feat), float(thresh)


def dt_fit(train_x, train_y, max_depth=12):
    """Binary CART with Gini impurity and axis-aligned midpoint splits."""
    train_x, train_y = _check_train(train_x, train_y)
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    classes = np.unique(train_y)

    def grow(idx, depth):
        y = train_y[idx]
        node = _TreeNode(label=_majority(y))
        if depth >= max_depth or np.unique(y).size == 1:
            return node
        split = _best_split(train_x[idx], y, classes)
        if split is None:
            return node
        node.feature, node.thresh = split
        go_left = train_x[idx, node.feature] <= node.thresh
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(train_x.shape[0]), 0)


def dt_predict(tree, query):
    """Label for one query vector."""
    node = tree
    query = np.asarray(query, dtype=np.float64)
    while not node.is_leaf:
        node = node.left if query[node.feature] <= node.thresh else node.right
    return node.label


def dt_predict_batch(tree, queries):
    return np.array([dt_predict(tree, q) for q in np.asarray(queries, dtype=np.float64)])


@dataclass
class NaiveBayesModel:
    classes: np.ndarray     # ascending 1-based labels
    means: np.ndarray       # (K, D)
    variances: np.ndarray   # (K, D), floored
    log_priors: np.ndarray  # (K,)


def nb_fit(train_x, train_y):
    """Per-class Gaussian feature statistics with variance floor 1e-9."""
    train_x, train_y = _check_train(train_x, train_y)
    classes = np.unique(train_y)
    means, variances, priors = [], [], []
    for label in classes:
        rows = train_x[train_y == label]
        if rows.shape[0] < 2:
            raise ValueError(f"class {label} has fewer than 2 samples")
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), _VAR_FLOOR))
        priors.append(rows.shape[0] / train_x.shape[0])
    return NaiveBayesModel(
        classes, np.array(means), np.array(variances), np.log(np.array(priors))
    )


def nb_predict(model, query):
    """argmax of log prior + sum of per-feature Gaussian log-likelihoods;
    ties resolve to the lowest label."""
    query = np.asarray(query, dtype=np.float64)
    diff = query[None, :] - model.means
    log_lik = -0.5 * (np.log(2.0 * np.pi * model.variances) + diff * diff / model.variances)
    scores = model.log_priors + log_lik.sum(axis=1)
    return int(model.classes[scores.argmax()])


def nb_predict_batch(model, queries):
    queries = np.asarray(queries, dtype=np.float64)
    diff = queries[:, None, :] - model.means[None, :, :]
    log_lik = -0.5 * (
        np.log(2.0 * np.pi * model.variances)[None] + diff * diff / model.variances[None]
    )
    scores = model.log_priors[None, :] + log_lik.sum(axis=2)
    return model.classes[scores.argmax(axis=1)].astype(int)
