"""Temporal dynamic graph convolutional classifier for CSI fingerprints.

The pipeline per d x l fingerprint sequence:

  1. a causal TCN stack extracts per-dimension temporal features,
  2. the temporal axis splits into equal slots; each slot becomes a graph
     whose d nodes are the fingerprint dimensions, with a learnable
     adjacency ReLU(S @ Upsilon) built from the slot's similarity matrix
     and sparsified by a hard threshold,
  3. three dynamic GIN layers aggregate (1 + eps) * self + previous-slot
     node + degree-normalized weighted neighbors, with soft cluster
     pooling shrinking every slot graph after each layer,
  4. node/slot average pooling feeds a fully connected softmax head.

All learnable state lives in float64 autodiff tensors; training is
mini-batch AdamW, deterministic per seed.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .fingerprint import FingerprintSequence
from .optim import AdamW
from .seeding import DOMAIN_MODEL, DOMAIN_SHUFFLE, make_rng

N_GIN_LAYERS = 3


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs: int = 50
    n_slots: int = 5
    pooling_ratio: float = 0.2
    theta: float = 0.01
    seed: int = 42
    grad_clip: float = 5.0  # global-norm ceiling; 0 disables

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError(f"theta must lie in [0, 1), got {self.theta}")
        if not 0.0 < self.pooling_ratio <= 1.0:
            raise ConfigError("pooling_ratio must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.n_slots < 1:
            raise ConfigError("batch_size/epochs/n_slots out of range")


def similarity_matrix(x):
    """Row-stochastic similarity between fingerprint dimensions.

    S_ij = exp(-relu(d_Eu(x_i, x_j))) normalized over j; accepts leading
    batch axes on a (..., d, l) tensor.
    """
    x = ad.as_tensor(x)
    if x.shape[-2] < 2:
        raise ValueError("similarity needs at least two dimensions (rows)")
    sq = ad.tsum(ad.mul(x, x), axis=-1, keepdims=True)
    cross = ad.matmul(x, ad.transpose(x))
    d2 = ad.relu(ad.add(ad.add(sq, ad.transpose(sq)), ad.mul(cross, -2.0)))
    dist = ad.sqrt(d2)
    return ad.softmax(ad.mul(ad.relu(dist), -1.0), axis=-1)


def adjacency(s, upsilon, theta):
    """Learnable adjacency ReLU(S @ Upsilon) with entries below theta zeroed."""
    return ad.threshold(ad.relu(ad.matmul(s, upsilon)), theta)


def row_normalize(a):
    """Degree-normalized edge weights; zero-degree rows stay zero."""
    return ad.mul(a, ad.reciprocal(ad.tsum(a, axis=-1, keepdims=True)))


def tcn_forward(x, layers):
    """Causal convolution stack applied to every fingerprint dimension.

    `x` is (..., d, l); `layers` is a list of (weight, bias, dilation)
    with weight (C_out, C_in, k).  Each layer is ReLU(conv(.)); output is
    (..., d, C_last, l), the temporal length preserved by left padding.
    """
    x = ad.as_tensor(x)
    lead = x.shape[:-1]
    h = ad.reshape(x, (-1, 1, x.shape[-1]))
    for weight, bias, dilation in layers:
        h = ad.relu(ad.causal_conv1d(h, weight, bias, dilation))
    return ad.reshape(h, lead + h.shape[-2:])


@dataclass
class DynGraphState:
    """Per-slot node features, adjacency, and normalized edge weights."""

    features: list
    adjacency: list
    omega: list

    @property
    def n_slots(self):
        return len(self.features)


def build_dynamic_graphs(x, n_slots, upsilon, theta, temporal_features=None):
    """Split the temporal axis into slot graphs over the d dimensions.

    Adjacency comes from each slot's slice of the raw sequence `x`
    (..., d, l); node features are the matching slice of
    `temporal_features` (..., d, C, l) flattened per node, or the raw
    slice itself when no features are supplied.
    """
    x = ad.as_tensor(x)
    length = x.shape[-1]
    if length % n_slots != 0:
        raise ConfigError(f"sequence length {length} not divisible into {n_slots} slots")
    seg = length // n_slots
    features, adjacencies, omegas = [], [], []
    for n in range(n_slots):
        xs = ad.narrow(x, x.ndim - 1, n * seg, seg)
        adj = adjacency(similarity_matrix(xs), upsilon, theta)
        if temporal_features is None:
            feats = xs
        else:
            tf = ad.narrow(temporal_features, temporal_features.ndim - 1, n * seg, seg)
            feats = ad.reshape(tf, tf.shape[:-2] + (tf.shape[-2] * seg,))
        features.append(feats)
        adjacencies.append(adj)
        omegas.append(row_normalize(adj))
    return DynGraphState(features, adjacencies, omegas)


def dyn_gin_layer(state, eps, w1, b1, w2, b2):
    """One dynamic GIN update across all slots.

    Per slot n:  MLP((1 + eps) * H^n + H^{n-1} + omega^T H^n), the
    previous-slot term absent for the first slot.  The MLP (two linear
    maps with an inner ReLU) is shared across slots.  Returns the new
    state plus the layer readout: slot node-sums concatenated in
    ascending slot order.
    """
    scale = ad.add(eps, 1.0)
    new_features, summaries = [], []
    for n, (h, omega) in enumerate(zip(state.features, state.omega)):
        agg = ad.add(ad.mul(h, scale), ad.matmul(ad.transpose(omega), h))
        if n > 0:
            agg = ad.add(agg, state.features[n - 1])
        hidden = ad.relu(ad.add(ad.matmul(agg, w1), b1))
        out = ad.add(ad.matmul(hidden, w2), b2)
        new_features.append(out)
        summaries.append(ad.tsum(out, axis=-2))
    readout = ad.concat(summaries, axis=-1)
    return DynGraphState(new_features, list(state.adjacency), list(state.omega)), readout


def gin_layer_static(adj, feats, eps, mlp=None):
    """Reference GIN update with explicit neighbor loops (plain numpy).

    agg_v = (1 + eps) * H_v + sum_u adj[u, v] * H_u, so a 0/1 adjacency
    reproduces the unweighted sum aggregator and passing normalized edge
    weights reproduces the dynamic layer on a single slot.  Serves as the
    independent oracle for dyn_gin_layer.
    """
    adj = np.asarray(adj, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] != feats.shape[0]:
        raise ShapeError(f"adjacency {adj.shape} does not match features {feats.shape}")
    n = feats.shape[0]
    agg = np.zeros_like(feats)
    for v in range(n):
        acc = (1.0 + eps) * feats[v].copy()
        for u in range(n):
            if adj[u, v] != 0.0:
                acc = acc + adj[u, v] * feats[u]
        agg[v] = acc
    return mlp(agg) if mlp is not None else agg


def coarsen(h, a, c):
    """Graph coarsening: H' = C^T H, A' = C^T A C."""
    ct = ad.transpose(ad.as_tensor(c))
    return ad.matmul(ct, h), ad.matmul(ad.matmul(ct, a), c)


def cluster_count(n_nodes, ratio):
    return max(1, math.ceil(ratio * n_nodes))


def cluster_pool(h, a, weight, bias, ratio):
    """Soft node-cluster pooling.

    The assignment C = softmax(H @ weight + bias) has one probability row
    per node over max(1, ceil(ratio * n_nodes)) clusters; the coarsened
    graph is (C^T H, C^T A C).  Returns (H', A', C).
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("pooling ratio must lie in (0, 1]")
    h = ad.as_tensor(h)
    n_clusters = cluster_count(h.shape[-2], ratio)
    weight = ad.as_tensor(weight)
    if weight.shape[-1] != n_clusters:
        raise ConfigError(
            f"assignment weight maps to {weight.shape[-1]} clusters, need {n_clusters}"
        )
    c = ad.softmax(ad.add(ad.matmul(h, weight), bias), axis=-1)
    hp, ap = coarsen(h, a, c)
    return hp, ap, c


def cross_entropy(y_true, y_hat):
    """Mean one-hot cross entropy with predictions clamped at 1e-12."""
    y_hat = ad.as_tensor(y_hat)
    y_true = ad.as_tensor(y_true)
    if y_true.shape != y_hat.shape:
        raise ShapeError(f"labels {y_true.shape} vs predictions {y_hat.shape}")
    sums = y_hat.data.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError("predicted rows must sum to 1")
    per_sample = ad.tsum(ad.mul(y_true, ad.log(y_hat)), axis=-1)
    return ad.mul(ad.tmean(per_sample), -1.0)


def _cross_entropy_from_logits(y_true, logits):
    """Same loss through log-softmax; gradients stay (p - y)/B even when
    the softmax saturates, so training recovers from confident misses."""
    per_sample = ad.tsum(ad.mul(ad.as_tensor(y_true), ad.log_softmax(logits, axis=-1)), axis=-1)
    return ad.mul(ad.tmean(per_sample), -1.0)


class TDGCN:
    """The full classifier; owns all learnable tensors."""

    def __init__(self, d, l, n_classes, cfg, *, kernels=(9, 5, 3),
                 channels=(32, 32, 32), dilations=(1, 2, 4), hidden=32,
                 features=32, rng=None):
        if d < 2:
            raise ConfigError("need at least two fingerprint dimensions")
        if l % cfg.n_slots != 0:
            raise ConfigError(f"sequence length {l} not divisible by {cfg.n_slots} slots")
        if not len(kernels) == len(channels) == len(dilations):
            raise ConfigError("TCN kernel/channel/dilation lists must align")
        if l < max(kernels):
            raise ConfigError(f"sequence length {l} shorter than kernel {max(kernels)}")
        self.d, self.l, self.n_classes = d, l, n_classes
        self.cfg = cfg
        self.kernels, self.channels, self.dilations = kernels, channels, dilations
        self.hidden, self.features = hidden, features
        seg = l // cfg.n_slots
        self.node_counts = [d]
        for _ in range(N_GIN_LAYERS):
            self.node_counts.append(cluster_count(self.node_counts[-1], cfg.pooling_ratio))

        rng = rng if rng is not None else make_rng(cfg.seed, DOMAIN_MODEL)
        self.params = {}

        def weight(name, shape, fan_in, gain=1.0):
            # unit-variance-preserving uniform, divided by the known forward
            # gain feeding the matrix; a bare 1/sqrt(fan_in) bound decays
            # activations ~2.5x per layer and stalls training at this depth,
            # while the sum aggregation (~3x) and C^T pooling (~m/k per
            # stage) inflate them until the softmax head saturates
            bound = math.sqrt(3.0 / fan_in) / gain
            self.params[name] = ad.parameter(rng.uniform(-bound, bound, shape), name)

        def zeros(name, shape):
            self.params[name] = ad.parameter(np.zeros(shape), name)

        weight("upsilon", (d, d), d)
        c_in = 1
        for i, (k, c_out, _) in enumerate(zip(kernels, channels, dilations)):
            weight(f"tcn{i}_w", (c_out, c_in, k), c_in * k)
            zeros(f"tcn{i}_b", (c_out,))
            c_in = c_out
        f_in = channels[-1] * seg
        for i in range(N_GIN_LAYERS):
            pool_gain = self.node_counts[i - 1] / self.node_counts[i] if i > 0 else 1.0
            weight(f"gin{i}_w1", (f_in, hidden), f_in, gain=3.0 * pool_gain)
            zeros(f"gin{i}_b1", (hidden,))
            weight(f"gin{i}_w2", (hidden, features), hidden)
            zeros(f"gin{i}_b2", (features,))
            zeros(f"gin{i}_eps", ())
            weight(f"pool{i}_w", (features, self.node_counts[i + 1]), features)
            zeros(f"pool{i}_b", (self.node_counts[i + 1],))
            f_in = features
        # zero head: training starts from uniform class probabilities
        zeros("fc_w", (features, n_classes))
        zeros("fc_b", (n_classes,))

    def parameters(self):
        return self.params

    def _tcn_layers(self):
        return [
            (self.params[f"tcn{i}_w"], self.params[f"tcn{i}_b"], self.dilations[i])
            for i in range(len(self.kernels))
        ]

    def forward_logits(self, x):
        """Unnormalized class scores for a (B, d, l) batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.d or x.shape[2] != self.l:
            raise ShapeError(f"input {x.shape} does not match model ({self.d}, {self.l})")
        xt = Tensor(x)
        feats = tcn_forward(xt, self._tcn_layers())
        state = build_dynamic_graphs(
            xt, self.cfg.n_slots, self.params["upsilon"], self.cfg.theta, feats
        )
        for i in range(N_GIN_LAYERS):
            state, _ = dyn_gin_layer(
                state,
                self.params[f"gin{i}_eps"],
                self.params[f"gin{i}_w1"], self.params[f"gin{i}_b1"],
                self.params[f"gin{i}_w2"], self.params[f"gin{i}_b2"],
            )
            pooled_h, pooled_a, pooled_o = [], [], []
            for h, a in zip(state.features, state.adjacency):
                hp, ap, _ = cluster_pool(
                    h, a, self.params[f"pool{i}_w"], self.params[f"pool{i}_b"],
                    self.cfg.pooling_ratio,
                )
                pooled_h.append(hp)
                pooled_a.append(ap)
                pooled_o.append(row_normalize(ap))
            state = DynGraphState(pooled_h, pooled_a, pooled_o)
        everything = ad.concat(state.features, axis=-2)
        pooled = ad.tmean(everything, axis=-2)
        return ad.add(ad.matmul(pooled, self.params["fc_w"]), self.params["fc_b"])

    def forward(self, x):
        """Probability rows for a (B, d, l) batch (or one (d, l) sequence)."""
        return ad.softmax(self.forward_logits(x), axis=-1)

    def classify(self, seq):
        """Probability vector (length K) for one fingerprint sequence."""
        data = seq.data if isinstance(seq, FingerprintSequence) else np.asarray(seq)
        if data.shape != (self.d, self.l):
            raise ShapeError(f"sequence {data.shape} does not match ({self.d}, {self.l})")
        return self.forward(data).data[0]

    def predict(self, x_batch, chunk=256):
        """1-based labels for a (n, d, l) stack."""
        labels = np.empty(x_batch.shape[0], dtype=int)
        for lo in range(0, x_batch.shape[0], chunk):
            probs = self.forward(x_batch[lo : lo + chunk]).data
            labels[lo : lo + probs.shape[0]] = probs.argmax(axis=1) + 1
        return labels

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, tensors):
        for name, p in self.params.items():
            if name not in tensors:
                raise KeyError(f"checkpoint missing tensor {name}")
            if tensors[name].shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint tensor {name} {tensors[name].shape} vs {p.data.shape}"
                )
            p.data = tensors[name].astype(np.float64).copy()


def clip_gradients(params, max_norm):
    """Rescale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    seconds: float


def train(train_ds, cfg, test_ds=None, model_kwargs=None):
    """Mini-batch training; returns (model, per-epoch history).

    Shuffling and initialization derive from cfg.seed, so two runs with
    the same data and config produce identical parameter trajectories.
    """
    if len(train_ds) == 0:
        raise ValueError("empty training set")
    x_all, y_all = train_ds.to_arrays()
    n, d, l = x_all.shape
    model = TDGCN(
        d, l, train_ds.n_classes, cfg,
        rng=make_rng(cfg.seed, DOMAIN_MODEL), **(model_kwargs or {}),
    )
    opt = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = make_rng(cfg.seed, DOMAIN_SHUFFLE)
    x_test = y_test = None
    if test_ds is not None:
        x_test, _ = test_ds.to_arrays()
        y_test = test_ds.class_indices()

    history = []
    for epoch in range(1, cfg.epochs + 1):
        tick = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo : lo + cfg.batch_size]
            logits = model.forward_logits(x_all[idx])
            loss = _cross_entropy_from_logits(y_all[idx], logits)
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(epoch, b)
            opt.zero_grad()
            ad.backward(loss)
            if cfg.grad_clip > 0:
                clip_gradients(model.parameters(), cfg.grad_clip)
            opt.step()
            total_loss += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_all[idx].argmax(axis=1)).sum())
        test_acc = float("nan")
        if x_test is not None:
            test_acc = float(np.mean(model.predict(x_test) == y_test))
        history.append(EpochStats(
            epoch, total_loss / n, correct / n, test_acc, time.perf_counter() - tick,
        ))
    return model, history


def write_training_log(history, path):
    """Training log CSV: epoch, train_loss, train_acc, test_acc."""
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,train_acc,test_acc\n")
        for row in history:
            fh.write(
                f"{row.epoch},{row.train_loss:.6f},{row.train_acc:.6f},{row.test_acc:.6f}\n"
            )


def save_checkpoint(model, path, feature_mean=None, feature_std=None):
    """Named-tensor blob with parameters, architecture, and input scaling."""
    from .optim import save_tensors

    blob = {
        "meta_shape": np.array([model.d, model.l, model.n_classes], dtype=float),
        "meta_train": np.array(
            [model.cfg.n_slots, model.cfg.pooling_ratio, model.cfg.theta], dtype=float
        ),
        "meta_kernels": np.array(model.kernels, dtype=float),
        "meta_channels": np.array(model.channels, dtype=float),
        "meta_dilations": np.array(model.dilations, dtype=float),
        "meta_widths": np.array([model.hidden, model.features], dtype=float),
    }
    if feature_mean is not None:
        blob["feature_mean"] = np.asarray(feature_mean, dtype=float)
        blob["feature_std"] = np.asarray(feature_std, dtype=float)
    blob.update(model.state_dict())
    save_tensors(path, blob)


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; returns (model, mean, std).

    mean/std are the training-set standardization vectors when stored,
    else None.
    """
    from .optim import load_tensors

    blob = load_tensors(path)
    d, l, n_classes = (int(v) for v in blob["meta_shape"])
    n_slots, ratio, theta = blob["meta_train"]
    cfg = TrainConfig(n_slots=int(n_slots), pooling_ratio=float(ratio), theta=float(theta))
    model = TDGCN(
        d, l, n_classes, cfg,
        kernels=tuple(int(v) for v in blob["meta_kernels"]),
        channels=tuple(int(v) for v in blob["meta_channels"]),
        dilations=tuple(int(v) for v in blob["meta_dilations"]),
        hidden=int(blob["meta_widths"][0]),
        features=int(blob["meta_widths"][1]),
    )
    model.load_state_dict({k: v for k, v in blob.items() if not k.startswith(("meta_", "feature_"))})
    return model, blob.get("feature_mean"), blob.get("feature_std")
