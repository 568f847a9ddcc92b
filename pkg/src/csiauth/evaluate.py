"""Experiment orchestration: scenario datasets, sweeps, metrics, reports.

A sweep varies exactly one axis (SNR, inter-Alice spacing, transmitter
speed, or IRS on/off), trains the graph classifier plus the classical
baselines at every point, and writes results.csv, per-method plot data,
and rendered matplotlib figures into the output directory.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines as bl
from .channel import (
    ChannelConfig, Position3D, add_awgn_batch, irs_phase_matrix,
    trace_cascade_matrices,
)
from .fingerprint import (
    build_dataset, flatten_csi_batch, segment_sequences, split_train_test,
    standardize,
)
from .seeding import DOMAIN_NOISE, DOMAIN_PSI, DOMAIN_TRACE, make_rng
from .tdgcn import TrainConfig, train

SWEEP_AXES = ("snr_db", "alice_spacing", "speed", "irs")
METHODS = ("tdgcn", "knn", "dt", "nb")


def accuracy(actual, predicted):
    """Fraction of exactly matched identity labels."""
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape or actual.size == 0:
        raise ValueError(f"label arrays {actual.shape} vs {predicted.shape}")
    return float(np.mean(actual == predicted))


def confusion_matrix(actual, predicted, n_classes):
    """(K, K) counts; entry (i, j) counts actual i predicted j (1-based)."""
    actual = np.asarray(actual, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    if actual.shape != predicted.shape:
        raise ValueError("label arrays must have equal length")
    for arr in (actual, predicted):
        if arr.size and (arr.min() < 1 or arr.max() > n_classes):
            raise ValueError(f"labels must lie in 1..{n_classes}")
    out = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(out, (actual - 1, predicted - 1), 1)
    return out


@dataclass
class ScenarioConfig:
    """Everything needed to synthesize one labeled train/test pair."""

    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sequences_per_tx: int = 1000
    sequence_length: int = 50
    snr_db: float = math.inf
    with_irs: bool = True
    train_fraction: float = 0.6
    noise_split: str = "both"  # "both" | "test"

    def __post_init__(self):
        if self.noise_split not in ("both", "test"):
            raise ValueError("noise_split must be 'both' or 'test'")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep_axis: str = "snr_db"
    sweep_values: tuple = (0.0, 10.0, 20.0, 30.0)
    methods: tuple = METHODS
    seed: int = 42
    knn_k: int = 5
    dt_max_depth: int = 12
    wall_clock_timing: bool = True

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if len(self.sweep_values) == 0:
            raise ValueError("sweep needs at least one value")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")


@dataclass
class ResultRow:
    sweep_value: object
    method: str
    train_acc: float
    test_acc: float
    seconds: float
    epochs: int


def build_scenario_dataset(cfg: ScenarioConfig, seed):
    """Synthesize, noise, segment, split, and standardize one scenario.

    Returns (train_ds, test_ds).  All randomness derives from `seed`
    through fixed domain tags, so the result is bit-reproducible.
    """
    chan = cfg.channel
    l = cfg.sequence_length
    n_samples = cfg.sequences_per_tx * l
    psi = None
    if cfg.with_irs:
        psi = irs_phase_matrix(chan.n_irs_elements, make_rng(seed, DOMAIN_PSI))
    n_train_seq = int(math.floor(cfg.train_fraction * cfg.sequences_per_tx + 1e-9))
    per_class = []
    for tx in range(1, chan.n_transmitters + 1):
        cascades = trace_cascade_matrices(
            chan, tx, n_samples, make_rng(seed, DOMAIN_TRACE, tx),
            psi=psi, with_irs=cfg.with_irs,
        )
        flat = flatten_csi_batch(cascades)
        if not math.isinf(cfg.snr_db):
            noise_rng = make_rng(seed, DOMAIN_NOISE, tx)
            if cfg.noise_split == "both":
                flat = add_awgn_batch(flat, cfg.snr_db, noise_rng)
            else:
                cut = n_train_seq * l
                noised = add_awgn_batch(flat[cut:], cfg.snr_db, noise_rng)
                flat = np.concatenate([flat[:cut], noised], axis=0)
        per_class.append(segment_sequences(flat, l, tx))
    full = build_dataset(per_class)
    train_ds, test_ds = split_train_test(full, cfg.train_fraction)
    train_ds, test_ds, _, _ = standardize(train_ds, test_ds)
    return train_ds, test_ds


def respace_alices(chan: ChannelConfig, spacing):
    """Alice y coordinates symmetric around their current centroid."""
    ys = [p.y for p in chan.alice_positions]
    centroid = sum(ys) / len(ys)
    n = len(ys)
    new_alices = [
        Position3D(p.x, centroid + spacing * (i - (n - 1) / 2.0), p.z)
        for i, p in enumerate(chan.alice_positions)
    ]
    return replace(chan, alice_positions=new_alices)


def _scenario_for(cfg: ExperimentConfig, value):
    sc = cfg.scenario
    if cfg.sweep_axis == "snr_db":
        return replace(sc, snr_db=float(value))
    if cfg.sweep_axis == "alice_spacing":
        return replace(sc, channel=respace_alices(sc.channel, float(value)))
    if cfg.sweep_axis == "speed":
        return replace(sc, channel=replace(sc.channel, tx_speed_mps=float(value)))
    on = value if isinstance(value, bool) else str(value).lower() in ("on", "true", "1")
    return replace(sc, with_irs=on)


def _fit_eval_baseline(method, cfg, train_flat, y_train, test_flat, y_test):
    if method == "knn":
        train_pred = bl.knn_predict_batch(train_flat, y_train, train_flat, cfg.knn_k)
        test_pred = bl.knn_predict_batch(train_flat, y_train, test_flat, cfg.knn_k)
    elif method == "dt":
        tree = bl.dt_fit(train_flat, y_train, cfg.dt_max_depth)
        train_pred = bl.dt_predict_batch(tree, train_flat)
        test_pred = bl.dt_predict_batch(tree, test_flat)
    else:
        model = bl.nb_fit(train_flat, y_train)
        train_pred = bl.nb_predict_batch(model, train_flat)
        test_pred = bl.nb_predict_batch(model, test_flat)
    return accuracy(y_train, train_pred), accuracy(y_test, test_pred)


def run_sweep(cfg: ExperimentConfig, model_kwargs=None, progress=None):
    """Rows for every (sweep value, method) pair, in sweep order.

    Training failures (divergence) are recorded as NaN accuracies for
    that row instead of aborting the remaining points.
    """
    rows = []
    for value in cfg.sweep_values:
        scenario = _scenario_for(cfg, value)
        train_ds, test_ds = build_scenario_dataset(scenario, cfg.seed)
        x_train, _ = train_ds.to_arrays()
        y_train = train_ds.class_indices()
        x_test, _ = test_ds.to_arrays()
        y_test = test_ds.class_indices()
        train_flat, _ = train_ds.to_flat()
        test_flat, _ = test_ds.to_flat()
        for method in cfg.methods:
            tick = time.perf_counter()
            epochs = 0
            try:
                if method == "tdgcn":
                    model, history = train(
                        train_ds, cfg.train, model_kwargs=model_kwargs
                    )
                    epochs = len(history)
                    tr = accuracy(y_train, model.predict(x_train))
                    te = accuracy(y_test, model.predict(x_test))
                else:
                    tr, te = _fit_eval_baseline(
                        method, cfg, train_flat, y_train, test_flat, y_test
                    )
            except RuntimeError:
                tr, te = float("nan"), float("nan")
            seconds = time.perf_counter() - tick if cfg.wall_clock_timing else 0.0
            rows.append(ResultRow(value, method, tr, te, seconds, epochs))
            if progress is not None:
                progress(rows[-1])
    return rows


def format_sweep_value(value):
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "on" if value else "off"
    v = float(value)
    if math.isinf(v):
        return "inf"
    return f"{v:.6f}"


def emit_results(rows, out_dir, sweep_axis="sweep", render_figures=True):
    """Write results.csv, per-method two-column plot data, and a figure.

    Rerunning on identical rows reproduces results.csv byte for byte.
    """
    import os

    if not rows:
        raise ValueError("no result rows to emit")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write("sweep,method,train_acc,test_acc,seconds,epochs\n")
        for r in rows:
            fh.write(
                f"{format_sweep_value(r.sweep_value)},{r.method},"
                f"{r.train_acc:.6f},{r.test_acc:.6f},{r.seconds:.6f},{r.epochs}\n"
            )
    methods = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)
    for method in methods:
        with open(os.path.join(out_dir, f"plot_{sweep_axis}_{method}.dat"), "w") as fh:
            fh.write(f"# {sweep_axis} test_accuracy\n")
            for r in rows:
                if r.method == method:
                    fh.write(f"{format_sweep_value(r.sweep_value)} {r.test_acc:.6f}\n")
    written = [csv_path]
    if render_figures:
        written.append(render_accuracy_figure(rows, out_dir, sweep_axis))
    return written


def render_accuracy_figure(rows, out_dir, sweep_axis):
    """One accuracy-vs-sweep curve per method, saved as PNG."""
    import os

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    methods = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)
    values = []
    for r in rows:
        if r.sweep_value not in values:
            values.append(r.sweep_value)
    x = np.arange(len(values))
    numeric = all(not isinstance(v, (str, bool)) for v in values)
    for method in methods:
        acc = [r.test_acc for r in rows if r.method == method]
        ax.plot(
            [float(v) for v in values] if numeric else x,
            acc, marker="o", label=method,
        )
    if not numeric:
        ax.set_xticks(x)
        ax.set_xticklabels([format_sweep_value(v) for v in values])
    ax.set_xlabel(sweep_axis)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, f"figure_accuracy_vs_{sweep_axis}.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_training_figure(history, out_path):
    """Loss and accuracy curves for one training run."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [h.epoch for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [h.train_loss for h in history], marker=".")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax1.grid(True, alpha=0.3)
    ax2.plot(epochs, [h.train_acc for h in history], marker=".", label="train")
    if any(np.isfinite(h.test_acc) for h in history):
        ax2.plot(epochs, [h.test_acc for h in history], marker=".", label="test")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.05)
    ax2.grid(True, alpha=0.3)
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_confusion_figure(matrix, out_path):
    """Confusion-matrix heatmap."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(matrix, cmap="Blues")
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(j, i, str(matrix[i, j]), ha="center", va="center", fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_xticks(range(matrix.shape[1]), [str(k + 1) for k in range(matrix.shape[1])])
    ax.set_yticks(range(matrix.shape[0]), [str(k + 1) for k in range(matrix.shape[0])])
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
