"""Command-line interface.

Subcommands:
  generate   synthesize a labeled dataset and write it as a CSIF file
  train      train the graph classifier on a CSIF dataset
  eval       evaluate a checkpoint against a CSIF dataset
  baseline   fit and evaluate a classical method on a CSIF dataset
  sweep      run a full experiment sweep and emit results + figures

Every command exits 0 on success; failures print one machine-readable
`error: {...}` JSON line to stderr and exit 1.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import fingerprint as fp
from .baselines import (
    dt_fit, dt_predict_batch, knn_predict_batch, nb_fit, nb_predict_batch,
)
from .config import (
    experiment_config_from, parse_config_file, scenario_config_from,
    train_config_from,
)
from .evaluate import (
    ExperimentConfig, accuracy, build_scenario_dataset, confusion_matrix,
    emit_results, render_confusion_figure, render_training_figure, run_sweep,
)
from .tdgcn import load_checkpoint, save_checkpoint, train, write_training_log


def _load_pairs(args):
    return parse_config_file(args.config) if args.config else {}


def _apply_standardization(ds, mean, std):
    seqs = [
        fp.FingerprintSequence(
            (s.data - mean[:, None]) / std[:, None], s.tx_index, s.slot_index
        )
        for s in ds.sequences
    ]
    return fp.LabeledDataset(seqs, ds.labels.copy(), ds.n_classes)


def _cmd_generate(args):
    pairs = _load_pairs(args)
    scenario = scenario_config_from(pairs)
    if args.snr_db is not None:
        scenario.snr_db = args.snr_db
    if args.no_irs:
        scenario.with_irs = False
    seed = args.seed if args.seed is not None else train_config_from(pairs).seed
    os.makedirs(args.out, exist_ok=True)

    # keep raw (unstandardized) sequences on disk; consumers re-scale
    chan = scenario.channel
    from .channel import add_awgn_batch, irs_phase_matrix, trace_cascade_matrices
    from .seeding import DOMAIN_NOISE, DOMAIN_PSI, DOMAIN_TRACE, make_rng

    psi = None
    if scenario.with_irs:
        psi = irs_phase_matrix(chan.n_irs_elements, make_rng(seed, DOMAIN_PSI))
    l = scenario.sequence_length
    per_class = []
    for tx in range(1, chan.n_transmitters + 1):
        cascades = trace_cascade_matrices(
            chan, tx, scenario.sequences_per_tx * l,
            make_rng(seed, DOMAIN_TRACE, tx), psi=psi, with_irs=scenario.with_irs,
        )
        flat = fp.flatten_csi_batch(cascades)
        if not math.isinf(scenario.snr_db):
            flat = add_awgn_batch(flat, scenario.snr_db, make_rng(seed, DOMAIN_NOISE, tx))
        per_class.append(fp.segment_sequences(flat, l, tx))
    ds = fp.build_dataset(per_class)
    out_path = os.path.join(args.out, "dataset.csif")
    fp.write_dataset(ds, out_path)
    print(f"wrote {out_path}: {len(ds)} sequences, K={ds.n_classes}, d={ds.d}, l={ds.l}")
    if args.csv:
        csv_path = os.path.join(args.out, "dataset.csv")
        fp.export_csv(ds, csv_path)
        print(f"wrote {csv_path}")
    return 0


def _cmd_train(args):
    pairs = _load_pairs(args)
    scenario = scenario_config_from(pairs)
    cfg = train_config_from(pairs)
    if args.seed is not None:
        cfg.seed = args.seed
    ds = fp.read_dataset(args.dataset)
    train_raw, test_raw = fp.split_train_test(ds, scenario.train_fraction)
    train_ds, test_ds, mean, std = fp.standardize(train_raw, test_raw)
    os.makedirs(args.out, exist_ok=True)
    model, history = train(train_ds, cfg, test_ds=test_ds)
    ckpt = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(model, ckpt, feature_mean=mean, feature_std=std)
    log_path = os.path.join(args.out, "train_log.csv")
    write_training_log(history, log_path)
    fp.write_dataset(test_raw, os.path.join(args.out, "test_split.csif"))
    render_training_figure(history, os.path.join(args.out, "train_curves.png"))
    last = history[-1]
    print(
        f"trained {cfg.epochs} epochs: loss {last.train_loss:.4f}, "
        f"train acc {last.train_acc:.4f}, test acc {last.test_acc:.4f}"
    )
    print(f"wrote {ckpt}, {log_path}, test_split.csif, train_curves.png")
    return 0


def _cmd_eval(args):
    model, mean, std = load_checkpoint(args.checkpoint)
    ds = fp.read_dataset(args.dataset)
    if mean is not None:
        ds = _apply_standardization(ds, mean, std)
    x, _ = ds.to_arrays()
    actual = ds.class_indices()
    predicted = model.predict(x)
    acc = accuracy(actual, predicted)
    cm = confusion_matrix(actual, predicted, ds.n_classes)
    print(f"accuracy {acc:.6f} over {len(ds)} sequences")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        cm_path = os.path.join(args.out, "confusion.csv")
        np.savetxt(cm_path, cm, fmt="%d", delimiter=",")
        render_confusion_figure(cm, os.path.join(args.out, "confusion.png"))
        print(f"wrote {cm_path}, confusion.png")
    return 0


def _cmd_baseline(args):
    pairs = _load_pairs(args)
    scenario = scenario_config_from(pairs)
    cfg = experiment_config_from(pairs)
    ds = fp.read_dataset(args.dataset)
    train_raw, test_raw = fp.split_train_test(ds, scenario.train_fraction)
    train_ds, test_ds, _, _ = fp.standardize(train_raw, test_raw)
    train_x, train_y = train_ds.to_flat()
    test_x, test_y = test_ds.to_flat()
    if args.method == "knn":
        train_pred = knn_predict_batch(train_x, train_y, train_x, cfg.knn_k)
        test_pred = knn_predict_batch(train_x, train_y, test_x, cfg.knn_k)
    elif args.method == "dt":
        tree = dt_fit(train_x, train_y, cfg.dt_max_depth)
        train_pred = dt_predict_batch(tree, train_x)
        test_pred = dt_predict_batch(tree, test_x)
    elif args.method == "nb":
        model = nb_fit(train_x, train_y)
        train_pred = nb_predict_batch(model, train_x)
        test_pred = nb_predict_batch(model, test_x)
    else:
        raise ValueError("baseline method must be one of knn, dt, nb")
    print(
        f"{args.method}: train acc {accuracy(train_y, train_pred):.6f}, "
        f"test acc {accuracy(test_y, test_pred):.6f}"
    )
    return 0


def _cmd_sweep(args):
    pairs = _load_pairs(args)
    cfg = experiment_config_from(pairs, seed=args.seed)
    if args.fixed_timing:
        cfg.wall_clock_timing = False
    os.makedirs(args.out, exist_ok=True)

    def progress(row):
        print(
            f"[{cfg.sweep_axis}={row.sweep_value} {row.method}] "
            f"train {row.train_acc:.4f} test {row.test_acc:.4f} "
            f"({row.seconds:.1f}s)"
        )

    rows = run_sweep(cfg, progress=progress)
    written = emit_results(rows, args.out, sweep_axis=cfg.sweep_axis)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csiauth",
        description="IRS-assisted CSI fingerprint authentication workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--seed", type=int, default=None, help="experiment seed")
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("generate", help="synthesize a CSIF dataset")
    common(p, out_default=".")
    p.add_argument("--snr-db", type=float, default=None,
                   help="noise level (use 'inf' for clean fingerprints)")
    p.add_argument("--no-irs", action="store_true",
                   help="direct Rayleigh links instead of the IRS cascade")
    p.add_argument("--csv", action="store_true", help="also export dataset.csv")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train the graph classifier")
    common(p, out_default=".")
    p.add_argument("dataset", help="CSIF file from `generate`")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--out", default=None, help="directory for confusion outputs")
    p.add_argument("checkpoint", help="checkpoint from `train`")
    p.add_argument("dataset", help="CSIF file to score")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="fit and evaluate a classical method")
    common(p)
    p.add_argument("--method", required=True, choices=["knn", "dt", "nb"])
    p.add_argument("dataset", help="CSIF file")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("sweep", help="run an experiment sweep")
    common(p, out_default=".")
    p.add_argument("--fixed-timing", action="store_true",
                   help="write 0.0 wall-clock seconds for byte-reproducible output")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single machine-readable failure line
        line = json.dumps({"type": type(exc).__name__, "message": str(exc)})
        print(f"error: {line}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
