"""Real multivariate time-series fingerprints from complex CSI, plus
labeled-dataset assembly, temporal splitting, and bit-exact CSIF files.

One fingerprint sample is the row-major real parts of the cascade matrix
followed by its row-major imaginary parts (length d = 2 * N_R * N_T);
a sequence is l consecutive samples transposed to a d x l matrix.
"""

import csv
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

CSIF_MAGIC = b"CSIF"
CSIF_VERSION = 1


@dataclass
class FingerprintSequence:
    data: np.ndarray  # (d, l) float64
    tx_index: int     # 1-based transmitter label
    slot_index: int   # temporal ordinal within the transmitter's stream

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"sequence data must be d x l, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sequence contains non-finite entries")


@dataclass
class LabeledDataset:
    sequences: list
    labels: np.ndarray  # (n, K) one-hot float64
    n_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if len(self.sequences) != self.labels.shape[0]:
            raise ValueError("sequence count does not match label count")
        if self.labels.ndim != 2 or self.labels.shape[1] != self.n_classes:
            raise ValueError(f"labels must be (n, {self.n_classes})")
        row_sums = self.labels.sum(axis=1)
        if not (np.all(row_sums == 1.0) and np.all((self.labels == 0) | (self.labels == 1))):
            raise ValueError("labels must be one-hot")

    def __len__(self):
        return len(self.sequences)

    @property
    def d(self):
        return self.sequences[0].data.shape[0]

    @property
    def l(self):
        return self.sequences[0].data.shape[1]

    def class_indices(self):
        """1-based label per sequence."""
        return self.labels.argmax(axis=1) + 1

    def per_class_counts(self):
        idx = self.class_indices()
        return [int(np.sum(idx == k)) for k in range(1, self.n_classes + 1)]

    def to_arrays(self):
        """Stacked (n, d, l) data and (n, K) labels for model training."""
        return np.stack([s.data for s in self.sequences]), self.labels.copy()

    def to_flat(self):
        """Row-major flattened (n, d*l) matrix and 1-based integer labels."""
        x = np.stack([s.data.ravel() for s in self.sequences])
        return x, self.class_indices()


def flatten_csi(x):
    """Complex (N_R, N_T) matrix -> real vector of length 2*N_R*N_T."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D CSI matrix, got shape {x.shape}")
    return np.concatenate([x.real.ravel(), x.imag.ravel()]).astype(np.float64)


def unflatten_csi(v, n_rx, n_tx):
    """Inverse of flatten_csi."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (2 * n_rx * n_tx,):
        raise ValueError(f"expected length {2 * n_rx * n_tx}, got {v.shape}")
    half = n_rx * n_tx
    return (v[:half] + 1j * v[half:]).reshape(n_rx, n_tx)


def flatten_csi_batch(matrices):
    """Vectorized flatten for an (n, N_R, N_T) complex stack -> (n, d)."""
    x = np.asarray(matrices)
    n = x.shape[0]
    return np.concatenate(
        [x.real.reshape(n, -1), x.imag.reshape(n, -1)], axis=1
    ).astype(np.float64)


def segment_sequences(samples, l, tx_index=1):
    """Chop a (n, d) sample stream into disjoint d x l sequences.

    n must be divisible by l; slot indices count up in temporal order.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("samples must be a (n, d) array")
    n = samples.shape[0]
    if l < 1 or n % l != 0:
        raise ValueError(f"{n} samples not divisible into windows of {l}")
    return [
        FingerprintSequence(samples[i * l : (i + 1) * l].T, tx_index, i)
        for i in range(n // l)
    ]


def one_hot(k, n_classes):
    """Length-K label vector with position k (1-based) set."""
    if not 1 <= k <= n_classes:
        raise IndexError(f"class {k} out of range 1..{n_classes}")
    v = np.zeros(n_classes)
    v[k - 1] = 1.0
    return v


def build_dataset(per_class_sequences):
    """Assemble a LabeledDataset from per-transmitter sequence lists.

    Input order defines classes 1..K; each list must already be
    slot-ordered.  tx_index fields are rewritten to match.
    """
    n_classes = len(per_class_sequences)
    sequences, labels = [], []
    for k, seqs in enumerate(per_class_sequences, start=1):
        for s in sorted(seqs, key=lambda q: q.slot_index):
            sequences.append(FingerprintSequence(s.data, k, s.slot_index))
            labels.append(one_hot(k, n_classes))
    return LabeledDataset(sequences, np.array(labels), n_classes)


def split_train_test(ds, train_fraction, shuffle_rng=None):
    """Per-class temporal split: earliest fraction to train, rest to test.

    Pass `shuffle_rng` to shuffle within each class before splitting
    (ablation mode that destroys the mobility-induced shift).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    train_parts, test_parts = [], []
    for k in range(1, ds.n_classes + 1):
        seqs = [s for s in ds.sequences if s.tx_index == k]
        seqs.sort(key=lambda s: s.slot_index)
        if shuffle_rng is not None:
            order = shuffle_rng.permutation(len(seqs))
            seqs = [seqs[i] for i in order]
        n_train = int(math.floor(train_fraction * len(seqs) + 1e-9))
        if n_train == 0 or n_train == len(seqs):
            raise ValueError(f"class {k} would be empty on one side of the split")
        train_parts.append(seqs[:n_train])
        test_parts.append(seqs[n_train:])
    return build_dataset(train_parts), build_dataset(test_parts)


def standardize(train_ds, test_ds=None, eps=1e-12):
    """Zero-mean unit-variance per fingerprint dimension, fit on train only.

    Returns (train', test', mean, std); test' is None when no test set is
    given.  Standard deviations below `eps` are clamped to 1.
    """
    stacked = np.concatenate([s.data for s in train_ds.sequences], axis=1)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    std = np.where(std < eps, 1.0, std)

    def apply(ds):
        seqs = [
            FingerprintSequence((s.data - mean[:, None]) / std[:, None], s.tx_index, s.slot_index)
            for s in ds.sequences
        ]
        return LabeledDataset(seqs, ds.labels.copy(), ds.n_classes)

    return apply(train_ds), (apply(test_ds) if test_ds is not None else None), mean, std


def write_dataset(ds, path):
    """Serialize to the CSIF container.

    Layout: magic "CSIF"; u32 version; u32 K; u32 per-class count; u32 d;
    u32 l; then one record per sequence (u32 class, u32 slot, d*l
    little-endian float64 row-major) in class-major slot-ascending order;
    trailing u32 CRC32 over everything after the magic.
    """
    counts = ds.per_class_counts()
    if len(set(counts)) != 1:
        raise ValueError(f"CSIF requires equal per-class counts, got {counts}")
    payload = bytearray()
    payload += struct.pack("<5I", CSIF_VERSION, ds.n_classes, counts[0], ds.d, ds.l)
    ordered = sorted(ds.sequences, key=lambda s: (s.tx_index, s.slot_index))
    for s in ordered:
        payload += struct.pack("<2I", s.tx_index, s.slot_index)
        payload += s.data.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CSIF_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF))


def read_dataset(path):
    """Parse a CSIF file back into a LabeledDataset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CSIF_MAGIC:
        raise FormatError("bad CSIF magic", 0)
    if len(blob) < 28:
        raise FormatError("truncated CSIF header", len(blob))
    payload = blob[4:-4]
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise FormatError("CSIF payload CRC mismatch", len(blob) - 4)
    version, n_classes, per_class, d, l = struct.unpack_from("<5I", blob, 4)
    if version != CSIF_VERSION:
        raise FormatError(f"unsupported CSIF version {version}", 4)
    record = 8 + 8 * d * l
    expected = 24 + n_classes * per_class * record + 4
    if len(blob) != expected:
        raise FormatError(
            f"CSIF length {len(blob)} does not match header (expected {expected})", 24
        )
    offset = 24
    per_class_lists = [[] for _ in range(n_classes)]
    for _ in range(n_classes * per_class):
        cls, slot = struct.unpack_from("<2I", blob, offset)
        if not 1 <= cls <= n_classes:
            raise FormatError(f"record class {cls} out of range", offset)
        data = np.frombuffer(
            blob[offset + 8 : offset + record], dtype="<f8"
        ).reshape(d, l)
        per_class_lists[cls - 1].append(
            FingerprintSequence(data.astype(np.float64), cls, slot)
        )
        offset += record
    return build_dataset(per_class_lists)


def export_csv(ds, path):
    """Inspection-friendly CSV: one row per (sequence, dimension)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sequence", "class", "slot", "dim"] + [f"t{t}" for t in range(ds.l)]
        )
        for i, s in enumerate(ds.sequences):
            for dim in range(ds.d):
                writer.writerow(
                    [i, s.tx_index, s.slot_index, dim]
                    + [repr(v) for v in s.data[dim]]
                )
