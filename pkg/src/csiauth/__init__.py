"""IRS-assisted CSI fingerprint workbench.

Synthesizes cascade channel fingerprints for moving transmitters, trains
a temporal dynamic graph convolutional classifier to authenticate them,
and benchmarks classical baselines across SNR, spacing, speed, and IRS
ablation sweeps.
"""

from .channel import (
    ChannelConfig, ChannelRealization, Position3D, add_awgn, cascade_csi,
    generate_csi_trace, irs_phase_matrix, mobility_trace, path_loss_db,
    rician_channel, trace_cascade_matrices,
)
from .errors import ConfigError, FormatError, ShapeError, TrainingDivergedError
from .evaluate import (
    ExperimentConfig, ResultRow, ScenarioConfig, accuracy,
    build_scenario_dataset, confusion_matrix, emit_results, run_sweep,
)
from .fingerprint import (
    FingerprintSequence, LabeledDataset, build_dataset, flatten_csi,
    one_hot, read_dataset, segment_sequences, split_train_test,
    standardize, unflatten_csi, write_dataset,
)
from .tdgcn import (
    TDGCN, TrainConfig, cross_entropy, load_checkpoint, save_checkpoint,
    train,
)

__version__ = "0.1.0"
