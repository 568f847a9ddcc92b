"""Key-value config files for scenarios, training, and sweeps.

Format: one `key = value` pair per line, `#` starts a comment, blank
lines ignored.  Positions are `x,y,z` triples; position lists separate
triples with `;`.  Unknown keys raise, so typos fail fast.

Recognized keys (all optional, defaults in parentheses):

  channel:
    n_tx_antennas (4)        n_rx_antennas (3)
    irs_rows (8)             irs_cols (16)
    carrier_ghz (3.5)        bandwidth_hz (1e6)
    rice_kappa_h (3)         rice_kappa_g (4)
    tx_speed_mps (2)         sample_rate_hz (100)
    bob_position (0,0,2)     irs_position (5,50,5)
    alice_positions (10,82,0; 10,84,0; 10,86,0; 10,88,0)
    eve_positions (10,70,0; 10,95,0)

  scenario:
    sequences_per_tx (1000)  sequence_length (50)
    snr_db (inf)             with_irs (true)
    train_fraction (0.6)     noise_split (both | test)

  training:
    lr (1e-4)    weight_decay (1e-4)   batch_size (16)   epochs (50)
    n_slots (5)  pooling_ratio (0.2)   theta (0.01)      seed (42)

  sweep:
    sweep_axis (snr_db | alice_spacing | speed | irs)
    sweep_values (0,10,20,30)          methods (tdgcn,knn,dt,nb)
    knn_k (5)    dt_max_depth (12)     wall_clock_timing (true)
"""

import math

from .channel import ChannelConfig, Position3D
from .errors import ConfigError
from .evaluate import ExperimentConfig, ScenarioConfig
from .tdgcn import TrainConfig

_CHANNEL_KEYS = {
    "n_tx_antennas": int, "n_rx_antennas": int, "irs_rows": int, "irs_cols": int,
    "carrier_ghz": float, "rice_kappa_h": float, "rice_kappa_g": float,
    "bandwidth_hz": float, "tx_speed_mps": float, "sample_rate_hz": float,
    "bob_position": "position", "irs_position": "position",
    "alice_positions": "positions", "eve_positions": "positions",
}
_SCENARIO_KEYS = {
    "sequences_per_tx": int, "sequence_length": int, "snr_db": float,
    "with_irs": bool, "train_fraction": float, "noise_split": str,
}
_TRAIN_KEYS = {
    "lr": float, "weight_decay": float, "batch_size": int, "epochs": int,
    "n_slots": int, "pooling_ratio": float, "theta": float, "seed": int,
}
_SWEEP_KEYS = {
    "sweep_axis": str, "sweep_values": "values", "methods": "strings",
    "knn_k": int, "dt_max_depth": int, "wall_clock_timing": bool,
}
_ALL_KEYS = {**_CHANNEL_KEYS, **_SCENARIO_KEYS, **_TRAIN_KEYS, **_SWEEP_KEYS}


def parse_config_text(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _to_bool(value):
    low = value.lower()
    if low in ("true", "on", "yes", "1"):
        return True
    if low in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"cannot parse boolean from {value!r}")


def _to_float(value):
    low = value.lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    return float(value)


def _to_position(value):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"position needs three coordinates, got {value!r}")
    return Position3D(*(float(p) for p in parts))


def _convert(key, value):
    kind = _ALL_KEYS[key]
    if kind is int:
        return int(value)
    if kind is float:
        return _to_float(value)
    if kind is bool:
        return _to_bool(value)
    if kind is str:
        return value
    if kind == "position":
        return _to_position(value)
    if kind == "positions":
        return [_to_position(chunk) for chunk in value.split(";") if chunk.strip()]
    if kind == "strings":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if kind == "values":  # numbers, or on/off tokens for the IRS axis
        out = []
        for tok in (v.strip() for v in value.split(",") if v.strip()):
            try:
                out.append(_to_float(tok))
            except ValueError:
                out.append(tok)
        return tuple(out)
    raise AssertionError(kind)


def _collect(pairs, keys):
    return {k: _convert(k, pairs[k]) for k in keys if k in pairs}


def channel_config_from(pairs):
    return ChannelConfig(**_collect(pairs, _CHANNEL_KEYS))


def scenario_config_from(pairs):
    return ScenarioConfig(channel=channel_config_from(pairs), **_collect(pairs, _SCENARIO_KEYS))


def train_config_from(pairs):
    return TrainConfig(**_collect(pairs, _TRAIN_KEYS))


def experiment_config_from(pairs, seed=None):
    train_cfg = train_config_from(pairs)
    kwargs = _collect(pairs, _SWEEP_KEYS)
    cfg = ExperimentConfig(
        scenario=scenario_config_from(pairs),
        train=train_cfg,
        seed=train_cfg.seed if seed is None else seed,
        **kwargs,
    )
    return cfg
