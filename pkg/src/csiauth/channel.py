"""Synthetic cascade CSI traces for moving transmitters reflected off an IRS.

Geometry conventions (all positions in meters):
  * the receiver (Bob) carries a uniform linear array along the x axis,
  * each transmitter carries a uniform linear array along the x axis,
  * the IRS is a vertical uniform planar array with rows along z and
    columns along x, element spacing half a wavelength everywhere.

Large-scale fading follows the 3GPP TR 38.901 indoor-factory scenario
(InF-LoS for the deterministic path, InF-SL for the diffuse path), and
small-scale fading is Rician: a geometric line-of-sight steering matrix
plus i.i.d. circular complex Gaussian scatter, mixed by the K-factor.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

C_LIGHT = 299_792_458.0

# limit on kappa beyond which the diffuse component is dropped entirely
KAPPA_PURE_LOS = 1e12

_TRACE_CHUNK = 4096


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {(self.x, self.y, self.z)}")

    def as_array(self):
        return np.array([self.x, self.y, self.z])

    def distance_to(self, other):
        return float(np.linalg.norm(self.as_array() - other.as_array()))


def _as_position(p):
    return p if isinstance(p, Position3D) else Position3D(*p)


@dataclass
class ChannelConfig:
    """Scenario parameters; defaults reproduce the reference setup."""

    n_tx_antennas: int = 4
    n_rx_antennas: int = 3
    irs_rows: int = 8
    irs_cols: int = 16
    carrier_ghz: float = 3.5
    rice_kappa_h: float = 3.0
    rice_kappa_g: float = 4.0
    bandwidth_hz: float = 1e6
    tx_speed_mps: float = 2.0
    sample_rate_hz: float = 100.0
    bob_position: Position3D = field(default_factory=lambda: Position3D(0.0, 0.0, 2.0))
    irs_position: Position3D = field(default_factory=lambda: Position3D(5.0, 50.0, 5.0))
    alice_positions: list = field(default_factory=lambda: [
        Position3D(10.0, 82.0, 0.0),
        Position3D(10.0, 84.0, 0.0),
        Position3D(10.0, 86.0, 0.0),
        Position3D(10.0, 88.0, 0.0),
    ])
    eve_positions: list = field(default_factory=lambda: [
        Position3D(10.0, 70.0, 0.0),
        Position3D(10.0, 95.0, 0.0),
    ])

    def __post_init__(self):
        self.bob_position = _as_position(self.bob_position)
        self.irs_position = _as_position(self.irs_position)
        self.alice_positions = [_as_position(p) for p in self.alice_positions]
        self.eve_positions = [_as_position(p) for p in self.eve_positions]
        if min(self.n_tx_antennas, self.n_rx_antennas, self.irs_rows, self.irs_cols) < 1:
            raise ValueError("antenna and IRS element counts must be >= 1")
        if self.rice_kappa_h < 0 or self.rice_kappa_g < 0:
            raise ValueError("Rice factors must be non-negative")
        if self.carrier_ghz <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("carrier frequency and sample rate must be positive")
        half_wl = 0.5 * self.wavelength_m
        txs = self.tx_positions
        for i in range(len(txs)):
            for j in range(i + 1, len(txs)):
                if txs[i].distance_to(txs[j]) <= half_wl:
                    raise ValueError(
                        f"transmitters {i + 1} and {j + 1} are closer than half a wavelength"
                    )

    @property
    def wavelength_m(self):
        return C_LIGHT / (self.carrier_ghz * 1e9)

    @property
    def n_irs_elements(self):
        return self.irs_rows * self.irs_cols

    @property
    def tx_positions(self):
        return list(self.alice_positions) + list(self.eve_positions)

    @property
    def n_transmitters(self):
        return len(self.alice_positions) + len(self.eve_positions)


@dataclass
class ChannelRealization:
    """One sampled cascade: x = h @ psi @ g (components absent for the
    direct-link ablation, where x is a plain Rayleigh draw)."""

    h: np.ndarray
    g: np.ndarray
    psi: np.ndarray
    x: np.ndarray
    tx_position: Position3D
    timestamp_s: float


def path_loss_db(dist_m, fc_ghz, los=True):
    """3GPP TR 38.901 indoor-factory path loss in dB.

    LoS:  31.84 + 21.5 log10(d) + 19 log10(fc)
    NLoS (InF-SL), lower-bounded by the LoS value:
          33 + 25.5 log10(d) + 20 log10(fc)
    """
    if dist_m <= 0:
        raise ValueError(f"distance must be positive, got {dist_m}")
    if fc_ghz <= 0:
        raise ValueError(f"carrier frequency must be positive, got {fc_ghz}")
    pl_los = 31.84 + 21.5 * math.log10(dist_m) + 19.0 * math.log10(fc_ghz)
    if los:
        return pl_los
    pl_sl = 33.0 + 25.5 * math.log10(dist_m) + 20.0 * math.log10(fc_ghz)
    return max(pl_los, pl_sl)


def db_to_gain(loss_db):
    """Linear power gain corresponding to a positive dB loss."""
    return 10.0 ** (-loss_db / 10.0)


def _array_response(offsets, direction):
    """Phases of a half-wavelength-spaced array toward a unit direction.

    `offsets` holds element coordinates in half-wavelength units (n, 3);
    the response is exp(j*pi*(offsets . direction)), each entry unit modulus.
    """
    return np.exp(1j * np.pi * (offsets @ direction))


def _ula_offsets(n):
    out = np.zeros((n, 3))
    out[:, 0] = np.arange(n)
    return out


def _upa_offsets(rows, cols):
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    out = np.zeros((rows * cols, 3))
    out[:, 0] = cc.ravel()  # columns along x
    out[:, 2] = rr.ravel()  # rows along z
    return out


def _unit(vec):
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("zero-length direction (coincident positions)")
    return vec / norm


def los_steering(rx_offsets, tx_offsets, rx_pos, tx_pos):
    """Unit-modulus LoS matrix between two arrays at given positions."""
    direction = _unit(np.asarray(tx_pos, dtype=float) - np.asarray(rx_pos, dtype=float))
    a_rx = _array_response(rx_offsets, direction)
    a_tx = _array_response(tx_offsets, -direction)
    return np.outer(a_rx, np.conj(a_tx))


def rician_channel(rows, cols, kappa, pl_los_db, pl_nlos_db, rng, los=None):
    """Draw one Rician channel matrix.

    Output: sqrt(G_los * k/(1+k)) * LOS + sqrt(G_nlos / (1+k)) * SCATTER,
    with G_* the linear gains of the dB losses, LOS a unit-modulus
    deterministic matrix (all-ones when not supplied) and SCATTER i.i.d.
    standard circular complex Gaussian.  kappa >= KAPPA_PURE_LOS yields
    exactly sqrt(G_los) * LOS.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    if los is None:
        los = np.ones((rows, cols), dtype=complex)
    elif los.shape != (rows, cols):
        raise ShapeError(f"los component {los.shape} does not match ({rows}, {cols})")
    gain_los = db_to_gain(pl_los_db)
    if kappa >= KAPPA_PURE_LOS:
        return math.sqrt(gain_los) * los
    gain_nlos = db_to_gain(pl_nlos_db)
    scatter = math.sqrt(0.5) * (
        rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    )
    return (
        math.sqrt(gain_los * kappa / (1.0 + kappa)) * los
        + math.sqrt(gain_nlos / (1.0 + kappa)) * scatter
    )


def irs_phase_matrix(m_elements, rng):
    """Diagonal unit-modulus element response with phases uniform on [0, 2pi)."""
    if m_elements < 1:
        raise ValueError("need at least one IRS element")
    theta = rng.uniform(0.0, 2.0 * np.pi, m_elements)
    return np.diag(np.exp(1j * theta))


def cascade_csi(h, psi, g):
    """Compose the cascade x = h @ psi @ g."""
    h, psi, g = np.asarray(h), np.asarray(psi), np.asarray(g)
    if h.ndim != 2 or psi.ndim != 2 or g.ndim != 2:
        raise ShapeError("cascade_csi expects 2-D matrices")
    if psi.shape[0] != psi.shape[1] or h.shape[1] != psi.shape[0] or psi.shape[1] != g.shape[0]:
        raise ShapeError(
            f"non-conformable cascade shapes {h.shape}, {psi.shape}, {g.shape}"
        )
    return h @ psi @ g


def mobility_trace(start, velocity, n_samples, sample_rate_hz):
    """Constant-velocity positions sampled at sample_rate_hz."""
    if sample_rate_hz <= 0:
        raise ValueError("sample rate must be positive")
    start = _as_position(start)
    vx, vy, vz = velocity
    dt = 1.0 / sample_rate_hz
    return [
        Position3D(start.x + vx * k * dt, start.y + vy * k * dt, start.z + vz * k * dt)
        for k in range(n_samples)
    ]


def _position_array(start, velocity, n_samples, sample_rate_hz):
    start = _as_position(start)
    t = np.arange(n_samples)[:, None] / sample_rate_hz
    return start.as_array()[None, :] + t * np.asarray(velocity, dtype=float)[None, :]


def _steering_tx_to_irs(cfg, tx_points):
    """Vectorized LoS matrices (n, M, N_T) for transmitter positions (n, 3)."""
    irs = cfg.irs_position.as_array()
    directions = tx_points - irs[None, :]
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0):
        raise ValueError("transmitter position coincides with the IRS")
    units = directions / norms[:, None]
    irs_off = _upa_offsets(cfg.irs_rows, cfg.irs_cols)
    tx_off = _ula_offsets(cfg.n_tx_antennas)
    a_irs = np.exp(1j * np.pi * (units @ irs_off.T))  # (n, M)
    a_tx = np.exp(1j * np.pi * ((-units) @ tx_off.T))  # (n, N_T)
    return a_irs[:, :, None] * np.conj(a_tx)[:, None, :], norms


def _trace_chunks(cfg, tx_index, n_samples, rng, psi, with_irs):
    """Yield (start, positions, h, g, x) chunks sharing one rng stream.

    Both the realization-building and the fingerprint-only consumers walk
    this generator, so traces are bit-identical regardless of the caller.
    """
    if not 1 <= tx_index <= cfg.n_transmitters:
        raise IndexError(f"tx_index {tx_index} out of range 1..{cfg.n_transmitters}")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    start = cfg.tx_positions[tx_index - 1]
    velocity = (0.0, cfg.tx_speed_mps, 0.0)
    points = _position_array(start, velocity, n_samples, cfg.sample_rate_hz)
    n_r, n_t, m = cfg.n_rx_antennas, cfg.n_tx_antennas, cfg.n_irs_elements
    fc = cfg.carrier_ghz

    if with_irs:
        dist_ib = cfg.irs_position.distance_to(cfg.bob_position)
        pl_h_los = path_loss_db(dist_ib, fc, los=True)
        pl_h_nlos = path_loss_db(dist_ib, fc, los=False)
        hbar = los_steering(
            _ula_offsets(n_r), _upa_offsets(cfg.irs_rows, cfg.irs_cols),
            cfg.bob_position.as_array(), cfg.irs_position.as_array(),
        )
        kh, kg = cfg.rice_kappa_h, cfg.rice_kappa_g
        if kh >= KAPPA_PURE_LOS:
            ch_los, ch_nlos = math.sqrt(db_to_gain(pl_h_los)), 0.0
        else:
            ch_los = math.sqrt(db_to_gain(pl_h_los) * kh / (1.0 + kh))
            ch_nlos = math.sqrt(db_to_gain(pl_h_nlos) / (1.0 + kh))
        psi_diag = np.diag(psi)
    else:
        bob = cfg.bob_position.as_array()

    for lo in range(0, n_samples, _TRACE_CHUNK):
        hi = min(lo + _TRACE_CHUNK, n_samples)
        c = hi - lo
        pts = points[lo:hi]
        if with_irs:
            gbar, dists = _steering_tx_to_irs(cfg, pts)
            pl_g_los = 31.84 + 21.5 * np.log10(dists) + 19.0 * math.log10(fc)
            pl_g_nlos = np.maximum(pl_g_los, 33.0 + 25.5 * np.log10(dists) + 20.0 * math.log10(fc))
            if kg >= KAPPA_PURE_LOS:
                cg_los = np.sqrt(10.0 ** (-pl_g_los / 10.0))
                cg_nlos = np.zeros_like(cg_los)
            else:
                cg_los = np.sqrt(10.0 ** (-pl_g_los / 10.0) * kg / (1.0 + kg))
                cg_nlos = np.sqrt(10.0 ** (-pl_g_nlos / 10.0) / (1.0 + kg))
            h_sc = math.sqrt(0.5) * (
                rng.standard_normal((c, n_r, m)) + 1j * rng.standard_normal((c, n_r, m))
            )
            g_sc = math.sqrt(0.5) * (
                rng.standard_normal((c, m, n_t)) + 1j * rng.standard_normal((c, m, n_t))
            )
            h = ch_los * hbar[None, :, :] + ch_nlos * h_sc
            g = cg_los[:, None, None] * gbar + cg_nlos[:, None, None] * g_sc
            x = (h * psi_diag[None, None, :]) @ g
            yield lo, pts, h, g, x
        else:
            dists = np.linalg.norm(pts - bob[None, :], axis=1)
            if np.any(dists == 0):
                raise ValueError("transmitter position coincides with the receiver")
            pl = np.maximum(
                31.84 + 21.5 * np.log10(dists) + 19.0 * math.log10(fc),
                33.0 + 25.5 * np.log10(dists) + 20.0 * math.log10(fc),
            )
            amp = np.sqrt(10.0 ** (-pl / 10.0))
            x = amp[:, None, None] * math.sqrt(0.5) * (
                rng.standard_normal((c, n_r, n_t)) + 1j * rng.standard_normal((c, n_r, n_t))
            )
            yield lo, pts, None, None, x


def generate_csi_trace(cfg, tx_index, n_samples, rng, psi=None):
    """Full cascade realizations for one moving transmitter.

    The IRS response `psi` is drawn from `rng` when not supplied; pass a
    shared matrix to keep it fixed across transmitters of one experiment.
    """
    if psi is None:
        psi = irs_phase_matrix(cfg.n_irs_elements, rng)
    out = []
    dt = 1.0 / cfg.sample_rate_hz
    for lo, pts, h, g, x in _trace_chunks(cfg, tx_index, n_samples, rng, psi, True):
        for i in range(x.shape[0]):
            out.append(ChannelRealization(
                h=h[i], g=g[i], psi=psi, x=x[i],
                tx_position=Position3D(*pts[i]), timestamp_s=(lo + i) * dt,
            ))
    return out


def trace_cascade_matrices(cfg, tx_index, n_samples, rng, psi=None, with_irs=True):
    """Cascade matrices only, stacked as (n_samples, N_R, N_T).

    Memory-lean companion to generate_csi_trace for dataset generation;
    identical random stream.  With with_irs=False the cascade is replaced
    by a direct Rayleigh link between transmitter and receiver.
    """
    if with_irs and psi is None:
        psi = irs_phase_matrix(cfg.n_irs_elements, rng)
    out = np.empty((n_samples, cfg.n_rx_antennas, cfg.n_tx_antennas), dtype=complex)
    for lo, _, _, _, x in _trace_chunks(cfg, tx_index, n_samples, rng, psi, with_irs):
        out[lo : lo + x.shape[0]] = x
    return out


def add_awgn(x_flat, snr_db, rng):
    """Add white Gaussian noise at the requested SNR relative to the
    mean squared magnitude of the input vector."""
    x = np.asarray(x_flat, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    power = float(np.mean(x * x))
    if power == 0.0:
        raise ValueError("zero-power signal cannot be noised at finite SNR")
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    return x + sigma * rng.standard_normal(x.shape)


def add_awgn_batch(samples, snr_db, rng):
    """Row-wise add_awgn for a (n, d) stack of flattened fingerprints."""
    x = np.asarray(samples, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    power = np.mean(x * x, axis=1)
    if np.any(power == 0.0):
        raise ValueError("zero-power fingerprint cannot be noised at finite SNR")
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return x + sigma[:, None] * rng.standard_normal(x.shape)
