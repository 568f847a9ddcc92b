"""Channel simulator: path loss closed forms, Rician statistics, IRS
response, cascade algebra, mobility, and noise injection."""

import math

import numpy as np
import pytest

from csiauth.channel import (
    ChannelConfig, Position3D, add_awgn, add_awgn_batch, cascade_csi,
    db_to_gain, generate_csi_trace, irs_phase_matrix, mobility_trace,
    path_loss_db, rician_channel, trace_cascade_matrices,
)
from csiauth.errors import ShapeError
from csiauth.seeding import make_rng


class _FixedUniform:
    """rng stub returning preset uniform draws."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def uniform(self, low, high, size):
        assert size == self.values.size
        return self.values


class TestPathLoss:
    def test_los_at_10m(self):
        # 31.84 + 21.5*log10(10) + 19*log10(3.5)
        assert abs(path_loss_db(10.0, 3.5, los=True) - 63.67729284265524) < 1e-9

    def test_los_at_1m(self):
        assert abs(path_loss_db(1.0, 3.5, los=True) - 42.177292842655234) < 1e-9

    def test_monotone_in_distance(self):
        assert path_loss_db(20.0, 3.5, True) > path_loss_db(10.0, 3.5, True)
        dists = np.linspace(0.5, 300.0, 40)
        for los in (True, False):
            vals = [path_loss_db(d, 3.5, los) for d in dists]
            assert np.all(np.diff(vals) > 0)

    def test_nlos_lower_bounded_by_los(self):
        for d in (0.1, 1.0, 10.0, 250.0):
            assert path_loss_db(d, 3.5, False) >= path_loss_db(d, 3.5, True)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            path_loss_db(0.0, 3.5, True)
        with pytest.raises(ValueError):
            path_loss_db(-2.0, 3.5, True)
        with pytest.raises(ValueError):
            path_loss_db(5.0, 0.0, True)


class TestRician:
    def test_pure_los_limit_is_exact(self):
        rng = make_rng(0)
        los = np.exp(1j * np.linspace(0, 3, 6)).reshape(2, 3)
        out = rician_channel(2, 3, 1e12, 60.0, 70.0, rng, los=los)
        assert np.array_equal(out, math.sqrt(db_to_gain(60.0)) * los)

    def test_kappa_zero_is_pure_scatter(self):
        draws = make_rng(7).standard_normal((2, 2, 2))
        expected = math.sqrt(0.5) * (draws[0] + 1j * draws[1])
        out = rician_channel(2, 2, 0.0, 55.0, 0.0, make_rng(7))
        assert np.allclose(out, expected, atol=1e-15)

    def test_negative_kappa_rejected(self):
        with pytest.raises(ValueError):
            rician_channel(2, 2, -1.0, 60.0, 60.0, make_rng(0))

    def test_empirical_k_factor_kappa3(self):
        # LoS power over mean scatter power across 1e5 draws, equal path loss
        rng = make_rng(42)
        n = 100_000
        scatter = math.sqrt(0.5) * (
            rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
        )
        kappa = 3.0
        draws = math.sqrt(kappa / (1 + kappa)) + math.sqrt(1 / (1 + kappa)) * scatter
        mean = draws.mean(axis=0)
        khat = (np.abs(mean) ** 2 / np.mean(np.abs(draws - mean) ** 2, axis=0)).mean()
        assert 2.85 <= khat <= 3.15

    def test_k_factor_through_rician_channel(self):
        rng = make_rng(9)
        n = 20_000
        stack = np.stack([rician_channel(2, 2, 4.0, 0.0, 0.0, rng) for _ in range(n)])
        mean = stack.mean(axis=0)
        khat = (np.abs(mean) ** 2 / np.mean(np.abs(stack - mean) ** 2, axis=0)).mean()
        assert abs(khat - 4.0) / 4.0 < 0.08


class TestIrsPhase:
    def test_euler_identity(self):
        psi = irs_phase_matrix(1, _FixedUniform([math.pi]))
        assert np.allclose(psi, [[-1.0 + 0.0j]], atol=1e-12)

    def test_unit_modulus(self):
        psi = irs_phase_matrix(128, make_rng(3))
        mags = np.abs(np.diag(psi))
        assert np.max(np.abs(mags - 1.0)) <= 1e-12
        assert np.count_nonzero(psi - np.diag(np.diag(psi))) == 0

    def test_deterministic_per_seed(self):
        assert np.array_equal(
            irs_phase_matrix(16, make_rng(5)), irs_phase_matrix(16, make_rng(5))
        )

    def test_magnitude_preserved_per_element(self):
        psi = irs_phase_matrix(8, make_rng(1))
        v = make_rng(2).standard_normal(8) + 1j * make_rng(3).standard_normal(8)
        assert np.allclose(np.abs(np.diag(psi) * v), np.abs(v), atol=1e-12)


class TestCascade:
    def test_identity_phase(self):
        rng = make_rng(0)
        h = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        g = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        assert np.allclose(cascade_csi(h, np.eye(5), g), h @ g, atol=1e-14)

    def test_hand_scalar_product(self):
        out = cascade_csi(
            np.array([[2.0 + 0j]]), np.array([[np.exp(1j * np.pi)]]), np.array([[3.0 + 0j]])
        )
        assert abs(out[0, 0] - (-6.0)) < 1e-9

    def test_table_shapes(self):
        rng = make_rng(4)
        h = rng.standard_normal((3, 128)) * (1 + 0j)
        psi = irs_phase_matrix(128, rng)
        g = rng.standard_normal((128, 4)) * (1 + 0j)
        assert cascade_csi(h, psi, g).shape == (3, 4)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            cascade_csi(np.ones((3, 4)), np.eye(5), np.ones((5, 2)))

    def test_associativity(self):
        rng = make_rng(11)
        h = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
        psi = irs_phase_matrix(16, rng)
        g = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
        left = (h @ psi) @ g
        right = h @ (psi @ g)
        assert np.max(np.abs(left - right)) / np.max(np.abs(left)) < 1e-10


class TestMobility:
    def test_second_sample_step(self):
        trace = mobility_trace(Position3D(10, 82, 0), (0, 2, 0), 3, 100.0)
        assert trace[1] == Position3D(10.0, 82.02, 0.0)

    def test_static_velocity(self):
        trace = mobility_trace(Position3D(1, 2, 3), (0, 0, 0), 5, 100.0)
        assert all(p == Position3D(1, 2, 3) for p in trace)

    def test_span_kinematics(self):
        # 50000 samples at 100 Hz cover 500 s; 2 m/s walks 1000 m
        n, fs, speed = 50_000, 100.0, 2.0
        assert n / fs == 500.0
        assert speed * (n / fs) == 1000.0
        trace = mobility_trace(Position3D(0, 0, 0), (0, speed, 0), n, fs)
        k = 31_234
        assert abs(trace[k].y - speed * k / fs) < 1e-9


def tiny_config(**kw):
    defaults = dict(
        n_tx_antennas=2, n_rx_antennas=2, irs_rows=2, irs_cols=2,
        alice_positions=[Position3D(10, 80, 0), Position3D(10, 84, 0)],
        eve_positions=[],
    )
    defaults.update(kw)
    return ChannelConfig(**defaults)


class TestTrace:
    def test_realization_count_and_consistency(self):
        cfg = tiny_config()
        trace = generate_csi_trace(cfg, 1, 40, make_rng(0))
        assert len(trace) == 40
        for r in trace[:5]:
            assert np.allclose(r.x, r.h @ r.psi @ r.g, atol=1e-12)
            assert np.max(np.abs(np.abs(np.diag(r.psi)) - 1.0)) < 1e-12

    def test_full_scale_sample_count(self):
        cfg = tiny_config()
        x = trace_cascade_matrices(cfg, 1, 50_000, make_rng(0))
        assert x.shape == (50_000, 2, 2)

    def test_matches_realization_path(self):
        cfg = tiny_config()
        psi = irs_phase_matrix(cfg.n_irs_elements, make_rng(99))
        full = generate_csi_trace(cfg, 2, 25, make_rng(5), psi=psi)
        lean = trace_cascade_matrices(cfg, 2, 25, make_rng(5), psi=psi)
        assert np.array_equal(np.stack([r.x for r in full]), lean)

    def test_distinct_transmitters_distinct_fingerprints(self):
        cfg = tiny_config()
        psi = irs_phase_matrix(cfg.n_irs_elements, make_rng(1))
        a = trace_cascade_matrices(cfg, 1, 50, make_rng(2), psi=psi)
        b = trace_cascade_matrices(cfg, 2, 50, make_rng(3), psi=psi)
        assert np.mean(np.abs(a - b)) > 0

    def test_deterministic(self):
        cfg = tiny_config()
        a = trace_cascade_matrices(cfg, 1, 64, make_rng(8))
        b = trace_cascade_matrices(cfg, 1, 64, make_rng(8))
        assert a.tobytes() == b.tobytes()

    def test_tx_at_irs_position_rejected(self):
        cfg = tiny_config(
            alice_positions=[Position3D(5, 50, 5), Position3D(10, 84, 0)]
        )
        with pytest.raises(ValueError, match="coincides"):
            trace_cascade_matrices(cfg, 1, 4, make_rng(0))

    def test_direct_mode_shapes(self):
        cfg = tiny_config()
        x = trace_cascade_matrices(cfg, 1, 30, make_rng(0), with_irs=False)
        assert x.shape == (30, 2, 2)

    def test_min_separation_enforced(self):
        with pytest.raises(ValueError, match="half a wavelength"):
            tiny_config(alice_positions=[
                Position3D(10, 80, 0), Position3D(10, 80.01, 0),
            ])


class TestAwgn:
    def test_infinite_snr_identity(self):
        x = make_rng(0).standard_normal(24)
        assert np.array_equal(add_awgn(x, math.inf, make_rng(1)), x)

    def test_empirical_snr_15db(self):
        rng = make_rng(21)
        x = make_rng(3).standard_normal(24) * 2.0
        clean = np.tile(x, (100_000, 1))
        noised = add_awgn_batch(clean, 15.0, rng)
        snr = 10 * np.log10(np.sum(clean ** 2) / np.sum((noised - clean) ** 2))
        assert 14.9 <= snr <= 15.1

    def test_zero_db_noise_power_matches_signal(self):
        rng = make_rng(22)
        x = make_rng(4).standard_normal(24)
        clean = np.tile(x, (100_000, 1))
        noised = add_awgn_batch(clean, 0.0, rng)
        ratio = np.sum((noised - clean) ** 2) / np.sum(clean ** 2)
        assert abs(ratio - 1.0) < 0.02

    def test_zero_power_rejected(self):
        with pytest.raises(ValueError):
            add_awgn(np.zeros(8), 10.0, make_rng(0))
        assert np.array_equal(add_awgn(np.zeros(8), math.inf, make_rng(0)), np.zeros(8))
