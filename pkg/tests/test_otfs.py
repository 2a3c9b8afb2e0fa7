import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from otfs_pacesd.otfs import (
    QPSK,
    DdFrame,
    FrameConfig,
    apply_dd_channel,
    apply_path,
    beam_gain,
    build_path_operator,
    cyclic_shift,
    cyclic_shift_operator,
    dft_matrix,
    doppler_phase_operator,
    otfs_demodulate,
    otfs_modulate,
    steering_vector,
)


def kron_modulator(cfg):
    # independent oracle: explicit (F_N^H kron I_M)
    return np.kron(dft_matrix(cfg.N).conj().T, np.eye(cfg.M))


class TestFrameConfig:
    def test_derived_quantities(self):
        cfg = FrameConfig(16, 8, delta_f=15e3)
        assert cfg.T * cfg.delta_f == 1.0
        assert cfg.frame_len == 128

    @pytest.mark.parametrize("kw", [
        dict(M=0, N=2),
        dict(M=2, N=0),
        dict(M=2, N=2, alphabet=(1, 1)),
        dict(M=2, N=2, alphabet=(2, -2)),
        dict(M=2, N=2, alphabet=()),
        dict(M=2, N=2, pulse="rrc"),
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            FrameConfig(**kw)

    def test_qpsk_unit_energy(self):
        assert np.mean(np.abs(np.array(QPSK)) ** 2) == pytest.approx(1.0, abs=1e-15)


class TestDdFrame:
    def test_column_major_vectorization(self, rng):
        X = crandn(rng, 4, 3)
        fr = DdFrame.from_grid(X)
        for m in range(4):
            for n in range(3):
                assert fr.x[m + n * 4] == X[m, n]
        np.testing.assert_array_equal(fr.X, X)

    def test_validate(self):
        cfg = FrameConfig(2, 2)
        x = np.array([QPSK[0], QPSK[1], 0.3 + 0.1j, QPSK[2]])
        mask = np.array([False, False, True, False])
        DdFrame(x, mask, 2, 2).validate(cfg)
        with pytest.raises(ValueError):
            DdFrame(x, np.zeros(4, bool), 2, 2).validate(cfg)
        with pytest.raises(ValueError):
            DdFrame(x, mask, 2, 2).validate(FrameConfig(4, 1))

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            DdFrame(np.zeros(5), np.zeros(5, bool), 2, 2)


class TestDft:
    def test_n1(self):
        np.testing.assert_array_equal(dft_matrix(1), [[1]])

    def test_n2(self):
        np.testing.assert_allclose(dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)

    @pytest.mark.parametrize("n", list(range(1, 65)))
    def test_unitary(self, n):
        F = dft_matrix(n)
        assert np.max(np.abs(F @ F.conj().T - np.eye(n))) < 1e-12

    def test_matches_fft(self, rng):
        v = crandn(rng, 8)
        np.testing.assert_allclose(dft_matrix(8) @ v, np.fft.fft(v, norm="ortho"), atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            dft_matrix(0)


class TestModulation:
    def test_n1_identity(self, rng):
        cfg = FrameConfig(5, 1)
        x = crandn(rng, 5)
        np.testing.assert_allclose(otfs_modulate(x, cfg), x, atol=1e-15)

    def test_constant_first_row(self):
        cfg = FrameConfig(4, 2)
        X = np.zeros((4, 2), dtype=complex)
        X[0, :] = 0.7 - 0.2j
        x = X.reshape(-1, order="F")
        s = otfs_modulate(x, cfg)
        np.testing.assert_allclose(s, kron_modulator(cfg) @ x, atol=1e-12)
        # the delay-0 row collapses onto the first time slot: c*sqrt(N) there, zero elsewhere
        assert s[0] == pytest.approx((0.7 - 0.2j) * np.sqrt(2))
        np.testing.assert_allclose(s[1:], 0, atol=1e-12)

    def test_demodulate_zero(self):
        cfg = FrameConfig(3, 2)
        np.testing.assert_array_equal(otfs_demodulate(np.zeros(6), cfg), np.zeros(6))

    def test_demodulate_kron_oracle(self, rng):
        cfg = FrameConfig(2, 2)
        r = crandn(rng, 4)
        F = np.kron(dft_matrix(2), np.eye(2))
        np.testing.assert_allclose(otfs_demodulate(r, cfg), F @ r, atol=1e-12)

    def test_accepts_frame_and_batch(self, rng):
        cfg = FrameConfig(4, 2)
        B = crandn(rng, 8, 3)
        out = otfs_modulate(B, cfg)
        np.testing.assert_allclose(out, kron_modulator(cfg) @ B, atol=1e-12)
        fr = DdFrame(B[:, 0], np.zeros(8, bool), 4, 2)
        np.testing.assert_allclose(otfs_modulate(fr, cfg), out[:, 0], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            otfs_modulate(np.zeros(7), FrameConfig(4, 2))
        with pytest.raises(ValueError):
            otfs_demodulate(np.zeros(9), FrameConfig(4, 2))

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_round_trip_and_energy(self, M, N, seed):
        cfg = FrameConfig(M, N)
        x = crandn(np.random.default_rng(seed), M * N)
        s = otfs_modulate(x, cfg)
        assert np.linalg.norm(s) == pytest.approx(np.linalg.norm(x), rel=1e-12)
        assert np.linalg.norm(otfs_demodulate(s, cfg) - x) < 1e-12
        np.testing.assert_allclose(s, kron_modulator(cfg) @ x, atol=1e-12)


class TestShiftsAndPhases:
    def test_shift_identity(self, rng):
        v = rng.standard_normal(6)
        np.testing.assert_array_equal(cyclic_shift(v, 0), v)
        np.testing.assert_array_equal(cyclic_shift_operator(0, 6), np.eye(6))

    def test_shift_example(self):
        np.testing.assert_array_equal(cyclic_shift_operator(1, 4) @ [1, 2, 3, 4], [4, 1, 2, 3])
        np.testing.assert_array_equal(cyclic_shift(np.array([1, 2, 3, 4]), 1), [4, 1, 2, 3])

    @given(st.integers(1, 20), st.data())
    def test_shift_composition(self, dim, data):
        a = data.draw(st.integers(0, dim - 1))
        b = data.draw(st.integers(0, dim - 1))
        v = np.arange(dim) * 1.5 - 2
        lhs = cyclic_shift_operator(a, dim) @ cyclic_shift_operator(b, dim) @ v
        expect = np.array([v[(i - a - b) % dim] for i in range(dim)])
        np.testing.assert_array_equal(lhs, expect)
        np.testing.assert_array_equal(cyclic_shift(cyclic_shift(v, b), a), cyclic_shift(v, (a + b) % dim))

    def test_shift_out_of_range(self):
        with pytest.raises(IndexError):
            cyclic_shift_operator(4, 4)
        with pytest.raises(IndexError):
            cyclic_shift(np.zeros(3), -1)

    def test_doppler_identity(self):
        np.testing.assert_array_equal(doppler_phase_operator(0, 5), np.eye(5))

    def test_doppler_example(self):
        np.testing.assert_allclose(np.diag(doppler_phase_operator(1, 4)), [1, 1j, -1, -1j], atol=1e-15)

    @given(st.integers(1, 32), st.data())
    def test_doppler_modulus(self, dim, data):
        k = data.draw(st.integers(0, dim - 1))
        v = np.linspace(-1, 2, dim) + 0.5j
        out = doppler_phase_operator(k, dim) @ v
        np.testing.assert_allclose(np.abs(out), np.abs(v), atol=1e-14)

    def test_doppler_out_of_range(self):
        with pytest.raises(IndexError):
            doppler_phase_operator(5, 5)


class TestSteering:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(0.0, 4), np.full(4, 0.5))

    def test_endfire(self):
        np.testing.assert_allclose(steering_vector(np.pi / 2, 2), np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    @given(st.floats(-np.pi, np.pi), st.integers(1, 64))
    def test_unit_norm(self, theta, n):
        assert abs(np.linalg.norm(steering_vector(theta, n)) - 1) < 1e-14

    def test_invalid(self):
        with pytest.raises(ValueError):
            steering_vector(0.1, 0)


class TestPathOperator:
    def test_identity_case(self):
        cfg = FrameConfig(4, 2)
        b = steering_vector(0.4, 8)
        np.testing.assert_allclose(build_path_operator(0, 0, 0.4, b, cfg), np.eye(8), atol=1e-12)

    def test_time_domain_oracle(self, rng):
        cfg = FrameConfig(2, 2)
        f = steering_vector(-0.3, 4)
        theta = 0.9
        G = build_path_operator(1, 1, theta, f, cfg)
        x = crandn(rng, 4)
        # route through the time domain with explicit matrices
        s = kron_modulator(cfg) @ x
        s = cyclic_shift_operator(1, 4) @ doppler_phase_operator(1, 4) @ s
        expect = np.vdot(f, steering_vector(theta, 4)) * (np.kron(dft_matrix(2), np.eye(2)) @ s)
        np.testing.assert_allclose(G @ x, expect, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_scalar_times_unitary(self, seed):
        r = np.random.default_rng(seed)
        cfg = FrameConfig(4, 2)
        l, k = r.integers(0, 8, size=2)
        f = crandn(r, 6)
        f /= max(1.0, np.linalg.norm(f))
        theta = r.uniform(-np.pi / 2, np.pi / 2)
        G = build_path_operator(l, k, theta, f, cfg)
        sv = np.linalg.svd(G, compute_uv=False)
        assert sv.max() - sv.min() < 1e-10
        x = crandn(r, 8)
        assert abs(np.linalg.norm(G @ x) - abs(beam_gain(theta, f)) * np.linalg.norm(x)) < 1e-10

    @pytest.mark.parametrize("l", range(8))
    @pytest.mark.parametrize("k", range(8))
    def test_fast_matches_kron(self, l, k):
        cfg = FrameConfig(4, 2)
        f = steering_vector(0.2, 3)
        fast = build_path_operator(l, k, -0.7, f, cfg, method="fast")
        slow = build_path_operator(l, k, -0.7, f, cfg, method="kron")
        assert np.max(np.abs(fast - slow)) < 1e-12

    def test_beamformer_norm_check(self):
        with pytest.raises(ValueError):
            build_path_operator(0, 0, 0.0, np.ones(4), FrameConfig(2, 2))

    def test_bad_method_and_index(self):
        f = steering_vector(0.0, 2)
        with pytest.raises(ValueError):
            build_path_operator(0, 0, 0.0, f, FrameConfig(2, 2), method="dense")
        with pytest.raises(IndexError):
            build_path_operator(4, 0, 0.0, f, FrameConfig(2, 2))

    def test_apply_path_matches_operator(self, rng):
        cfg = FrameConfig(4, 2)
        G = build_path_operator(3, 5, 0.1, steering_vector(0.1, 4), cfg)
        x = crandn(rng, 8)
        np.testing.assert_allclose(apply_path(x, 3, 5, 1.0, cfg), G @ x, atol=1e-12)


class TestApplyChannel:
    def test_single_identity(self, rng):
        x = crandn(rng, 8)
        np.testing.assert_allclose(apply_dd_channel([(1.0, np.eye(8))], x), x)

    def test_cancellation(self, rng):
        cfg = FrameConfig(4, 2)
        G = build_path_operator(1, 2, 0.3, steering_vector(0.3, 4), cfg)
        x = crandn(rng, 8)
        h = 0.4 - 1.1j
        np.testing.assert_allclose(apply_dd_channel([(h, G), (-h, G)], x), 0, atol=1e-14)

    def test_dense_oracle(self, rng):
        cfg = FrameConfig(4, 2)
        paths = []
        for _ in range(3):
            l, k = rng.integers(0, 8, size=2)
            th = rng.uniform(-1, 1)
            paths.append((complex(crandn(rng)), build_path_operator(l, k, th, steering_vector(th, 4), cfg)))
        x = crandn(rng, 8)
        H = sum(h * G for h, G in paths)
        np.testing.assert_allclose(apply_dd_channel(paths, x), H @ x, atol=1e-12)

    def test_empty(self, rng):
        np.testing.assert_array_equal(apply_dd_channel([], np.ones(8)), np.zeros(8))
