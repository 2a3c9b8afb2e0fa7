import numpy as np
import pytest

from conftest import crandn
from otfs_pacesd.baselines import (
    EffectiveChannel,
    mmse_detect,
    oracle_channel_mmse,
    sbl_channel_known_symbols,
    uamp_detect_perfect_csi,
)
from otfs_pacesd.otfs import QPSK, FrameConfig
from otfs_pacesd.pacesd import SolverConfig, assemble_dictionary, linear_uamp, unitary_preprocess
from otfs_pacesd.scenario import generate_scenario, random_frame, synthesize_uplink

ALPHA = np.array(QPSK)


def qpsk_frame(rng, n):
    idx = rng.integers(0, 4, n)
    return ALPHA[idx], idx


class TestEffectiveChannel:
    def test_from_paths(self, rng):
        G = crandn(rng, 2, 5, 5)
        eff = EffectiveChannel.from_paths([0.5, 1j], G, 10.0)
        np.testing.assert_allclose(eff.H_eff, 0.5 * G[0] + 1j * G[1])
        assert eff.noise_var == pytest.approx(0.1)
        assert EffectiveChannel(np.eye(2), np.inf).noise_var == 0.0


class TestMmse:
    def test_identity_noiseless(self, rng):
        x, idx = qpsk_frame(rng, 16)
        x_soft, x_hard, out = mmse_detect(x, EffectiveChannel(np.eye(16, dtype=complex), np.inf), QPSK)
        np.testing.assert_allclose(x_soft, x, atol=1e-12)
        np.testing.assert_array_equal(out, idx)

    def test_identity_shrinks(self, rng):
        y = crandn(rng, 8)
        x_soft, _, _ = mmse_detect(y, EffectiveChannel(np.eye(8, dtype=complex), 1.0), QPSK)
        np.testing.assert_allclose(x_soft, y / 2, atol=1e-12)

    def test_normal_equations(self, rng):
        H = crandn(rng, 12, 12)
        y = crandn(rng, 12)
        beta = 4.0
        x_soft, _, _ = mmse_detect(y, EffectiveChannel(H, beta), QPSK)
        # the same estimator written in the symbol domain
        direct = np.linalg.solve(H.conj().T @ H + np.eye(12) / beta, H.conj().T @ y)
        np.testing.assert_allclose(x_soft, direct, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mmse_detect(np.zeros(3), EffectiveChannel(np.eye(4, dtype=complex), 1.0), QPSK)


class TestUamp:
    def test_identity_noiseless(self, rng):
        x, idx = qpsk_frame(rng, 32)
        res = uamp_detect_perfect_csi(x, EffectiveChannel(np.eye(32, dtype=complex), np.inf), QPSK)
        np.testing.assert_array_equal(res.x_index, idx)
        np.testing.assert_allclose(res.x_soft, x, atol=1e-5)
        assert res.converged

    def test_random_channel_high_snr(self, rng):
        H = crandn(rng, 64, 64)
        x, idx = qpsk_frame(rng, 64)
        beta = 1e4
        y = H @ x + crandn(rng, 64) / np.sqrt(beta)
        res = uamp_detect_perfect_csi(y, EffectiveChannel(H, beta), QPSK)
        np.testing.assert_array_equal(res.x_index, idx)

    def test_pilots_clamped(self, rng):
        x, _ = qpsk_frame(rng, 16)
        pilot = np.full(16, np.nan, dtype=complex)
        pilot[:4] = x[:4]
        r = crandn(rng, 16)
        x_hat, it, _ = linear_uamp(r, np.eye(16, dtype=complex), 1.0, QPSK, SolverConfig(max_iters=5), pilot)
        np.testing.assert_array_equal(x_hat[:4], x[:4])
        assert 1 <= it <= 5


class TestOracle:
    def test_single_path_closed_form(self, rng):
        G = crandn(rng, 16, 16)
        x, _ = qpsk_frame(rng, 16)
        y = crandn(rng, 16)
        beta = 2.0
        a = G @ x
        expect = np.vdot(a, y) / (np.vdot(a, a).real + 1 / beta)
        np.testing.assert_allclose(oracle_channel_mmse(y, x, [G], beta), [expect], atol=1e-12)

    def test_noiseless_exact(self, rng):
        Gs = [crandn(rng, 16, 16) for _ in range(2)]
        x, _ = qpsk_frame(rng, 16)
        h = np.array([0.3 - 1j, 0.8j])
        y = h[0] * Gs[0] @ x + h[1] * Gs[1] @ x
        np.testing.assert_allclose(oracle_channel_mmse(y, x, Gs, np.inf), h, atol=1e-10)


class TestSblKnownSymbols:
    def test_noiseless_desk(self, desk_cfg):
        sc = generate_scenario(3, 2, 3, 3, 16, desk_cfg, seed=21)
        frame, _ = random_frame(desk_cfg, 1 / 16, np.random.default_rng(0))
        obs = synthesize_uplink(sc, 2, frame, np.inf, seed=0)
        h = sc.true_gains(2)
        model = unitary_preprocess(assemble_dictionary(sc.candidates, desk_cfg), obs.y)
        res = sbl_channel_known_symbols(model, frame.x, QPSK)
        a = h != 0
        assert np.max(np.abs(res.h_hat[a] - h[a])) < 1e-3
        assert np.max(np.abs(res.h_hat[~a])) < 1e-5
        assert res.support == frozenset(np.flatnonzero(a) + 1)
        assert res.h_hat.shape == (6,)

    def test_callback_sees_every_iteration(self, desk_cfg):
        sc = generate_scenario(3, 2, 3, 3, 16, desk_cfg, seed=22)
        frame, _ = random_frame(desk_cfg, 1 / 16, np.random.default_rng(1))
        obs = synthesize_uplink(sc, 0, frame, 10.0, seed=1)
        model = unitary_preprocess(assemble_dictionary(sc.candidates, desk_cfg), obs.y)
        seen = []
        res = sbl_channel_known_symbols(model, frame.x, QPSK, callback=seen.append)
        assert len(seen) == res.iterations_run


def test_small_grid_shapes():
    cfg = FrameConfig(4, 2)
    sc = generate_scenario(2, 1, 1, 1, 4, cfg, seed=0)
    frame, _ = random_frame(cfg, 0.25, np.random.default_rng(0))
    obs = synthesize_uplink(sc, 0, frame, 20.0, seed=0)
    D = assemble_dictionary(sc.candidates, cfg)
    h = sc.true_gains(0)
    eff = EffectiveChannel.from_paths(h[h != 0], D.G[h != 0], obs.noise_precision_true)
    for out in mmse_detect(obs.y, eff, QPSK):
        assert out.shape == (8,)
    res = uamp_detect_perfect_csi(obs.y, eff, QPSK)
    assert res.x_soft.shape == res.x_hard.shape == res.x_index.shape == (8,)
