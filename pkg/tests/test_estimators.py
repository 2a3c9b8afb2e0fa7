import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from otfs_pacesd.estimators import LinearDetector, PacesdDetector
from otfs_pacesd.otfs import FrameConfig
from otfs_pacesd.pacesd import assemble_dictionary
from otfs_pacesd.scenario import generate_scenario, random_frame, synthesize_uplink


@pytest.fixture(scope="module")
def desk_frame():
    cfg = FrameConfig(16, 8)
    sc = generate_scenario(3, 2, 3, 3, 16, cfg, seed=31)
    frame, idx = random_frame(cfg, 1 / 16, np.random.default_rng(3))
    obs = synthesize_uplink(sc, 1, frame, 25.0, seed=3)
    return cfg, sc, frame, idx, obs


def test_pacesd_detector(desk_frame):
    cfg, sc, frame, idx, obs = desk_frame
    det = PacesdDetector(frame=cfg).fit(obs.y, sc.candidates, frame.pilot_mask, frame.x)
    np.testing.assert_array_equal(det.predict(), frame.x)
    assert det.support_ == frozenset(np.flatnonzero(sc.true_gains(1)) + 1)
    assert det.h_hat_.shape == (6,) and det.n_iter_ >= 1 and det.beta_hat_ > 0


def test_params_round_trip():
    det = PacesdDetector(max_iters=30, restarts=0)
    assert det.get_params()["max_iters"] == 30
    other = clone(det).set_params(rel_tol=1e-4)
    assert other.rel_tol == 1e-4 and other.restarts == 0
    with pytest.raises(NotFittedError):
        det.predict()


def test_pacesd_detector_rejects_bad_input(desk_frame):
    cfg, sc, frame, _, obs = desk_frame
    det = PacesdDetector(frame=cfg)
    with pytest.raises(ValueError):
        det.fit(obs.y[:-1], sc.candidates, frame.pilot_mask, frame.x)
    y = obs.y.copy()
    y[0] = np.nan
    with pytest.raises(ValueError):
        det.fit(y, sc.candidates, frame.pilot_mask, frame.x)
    with pytest.raises(ValueError):
        PacesdDetector(frame=cfg, damping=0).fit(obs.y, sc.candidates, frame.pilot_mask, frame.x)


@pytest.mark.parametrize("method", ["mmse", "uamp"])
def test_linear_detector(desk_frame, method):
    cfg, sc, frame, idx, obs = desk_frame
    h = sc.true_gains(1)
    G = assemble_dictionary(sc.candidates, cfg).G
    H = np.tensordot(h, G, axes=1)
    det = LinearDetector(method=method, frame=cfg).fit(obs.y, H, obs.noise_precision_true)
    np.testing.assert_array_equal(det.x_index_, idx)
    np.testing.assert_array_equal(det.predict(), frame.x)


def test_linear_detector_unknown_method(desk_frame):
    cfg, _, _, _, obs = desk_frame
    with pytest.raises(ValueError):
        LinearDetector(method="zf", frame=cfg).fit(obs.y, np.eye(128), 1.0)
