"""Estimator-style wrappers around the functional detectors.

``fit`` consumes one received frame and its side information and stores the
estimates in trailing-underscore attributes; ``predict`` returns the hard
symbol decisions.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import EffectiveChannel, mmse_detect, uamp_detect_perfect_csi
from .otfs import FrameConfig
from .pacesd import SolverConfig, assemble_dictionary, solve_pacesd, unitary_preprocess


def _check_observation(y, dim):
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise ValueError(f"expected a 1-D observation, got shape {y.shape}")
    if y.size != dim:
        raise ValueError(f"observation length {y.size} != M*N = {dim}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observation contains NaN or Inf")
    return y


class PacesdDetector(BaseEstimator):
    """Joint association, channel estimation and detection for one uplink frame.

    Parameters
    ----------
    frame : FrameConfig, optional
        Frame geometry; defaults to a 16 x 8 QPSK frame.
    max_iters, rel_tol, eta, damping, sbl_warmup, h_message, assoc_threshold, restarts, restart_threshold
        Forwarded to :class:`SolverConfig`.

    Attributes
    ----------
    h_hat_ : ndarray of complex, shape (P,)
        Gain estimate over the candidate pool.
    support_ : frozenset of int
        1-based ids of candidates declared active.
    x_soft_ : ndarray of complex, shape (M*N,)
    beta_hat_ : float
        Estimated noise precision.
    n_iter_ : int
        Iterations summed over all passes.
    result_ : PacesdResult

    Examples
    --------
    >>> det = PacesdDetector(frame=cfg).fit(y, candidates, pilot_mask, pilot_values)  # doctest: +SKIP
    >>> symbols = det.predict()  # doctest: +SKIP
    """

    def __init__(self, frame=None, max_iters=200, rel_tol=1e-6, eta=0.0, damping=1.0, sbl_warmup=10,
                 h_message="gaussian", assoc_threshold=1e-3, restarts=6, restart_threshold=3.0):
        self.frame = frame
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.eta = eta
        self.damping = damping
        self.sbl_warmup = sbl_warmup
        self.h_message = h_message
        self.assoc_threshold = assoc_threshold
        self.restarts = restarts
        self.restart_threshold = restart_threshold

    def _solver_config(self):
        return SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol, eta=self.eta, damping=self.damping,
                            sbl_warmup=self.sbl_warmup, h_message=self.h_message,
                            assoc_threshold=self.assoc_threshold, restarts=self.restarts,
                            restart_threshold=self.restart_threshold)

    def fit(self, y, candidates, pilot_mask, pilot_values):
        """Solve for gains and symbols of one received DD frame.

        Parameters
        ----------
        y : array of complex, shape (M*N,)
        candidates : list of Candidate
            Candidate pool with beamformers attached.
        pilot_mask : array of bool, shape (M*N,)
        pilot_values : array of complex
            One value per pilot or per grid position.

        Returns
        -------
        self
        """
        frame = self.frame if self.frame is not None else FrameConfig(16, 8)
        cfg = self._solver_config()
        y = _check_observation(y, frame.frame_len)
        self.dictionary_ = assemble_dictionary(candidates, frame)
        model = unitary_preprocess(self.dictionary_, y)
        res = solve_pacesd(model, pilot_mask, pilot_values, frame.alphabet, cfg,
                           grid=[(c.l, c.k) for c in candidates], frame_cfg=frame)
        self.result_ = res
        self.h_hat_ = res.h_hat
        self.support_ = res.support
        self.x_soft_ = res.x_soft
        self.beta_hat_ = res.beta_hat
        self.n_iter_ = res.total_iterations
        return self

    def predict(self, y=None):
        """Hard symbol decisions of the fitted frame (``y`` is accepted for API symmetry and ignored)."""
        check_is_fitted(self, "result_")
        return self.result_.x_hard


class LinearDetector(BaseEstimator):
    """Perfect-CSI symbol detector on ``y = H x + n``.

    Parameters
    ----------
    method : {"mmse", "uamp"}
    frame : FrameConfig, optional
    max_iters, rel_tol
        Stopping rule of the iterative ``"uamp"`` method.

    Attributes
    ----------
    x_soft_ : ndarray of complex
    x_index_ : ndarray of int
        Alphabet index of every decision.
    n_iter_ : int
    """

    def __init__(self, method="mmse", frame=None, max_iters=200, rel_tol=1e-6):
        self.method = method
        self.frame = frame
        self.max_iters = max_iters
        self.rel_tol = rel_tol

    def fit(self, y, H, beta, pilot=None):
        """Detect the symbols of ``y`` given the channel matrix ``H`` and noise precision ``beta``."""
        if self.method not in ("mmse", "uamp"):
            raise ValueError(f"method must be 'mmse' or 'uamp', got {self.method!r}")
        frame = self.frame if self.frame is not None else FrameConfig(16, 8)
        y = _check_observation(y, frame.frame_len)
        eff = EffectiveChannel(np.asarray(H, dtype=complex), float(beta))
        if self.method == "mmse":
            self.x_soft_, self.x_hard_, self.x_index_ = mmse_detect(y, eff, frame.alphabet)
            self.n_iter_ = 1
        else:
            cfg = SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)
            res = uamp_detect_perfect_csi(y, eff, frame.alphabet, cfg, pilot=pilot)
            self.x_soft_, self.x_hard_, self.x_index_ = res.x_soft, res.x_hard, res.x_index
            self.n_iter_ = res.iterations_run
        return self

    def predict(self, y=None):
        check_is_fitted(self, "x_hard_")
        return self.x_hard_
