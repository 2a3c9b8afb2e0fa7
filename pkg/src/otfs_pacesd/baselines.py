"""Reference detectors and oracle channel estimators with perfect side information."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .pacesd import PacesdResult, SolverConfig, hard_decision, linear_uamp, run_pacesd


@dataclass(frozen=True)
class EffectiveChannel:
    """Perfect-CSI DD channel matrix of the transmitting vehicle and the true noise precision."""

    H_eff: np.ndarray
    beta_true: float

    @classmethod
    def from_paths(cls, gains, operators, beta_true):
        H = np.zeros(operators[0].shape, dtype=complex)
        for g, G in zip(gains, operators):
            H += g * G
        return cls(H, float(beta_true))

    @property
    def noise_var(self):
        return 0.0 if np.isinf(self.beta_true) else 1.0 / self.beta_true


def mmse_detect(y, eff, alphabet):
    """Linear MMSE detection with a unit-energy symbol prior.

    Returns ``(x_soft, x_hard, x_index)`` where
    ``x_soft = H^H (H H^H + beta^-1 I)^-1 y``.
    """
    H = eff.H_eff
    y = np.asarray(y, dtype=complex)
    if H.shape[0] != y.shape[0]:
        raise ValueError(f"channel has {H.shape[0]} rows, observation has {y.shape[0]}")
    gram = H @ H.conj().T + eff.noise_var * np.eye(H.shape[0])
    u = scipy.linalg.solve(gram, y, assume_a="her") if eff.noise_var > 0 else np.linalg.lstsq(gram, y, rcond=None)[0]
    x_soft = H.conj().T @ u
    x_hard, idx = hard_decision(x_soft, alphabet)
    return x_soft, x_hard, idx


@dataclass
class UampResult:
    x_soft: np.ndarray
    x_hard: np.ndarray
    x_index: np.ndarray
    iterations_run: int
    converged: bool


def uamp_detect_perfect_csi(y, eff, alphabet, cfg=SolverConfig(), pilot=None):
    """UAMP detector on the known linear model ``y = H x + n``.

    Uses the SVD ``H = U diag(s) V^H``, works on ``r = U^H y`` with
    ``Phi = diag(s) V^H``, the true noise precision and the shared
    discrete-symbol denoiser. Stops on the same relative-change rule as the
    joint solver. ``pilot`` holds known symbols with NaN elsewhere.
    """
    H = eff.H_eff
    U, s, Vh = np.linalg.svd(H, full_matrices=False)
    r = U.conj().T @ np.asarray(y, dtype=complex)
    x_hat, it, converged = linear_uamp(r, s[:, None] * Vh, eff.noise_var, alphabet, cfg, pilot)
    x_hard, idx = hard_decision(x_hat, alphabet)
    return UampResult(x_hat, x_hard, idx, it, converged)


def oracle_channel_mmse(y, x_true, active_G_list, beta_true):
    """LMMSE gains of the true paths given the true symbols and ``CN(0, 1)`` gain prior."""
    A = np.column_stack([G @ np.asarray(x_true, dtype=complex) for G in active_G_list])
    noise_var = 0.0 if np.isinf(beta_true) else 1.0 / beta_true
    lhs = A.conj().T @ A + noise_var * np.eye(A.shape[1])
    return scipy.linalg.solve(lhs, A.conj().T @ np.asarray(y, dtype=complex), assume_a="her")


def sbl_channel_known_symbols(model, x_true, alphabet, cfg=SolverConfig(), callback=None):
    """Joint solver with every symbol clamped to the truth (all-pilot frame).

    ``model`` is the ``UnitaryModel`` of the full candidate pool with the
    observation attached. Returns the full ``PacesdResult``; ``h_hat`` has
    one entry per candidate. ``callback`` is forwarded to the solver.
    """
    x_true = np.asarray(x_true, dtype=complex)
    return run_pacesd(model, np.ones(x_true.size, dtype=bool), x_true, alphabet, cfg, callback=callback)


__all__ = [
    "EffectiveChannel",
    "PacesdResult",
    "UampResult",
    "mmse_detect",
    "oracle_channel_mmse",
    "sbl_channel_known_symbols",
    "uamp_detect_perfect_csi",
]
