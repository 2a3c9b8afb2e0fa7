"""Delay-Doppler (OTFS) transforms and per-path channel operators.

All frames are vectorized column-major: ``x[m + n * M] == X[m, n]``. With a
rectangular pulse the transmit chain reduces to ``s = (F_N^H kron I_M) x`` and
the receive chain to its inverse, so both are implemented as FFTs along the
Doppler axis of the reshaped grid.
"""
from dataclasses import dataclass, field

import numpy as np

QPSK = tuple(complex(re, im) / np.sqrt(2) for re, im in ((1, 1), (-1, 1), (-1, -1), (1, -1)))


@dataclass(frozen=True)
class FrameConfig:
    """Frame geometry and constellation.

    Parameters
    ----------
    M : int
        Number of subcarriers (delay bins).
    N : int
        Number of time slots (Doppler bins).
    delta_f : float
        Subcarrier spacing in Hz. The slot duration is ``T = 1 / delta_f``.
    f_c : float
        Carrier frequency in Hz.
    alphabet : tuple of complex
        Constellation points; must be distinct with unit average energy.
    pulse : str
        Only ``"rectangular"`` is supported.
    """

    M: int
    N: int
    delta_f: float = 15e3
    f_c: float = 4e9
    alphabet: tuple = QPSK
    pulse: str = "rectangular"
    _alphabet_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.M) != self.M or int(self.N) != self.N or self.M < 1 or self.N < 1:
            raise ValueError(f"M and N must be positive integers, got M={self.M}, N={self.N}")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.pulse != "rectangular":
            raise ValueError(f"only rectangular pulses are supported, got {self.pulse!r}")
        alpha = np.asarray(self.alphabet, dtype=complex)
        if alpha.ndim != 1 or alpha.size == 0:
            raise ValueError("alphabet must be a non-empty 1-D sequence")
        if np.unique(alpha).size != alpha.size:
            raise ValueError("alphabet points must be distinct")
        energy = np.mean(np.abs(alpha) ** 2)
        if abs(energy - 1.0) > 1e-9:
            raise ValueError(f"alphabet must have unit average energy, got {energy:.6g}")
        object.__setattr__(self, "alphabet", tuple(complex(a) for a in alpha))
        object.__setattr__(self, "_alphabet_array", alpha)

    @property
    def T(self):
        return 1.0 / self.delta_f

    @property
    def frame_len(self):
        return self.M * self.N

    @property
    def alphabet_array(self):
        return self._alphabet_array.copy()


@dataclass
class DdFrame:
    """Delay-Doppler symbol frame with its pilot mask."""

    x: np.ndarray
    pilot_mask: np.ndarray
    M: int
    N: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex).ravel()
        self.pilot_mask = np.asarray(self.pilot_mask, dtype=bool).ravel()
        if self.x.size != self.M * self.N or self.pilot_mask.size != self.x.size:
            raise ValueError(
                f"frame of length {self.x.size} (mask {self.pilot_mask.size}) does not match M*N={self.M * self.N}"
            )

    @classmethod
    def from_grid(cls, X, pilot_mask=None):
        X = np.asarray(X, dtype=complex)
        M, N = X.shape
        if pilot_mask is None:
            pilot_mask = np.zeros(M * N, dtype=bool)
        return cls(X.reshape(-1, order="F"), pilot_mask, M, N)

    @property
    def X(self):
        return self.x.reshape(self.M, self.N, order="F")

    @property
    def pilot_values(self):
        return self.x[self.pilot_mask]

    def validate(self, cfg):
        """Raise ``ValueError`` unless every data symbol lies on ``cfg.alphabet``."""
        if (self.M, self.N) != (cfg.M, cfg.N):
            raise ValueError(f"frame is {self.M}x{self.N}, config is {cfg.M}x{cfg.N}")
        data = self.x[~self.pilot_mask]
        dist = np.abs(data[:, None] - cfg.alphabet_array[None, :]).min(axis=1) if data.size else data
        if data.size and dist.max() > 1e-9:
            raise ValueError("non-pilot symbols must belong to the alphabet")


def dft_matrix(n):
    """Unitary DFT matrix with ``F[a, b] = exp(-2j*pi*a*b/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def _as_frame_vector(v, cfg):
    v = np.asarray(v.x if isinstance(v, DdFrame) else v, dtype=complex)
    if v.shape[0] != cfg.frame_len:
        raise ValueError(f"expected leading dimension {cfg.frame_len}, got {v.shape[0]}")
    return v


def otfs_modulate(frame, cfg):
    """Map DD symbols to time-domain samples, ``s = (F_N^H kron I_M) x``.

    Accepts a ``DdFrame``, a length ``M*N`` vector, or an ``(M*N, k)`` batch of
    column vectors.
    """
    x = _as_frame_vector(frame, cfg)
    grid = x.reshape((cfg.M, cfg.N) + x.shape[1:], order="F")
    s = np.fft.ifft(grid, axis=1, norm="ortho")
    return s.reshape(x.shape, order="F")


def otfs_demodulate(r_td, cfg):
    """Inverse of :func:`otfs_modulate`, ``y = (F_N kron I_M) r``."""
    r = _as_frame_vector(r_td, cfg)
    grid = r.reshape((cfg.M, cfg.N) + r.shape[1:], order="F")
    y = np.fft.fft(grid, axis=1, norm="ortho")
    return y.reshape(r.shape, order="F")


def _check_index(i, dim, name):
    if int(i) != i or not 0 <= i <= dim - 1:
        raise IndexError(f"{name} index {i} outside [0, {dim - 1}]")
    return int(i)


def cyclic_shift(v, l):
    """Apply ``Pi^l``: ``(Pi^l v)[i] = v[(i - l) mod dim]`` along axis 0."""
    v = np.asarray(v)
    l = _check_index(l, v.shape[0], "delay")
    return np.roll(v, l, axis=0)


def cyclic_shift_operator(l, dim):
    """Dense permutation matrix ``Pi^l`` of size ``dim``."""
    l = _check_index(l, dim, "delay")
    return np.roll(np.eye(dim), l, axis=0)


def doppler_phase(k, dim):
    """Diagonal of ``Delta^k``: ``exp(2j*pi*k*n/dim)``."""
    k = _check_index(k, dim, "Doppler")
    return np.exp(2j * np.pi * k * np.arange(dim) / dim)


def doppler_phase_operator(k, dim):
    """Dense diagonal matrix ``Delta^k``."""
    return np.diag(doppler_phase(k, dim))


def steering_vector(theta, n_ant):
    """ULA receive response with half-wavelength spacing, unit norm."""
    if n_ant < 1:
        raise ValueError("n_ant must be >= 1")
    return np.exp(1j * np.pi * np.arange(n_ant) * np.sin(theta)) / np.sqrt(n_ant)


def beam_gain(theta, f):
    """Scalar ``f^H b(theta)`` seen by a path at ``theta`` through beamformer ``f``."""
    f = np.asarray(f, dtype=complex).ravel()
    return complex(np.vdot(f, steering_vector(theta, f.size)))


def apply_path(x, l, k, gain, cfg):
    """Fast action of one DD path operator on ``x`` (vector or column batch)."""
    dim = cfg.frame_len
    s = otfs_modulate(x, cfg)
    phase = doppler_phase(k, dim)
    s = phase.reshape((dim,) + (1,) * (s.ndim - 1)) * s
    return gain * otfs_demodulate(cyclic_shift(s, l), cfg)


def build_path_operator(l, k, theta, f, cfg, method="fast"):
    """Dense DD operator ``G = (f^H b(theta)) (F_N kron I_M) Pi^l Delta^k (F_N^H kron I_M)``.

    ``method="fast"`` applies the FFT/index maps to the identity;
    ``method="kron"`` multiplies the explicit Kronecker matrices and is kept
    as an independent cross-check.
    """
    dim = cfg.frame_len
    _check_index(l, dim, "delay")
    _check_index(k, dim, "Doppler")
    f = np.asarray(f, dtype=complex).ravel()
    norm_f = np.linalg.norm(f)
    if norm_f > 1 + 1e-9:
        raise ValueError(f"beamformer norm {norm_f:.6g} exceeds 1")
    gain = beam_gain(theta, f)
    if method == "fast":
        return apply_path(np.eye(dim, dtype=complex), l, k, gain, cfg)
    if method == "kron":
        F = dft_matrix(cfg.N)
        eye = np.eye(cfg.M)
        fwd = np.kron(F, eye)
        return gain * fwd @ cyclic_shift_operator(l, dim) @ doppler_phase_operator(k, dim) @ fwd.conj().T
    raise ValueError(f"unknown method {method!r}")


def apply_dd_channel(paths, x):
    """Noiseless DD observation ``sum_p gain_p * G_p @ x`` for ``(gain, G)`` pairs."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros(x.shape, dtype=complex)
    for gain, G in paths:
        out += gain * (G @ x)
    return out
