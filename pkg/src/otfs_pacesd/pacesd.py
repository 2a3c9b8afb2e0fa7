"""Joint parameter association, channel estimation and symbol detection.

The uplink observation ``y = sum_p h_p G_p x + n`` over a pooled candidate
dictionary is rewritten as ``y = Psi (x kron h) + n``. After an SVD
``Psi = U Lambda V^H`` the model becomes ``r = Phi c + w`` with
``Phi = Lambda V^H`` and ``r = U^H y``, which is solved by a bilinear unitary
AMP loop with a Gaussian-Gamma (SBL) prior on ``h`` and a discrete prior on
``x``.

Internally the lifted vector ``c`` is stored as an ``(MN, P)`` array whose row
``m`` is the block ``c_m = x_m * h``.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .otfs import apply_path, build_path_operator

logger = logging.getLogger(__name__)

VAR_MIN, VAR_MAX = 1e-12, 1e12
GAMMA_MIN, GAMMA_MAX = 1e-10, 1e11


class SolverPreparationError(RuntimeError):
    """The unitary preprocessing (SVD) could not be computed."""


class NonFiniteStateError(FloatingPointError):
    """A message vector became NaN/Inf; ``line`` names the update that produced it."""

    def __init__(self, line, name, iteration):
        self.line = line
        self.name = name
        self.iteration = iteration
        super().__init__(f"non-finite {name} at update line {line}, iteration {iteration}")


# --------------------------------------------------------------------------- dictionary


@dataclass(frozen=True)
class Dictionary:
    """Per-candidate DD operators, stacked as ``G[p]`` with shape ``(P, MN, MN)``."""

    G: np.ndarray

    @property
    def n_candidates(self):
        return self.G.shape[0]

    @property
    def dim(self):
        return self.G.shape[1]

    @property
    def psi(self):
        """Column-rearranged ``Psi`` of shape ``(MN, MN*P)``; column ``m*P + p`` is ``G[p][:, m]``."""
        return np.ascontiguousarray(self.G.transpose(1, 2, 0)).reshape(self.dim, self.dim * self.n_candidates)

    @property
    def psi_blocks(self):
        """``(MN, MN, P)`` view; ``psi_blocks[:, m, :]`` is block ``Psi_m``."""
        return self.G.transpose(1, 2, 0)

    def apply(self, x, h):
        """``sum_p h_p G_p x`` without forming ``Psi``."""
        return np.einsum("p,pij,j->i", np.asarray(h, dtype=complex), self.G, np.asarray(x, dtype=complex))


def assemble_dictionary(candidates, cfg):
    """Stack every candidate's DD operator built with its own beamformer."""
    ops = []
    for c in candidates:
        if c.beamformer is None:
            raise ValueError(f"candidate {c.candidate_id} has no beamformer")
        ops.append(build_path_operator(c.l, c.k, c.theta, c.beamformer, cfg))
    if not ops:
        raise ValueError("empty candidate list")
    return Dictionary(np.stack(ops))


# --------------------------------------------------------------------------- unitary model


@dataclass(frozen=True)
class UnitaryModel:
    """SVD products of ``Psi`` plus the transformed observation ``r = U^H y``."""

    U: np.ndarray
    Lambda: np.ndarray
    Phi: np.ndarray
    n_candidates: int
    r: np.ndarray = None

    @property
    def dim(self):
        return self.U.shape[0]

    @property
    def phi_blocks(self):
        """``(MN, MN, P)``; ``phi_blocks[:, m, :]`` is ``Phi_m``."""
        return self.Phi.reshape(self.dim, self.dim, self.n_candidates)

    @property
    def phi_sq(self):
        """``(MN, MN)`` matrix whose column ``m`` is ``|Phi_m|^2 1``."""
        return (np.abs(self.phi_blocks) ** 2).sum(axis=2)

    def with_observation(self, y):
        y = np.asarray(y, dtype=complex).ravel()
        if y.size != self.dim:
            raise ValueError(f"observation length {y.size} != {self.dim}")
        return UnitaryModel(self.U, self.Lambda, self.Phi, self.n_candidates, self.U.conj().T @ y)


def _fix_phase(U, Vh):
    # Rotate each singular pair so U's largest-magnitude entry per column is real positive.
    pivot = np.argmax(np.abs(U), axis=0)
    ph = U[pivot, np.arange(U.shape[1])]
    ph = ph / np.abs(ph)
    return U * ph.conj(), Vh * ph[:, None]


def unitary_preprocess(dictionary, y=None):
    """Economy SVD of ``Psi`` keeping all ``MN`` singular values (zeros included)."""
    psi = dictionary.psi if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    n_cand = dictionary.n_candidates if isinstance(dictionary, Dictionary) else psi.shape[1] // psi.shape[0]
    try:
        U, s, Vh = np.linalg.svd(psi, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SolverPreparationError(f"SVD of {psi.shape} dictionary failed: {exc}") from exc
    U, Vh = _fix_phase(U, Vh)
    model = UnitaryModel(U, s, s[:, None] * Vh, n_cand)
    return model if y is None else model.with_observation(y)


# --------------------------------------------------------------------------- scalar rules


def symbol_denoiser(q, v, alphabet, pilot=None):
    """Posterior mean/variance of a discrete symbol under ``q = x + CN(0, v)``.

    Vectorized over ``q``/``v``. ``pilot`` may be a complex array with NaN at
    unknown positions (or a scalar); known positions return the pilot value
    with variance ``VAR_MIN``.
    """
    q = np.asarray(q, dtype=complex)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise ValueError("symbol_denoiser received non-finite input")
    if np.any(v <= 0):
        raise ValueError("symbol_denoiser variance must be positive")
    alpha = np.asarray(alphabet, dtype=complex)
    diff = q[..., None] - alpha
    logw = -(diff.real ** 2 + diff.imag ** 2) / v[..., None]
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    mean = w @ alpha
    var = w @ (alpha.real ** 2 + alpha.imag ** 2) - (mean.real ** 2 + mean.imag ** 2)
    if mean.shape != np.shape(v):
        var = np.broadcast_to(var, np.broadcast_shapes(mean.shape, np.shape(v)))
        mean = np.broadcast_to(mean, var.shape)
    if pilot is not None:
        pilot = np.broadcast_to(np.asarray(pilot, dtype=complex), mean.shape)
        known = ~np.isnan(pilot)
        mean = np.where(known, pilot, mean)
        var = np.where(known, VAR_MIN, var)
    var = np.clip(var, VAR_MIN, VAR_MAX)
    if mean.ndim == 0:
        return complex(mean), float(var)
    return mean, var


def gamma_update(h_hat, v_h, eps, eta=0.0):
    """Gamma-posterior mean precision ``(2 eps + 1) / (|h|^2 + v_h + 2 eta)``, clamped."""
    denom = np.abs(h_hat) ** 2 + v_h + 2 * eta
    with np.errstate(divide="ignore"):
        g = (2 * eps + 1) / denom
    return np.clip(g, GAMMA_MIN, GAMMA_MAX)


def epsilon_update(gamma):
    """Shape auto-tuning ``0.5 * sqrt(log(mean g) - mean(log g))``."""
    gamma = np.asarray(gamma, dtype=float)
    radicand = np.log(gamma.mean()) - np.log(gamma).mean()
    return 0.5 * np.sqrt(max(radicand, 0.0))


def channel_posterior(forward_h, forward_v, gamma):
    """Combine the forward Gaussian message on ``h`` with the ``N(0, 1/gamma)`` prior."""
    forward_v = np.asarray(forward_v, dtype=float)
    v_h = 1.0 / (1.0 / forward_v + gamma)
    h_hat = np.asarray(forward_h) * v_h / forward_v
    return h_hat, v_h


def associate(h_hat, rho=0.05):
    """Candidate ids (1-based) with ``|h|^2 > rho * max |h|^2``."""
    h_hat = np.asarray(h_hat)
    if h_hat.size == 0:
        return frozenset()
    mag = np.abs(h_hat)
    peak = mag.max()
    if peak == 0:
        return frozenset()
    energy = (mag / peak) ** 2
    return frozenset(int(i) + 1 for i in np.flatnonzero(energy > rho))


def hard_decision(x_soft, alphabet):
    """Nearest-point slicing; returns ``(symbols, indices)``."""
    alpha = np.asarray(alphabet, dtype=complex)
    idx = np.argmin(np.abs(np.asarray(x_soft)[:, None] - alpha[None, :]), axis=1)
    return alpha[idx], idx


# --------------------------------------------------------------------------- solver


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the message-passing loop.

    Parameters
    ----------
    max_iters : int
        Iteration cap of a single pass.
    rel_tol : float
        Stop once ``||c(t) - c(t-1)|| / ||c(t-1)||`` drops below this.
    eta : float
        Rate parameter of the Gamma hyperprior on the gain precisions.
    epsilon_init, gamma_init, beta_init : float
        Initial shape, gain precision and noise precision.
    damping : float in (0, 1]
        Geometric damping of ``c`` and ``z``; 1 means no damping.
    assoc_threshold : float in (0, 1)
        Relative energy above which a candidate is declared active.
    sbl_warmup : int
        Number of initial iterations during which the gain precisions are
        held at ``gamma_init``.
    h_message : {"gaussian", "mean_field"}
        How each block's pseudo-observation ``q_m`` is turned into a message
        on ``h``. ``"mean_field"`` projects with the symbol second moment;
        ``"gaussian"`` divides by the symbol mean and propagates its variance.
    restarts : int
        Maximum number of warm restarts tried when the pilots disagree with
        the converged solution; 0 disables them.
    restart_threshold : float
        Normalized pilot mismatch above which restarts are triggered.
    restart_iters : int
        Iteration cap of each restart pass.
    stall_damping : float in (0, 1]
        Damping of the extra cold pass run when the kept pass stops at the
        iteration cap (typically a two-cycle in a few symbol decisions).
    refine_symbols : bool
        After the joint solve, re-detect the symbols with linear UAMP on the
        estimated channel ``sum_p h_p G_p`` and the estimated noise precision.
    """

    max_iters: int = 200
    rel_tol: float = 1e-6
    eta: float = 0.0
    epsilon_init: float = 0.0
    gamma_init: float = 1.0
    beta_init: float = 1.0
    damping: float = 1.0
    assoc_threshold: float = 1e-3
    sbl_warmup: int = 10
    h_message: str = "gaussian"
    restarts: int = 6
    restart_threshold: float = 3.0
    restart_iters: int = 60
    stall_damping: float = 0.8
    refine_symbols: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be non-negative")
        if not (0 < self.damping <= 1 and 0 < self.stall_damping <= 1):
            raise ValueError("damping and stall_damping must lie in (0, 1]")
        if not 0 < self.assoc_threshold < 1:
            raise ValueError("assoc_threshold must lie in (0, 1)")
        if self.gamma_init <= 0 or self.beta_init <= 0:
            raise ValueError("gamma_init and beta_init must be positive")
        if self.eta < 0 or self.epsilon_init < 0:
            raise ValueError("eta and epsilon_init must be non-negative")
        if self.restart_iters < 1:
            raise ValueError("restart_iters must be >= 1")
        if self.sbl_warmup < 0 or self.restarts < 0:
            raise ValueError("sbl_warmup and restarts must be non-negative")
        if self.h_message not in ("gaussian", "mean_field"):
            raise ValueError(f"unknown h_message {self.h_message!r}")
        if not self.restart_threshold > 0:
            raise ValueError("restart_threshold must be positive")


@dataclass
class SolverState:
    """Every message of one iteration. Arrays indexed ``[m]`` or ``[m, p]``."""

    c_hat: np.ndarray
    v_c: np.ndarray
    v_p: np.ndarray = None
    p: np.ndarray = None
    v_zeta: np.ndarray = None
    zeta: np.ndarray = None
    z: np.ndarray = None
    v_z: np.ndarray = None
    q: np.ndarray = None
    v_q: np.ndarray = None
    fwd_h_blk: np.ndarray = None
    fwd_vh_blk: np.ndarray = None
    fwd_h: np.ndarray = None
    fwd_vh: np.ndarray = None
    h_hat: np.ndarray = None
    v_h: np.ndarray = None
    fwd_x_blk: np.ndarray = None
    fwd_vx_blk: np.ndarray = None
    fwd_x: np.ndarray = None
    fwd_vx: np.ndarray = None
    x_hat: np.ndarray = None
    v_x: np.ndarray = None
    bwd_x: np.ndarray = None
    bwd_vx: np.ndarray = None
    bwd_h: np.ndarray = None
    bwd_vh: np.ndarray = None
    bwd_c: np.ndarray = None
    bwd_vc: np.ndarray = None
    gamma: np.ndarray = None
    eps: float = 0.0
    beta: float = 1.0
    iteration: int = 0

    VARIANCES = ("v_c", "v_p", "v_zeta", "v_z", "v_q", "fwd_vh_blk", "fwd_vh", "v_h",
                 "fwd_vx_blk", "fwd_vx", "v_x", "bwd_vx", "bwd_vh", "bwd_vc")

    def violations(self):
        """Names of variance/precision fields that are not strictly positive and finite."""
        bad = []
        for name in self.VARIANCES + ("gamma",):
            val = getattr(self, name)
            if val is None:
                continue
            val = np.asarray(val)
            # NaN propagates through min, so one comparison covers it
            if val.size and not (val.min() > 0 and val.max() < np.inf):
                bad.append(name)
        if not (np.isfinite(self.beta) and self.beta > 0):
            bad.append("beta")
        return bad


@dataclass
class PacesdResult:
    h_hat: np.ndarray
    v_h: float
    support: frozenset
    x_soft: np.ndarray
    x_hard: np.ndarray
    x_index: np.ndarray
    beta_hat: float
    gamma_hat: np.ndarray
    iterations_run: int
    converged: bool
    pilot_mismatch: float = 0.0
    pilot_nll: float = 0.0
    restarts_run: int = 0
    total_iterations: int = 0
    trace: list = field(default_factory=list, repr=False)


def _check(line, it, **arrays):
    for name, arr in arrays.items():
        # a finite sum is the cheap common case; only then fall back to the elementwise test
        if not np.isfinite(np.sum(arr)) and not np.all(np.isfinite(arr)):
            raise NonFiniteStateError(line, name, it)


def _clampv(v):
    return np.minimum(np.maximum(v, VAR_MIN), VAR_MAX)


def _pilot_vector(pilot_mask, pilot_values, dim):
    pilot_mask = np.asarray(pilot_mask, dtype=bool).ravel()
    pilot_values = np.asarray(pilot_values, dtype=complex).ravel()
    if pilot_mask.size != dim:
        raise ValueError(f"pilot mask length {pilot_mask.size} != {dim}")
    pilot = np.full(dim, np.nan + 0j)
    if pilot_values.size == pilot_mask.sum():
        pilot[pilot_mask] = pilot_values
    elif pilot_values.size == dim:
        pilot[pilot_mask] = pilot_values[pilot_mask]
    else:
        raise ValueError("pilot_values must have one entry per pilot or per grid position")
    return pilot_mask, pilot


def run_pacesd(model, pilot_mask, pilot_values, alphabet, cfg=SolverConfig(), callback=None, trace=False, x_init=None):
    """Single pass of the bilinear UAMP message-passing loop.

    Parameters
    ----------
    model : UnitaryModel
        Output of :func:`unitary_preprocess` with an observation attached.
    pilot_mask : array of bool, shape (MN,)
        Known-symbol positions.
    pilot_values : array of complex
        Known symbols, either length ``MN`` or one per masked position.
    alphabet : sequence of complex
    cfg : SolverConfig
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.
    trace : bool
        Collect per-iteration diagnostic rows
        ``(iter, beta, eps, mean gamma, ||c||, symbol flips)``.
    x_init : array of complex, optional
        Starting symbol estimate at data positions (default zero).

    Returns
    -------
    PacesdResult
    """
    if model.r is None:
        raise ValueError("model has no observation; use unitary_preprocess(dictionary, y)")
    alphabet = np.asarray(alphabet, dtype=complex)
    dim, P = model.dim, model.n_candidates
    Phi = model.Phi
    PhiH = Phi.conj().T
    phi_sq = model.phi_sq
    r = model.r
    known, pilot = _pilot_vector(pilot_mask, pilot_values, dim)

    st = SolverState(c_hat=np.zeros((dim, P), dtype=complex), v_c=np.ones(dim))
    st.x_hat = np.where(known, pilot, 0 if x_init is None else x_init).astype(complex)
    st.v_x = np.ones(dim)
    st.gamma = np.full(P, float(cfg.gamma_init))
    st.eps = float(cfg.epsilon_init)
    st.beta = float(cfg.beta_init)
    st.z = np.zeros(dim, dtype=complex)
    damp = cfg.damping

    rows = []
    converged = False
    prev_hard = None
    for it in range(1, cfg.max_iters + 1):
        st.iteration = it
        c_prev = st.c_hat
        # Lines 1-2
        st.v_p = _clampv(phi_sq @ st.v_c)
        st.p = Phi @ st.c_hat.ravel() - st.v_p * st.z
        _check(2, it, p=st.p)
        # Lines 3-5
        denom = 1 + st.beta * st.v_p
        st.v_zeta = _clampv(st.v_p / denom)
        st.zeta = (st.beta * st.v_p * r + st.p) / denom
        resid = np.vdot(r - st.zeta, r - st.zeta).real + st.v_zeta.sum()
        st.beta = float(np.clip(dim / max(resid, VAR_MIN), 1 / VAR_MAX, 1 / VAR_MIN))
        _check(5, it, zeta=st.zeta, beta=st.beta)
        # Lines 6-7
        st.v_z = _clampv(1.0 / (st.v_p + 1.0 / st.beta))
        z_new = st.v_z * (r - st.p)
        st.z = z_new if damp == 1 or it == 1 else damp * z_new + (1 - damp) * st.z
        # Lines 8-9; v_q is the reciprocal of the block mean of |Phi_m^H|^2 v_z
        st.v_q = _clampv(P / (phi_sq.T @ st.v_z))
        st.q = st.c_hat + st.v_q[:, None] * (PhiH @ st.z).reshape(dim, P)
        _check(9, it, q=st.q)

        # Lines 10-13: forward messages to h
        if cfg.h_message == "mean_field":
            xe = np.abs(st.x_hat) ** 2 + st.v_x
            st.fwd_vh_blk = _clampv(np.repeat((st.v_q / xe)[:, None], P, axis=1))
            st.fwd_h_blk = st.q * (st.x_hat.conj() / xe)[:, None]
        else:
            nz = np.abs(st.x_hat) > 0
            xa = np.maximum(np.abs(st.x_hat) ** 2, VAR_MIN)
            hvar = 0.0 if st.h_hat is None else (np.abs(st.h_hat) ** 2 + st.v_h)[None, :]
            st.fwd_vh_blk = _clampv((st.v_q[:, None] + st.v_x[:, None] * hvar) / xa[:, None])
            st.fwd_h_blk = np.where(nz[:, None], st.q / np.where(nz, st.x_hat, 1)[:, None], 0)
        st.fwd_vh = _clampv(1.0 / (1.0 / st.fwd_vh_blk).sum(axis=0))
        st.fwd_h = st.fwd_vh * (st.fwd_h_blk / st.fwd_vh_blk).sum(axis=0)
        _check(13, it, fwd_h=st.fwd_h)
        # Line 14: belief of h, then precision and shape updates
        h_hat, v_h_elem = channel_posterior(st.fwd_h, st.fwd_vh, st.gamma)
        if it > cfg.sbl_warmup:
            st.gamma = gamma_update(h_hat, v_h_elem, st.eps, cfg.eta)
            st.eps = epsilon_update(st.gamma)
        # Line 15
        st.h_hat = h_hat
        st.v_h = _clampv(np.full(P, v_h_elem.mean()))
        _check(15, it, h_hat=st.h_hat)

        # Lines 16-19: forward messages to x
        he = np.abs(st.h_hat) ** 2 + st.v_h
        st.fwd_vx_blk = _clampv(st.v_q[:, None] / he[None, :])
        st.fwd_x_blk = st.q * (st.h_hat.conj() / he)[None, :]
        st.fwd_vx = _clampv(1.0 / (1.0 / st.fwd_vx_blk).sum(axis=1))
        st.fwd_x = st.fwd_vx * (st.fwd_x_blk / st.fwd_vx_blk).sum(axis=1)
        _check(19, it, fwd_x=st.fwd_x)
        # Lines 20-21
        x_hat, v_x_elem = symbol_denoiser(st.fwd_x, st.fwd_vx, alphabet, pilot)
        st.x_hat = x_hat
        st.v_x = _clampv(np.full(dim, v_x_elem.mean()))

        # Lines 22-25: backward (extrinsic) messages
        gap = np.maximum(st.fwd_vx_blk - st.v_x[:, None], VAR_MIN)
        st.bwd_vx = _clampv(st.v_x[:, None] * st.fwd_vx_blk / gap)
        st.bwd_x = (st.x_hat[:, None] * st.fwd_vx_blk - st.v_x[:, None] * st.fwd_x_blk) / gap
        prec = np.maximum(1.0 / st.v_h[None, :] - 1.0 / st.fwd_vh_blk, 1.0 / VAR_MAX)
        st.bwd_vh = _clampv(1.0 / prec)
        st.bwd_h = st.bwd_vh * ((st.h_hat / st.v_h)[None, :] - st.fwd_h_blk / st.fwd_vh_blk)
        _check(25, it, bwd_x=st.bwd_x, bwd_h=st.bwd_h)
        # Lines 26-27
        st.bwd_c = st.bwd_x * st.bwd_h
        st.bwd_vc = _clampv(
            np.abs(st.bwd_x) ** 2 * st.bwd_vh + st.bwd_vx * np.abs(st.bwd_h) ** 2 + st.bwd_vx * st.bwd_vh
        )
        # Lines 28-30
        v_c_elem = 1.0 / (1.0 / st.v_q[:, None] + 1.0 / st.bwd_vc)
        c_new = v_c_elem * (st.q / st.v_q[:, None] + st.bwd_c / st.bwd_vc)
        _check(29, it, c_hat=c_new)
        st.c_hat = c_new if damp == 1 else damp * c_new + (1 - damp) * c_prev
        st.v_c = _clampv(v_c_elem.mean(axis=1))

        if callback is not None:
            callback(st)
        if trace:
            hard, _ = hard_decision(st.x_hat, alphabet)
            flips = 0 if prev_hard is None else int(np.count_nonzero(hard != prev_hard))
            prev_hard = hard
            rows.append((it, st.beta, st.eps, float(st.gamma.mean()), float(np.linalg.norm(st.c_hat)), flips))
        norm_prev = np.linalg.norm(c_prev)
        # no early exit while the gain precisions are still frozen
        if it > cfg.sbl_warmup and norm_prev > 0 and np.linalg.norm(st.c_hat - c_prev) / norm_prev < cfg.rel_tol:
            converged = True
            break

    x_hard, x_idx = hard_decision(st.x_hat, alphabet)
    if np.any(known):
        x_hard = np.where(known, pilot, x_hard)
        x_idx = x_idx.copy()
        x_idx[known] = np.argmin(np.abs(pilot[known][:, None] - alphabet[None, :]), axis=1)
        # how well the data-driven symbol messages predict the known pilots
        err = np.abs(st.fwd_x[known] - pilot[known]) ** 2
        mismatch = float(np.mean(err / st.fwd_vx[known]))
        nll = float(np.mean(err / st.fwd_vx[known] + np.log(np.pi * st.fwd_vx[known])))
    else:
        mismatch = nll = 0.0
    return PacesdResult(
        h_hat=st.h_hat.copy(),
        v_h=float(st.v_h[0]),
        support=associate(st.h_hat, cfg.assoc_threshold),
        x_soft=st.x_hat.copy(),
        x_hard=x_hard,
        x_index=x_idx,
        beta_hat=st.beta,
        gamma_hat=st.gamma.copy(),
        iterations_run=st.iteration,
        converged=converged,
        pilot_mismatch=mismatch,
        pilot_nll=nll,
        total_iterations=st.iteration,
        trace=rows,
    )


# --------------------------------------------------------------------------- ambiguity handling


def grid_translates(support, grid):
    """DD translations ``(a, b)`` that map the found support onto other pool entries.

    ``grid`` lists the ``(l, k)`` pair of every candidate (0-based order); the
    support holds 1-based ids. Shorter translations come first.
    """
    pool = {tuple(g) for g in grid}
    found = [tuple(grid[i - 1]) for i in support]
    out = set()
    for l1, k1 in found:
        for l0, k0 in pool:
            a, b = l1 - l0, k1 - k0
            if (a, b) != (0, 0) and all((l - a, k - b) in pool for l, k in found):
                out.add((a, b))
    return sorted(out, key=lambda ab: (abs(ab[0]) + abs(ab[1]), ab))


def _fit_to_pilots(x, known, pilot):
    # least-squares complex scale aligning x with the pilots
    u = x[known]
    return x * (np.vdot(u, pilot[known]) / max(np.vdot(u, u).real, VAR_MIN))


def solve_pacesd(model, pilot_mask, pilot_values, alphabet, cfg=SolverConfig(), grid=None, frame_cfg=None,
                 callback=None, trace=False):
    """Run the solver and escape pilot-inconsistent fixed points by warm restarts.

    The bilinear model leaves ``(x, h)`` ambiguous up to a complex scale and,
    when the candidate pool contains translated copies of the true support,
    up to a joint DD translation. When the converged symbol messages
    disagree with the pilots (``pilot_mismatch > cfg.restart_threshold``;
    the statistic is about 1 for a consistent solution) the solver is
    restarted from, in order:

    1. the previous symbols rescaled onto the pilots;
    2. the previous symbols translated by each entry of
       :func:`grid_translates`, rescaled (needs ``grid`` and ``frame_cfg``);
    3. a cold pass with the mean-field ``h`` message.

    Independently, if the kept pass ran into the iteration cap, one more
    cold pass with ``cfg.stall_damping`` is tried. Among all passes the one whose forward symbol messages give the pilots
    the highest Gaussian likelihood (lowest ``pilot_nll``) is kept.
    Restarting stops once that pass is consistent or ``cfg.restarts``
    extra passes (each capped at ``cfg.restart_iters``) have been spent.
    With ``cfg.refine_symbols`` the kept pass's symbols are finally
    re-detected by :func:`refine_symbols`.

    Parameters
    ----------
    grid : sequence of (l, k), optional
        Delay/Doppler index pair of every candidate, in dictionary order.
    frame_cfg : FrameConfig, optional
        Needed to apply translations.

    Returns
    -------
    PacesdResult
        ``restarts_run`` counts the extra passes and ``total_iterations`` the
        iterations summed over all passes.
    """
    known, pilot = _pilot_vector(pilot_mask, pilot_values, model.dim)
    kw = dict(callback=callback, trace=trace)
    first = run_pacesd(model, known, pilot, alphabet, cfg, **kw)
    best = first
    if cfg.restarts and known.any() and first.pilot_mismatch > cfg.restart_threshold:
        best = _restart(model, known, pilot, alphabet, cfg, first, grid, frame_cfg, kw)
    if cfg.restarts and known.any() and not best.converged and cfg.stall_damping < 1:
        run_cfg = replace(cfg, damping=cfg.stall_damping, max_iters=min(cfg.max_iters, cfg.restart_iters))
        res = run_pacesd(model, known, pilot, alphabet, run_cfg, **kw)
        n, total = best.restarts_run + 1, best.total_iterations + res.total_iterations
        logger.debug("damped pass: converged %s, nll %.3g vs %.3g", res.converged, res.pilot_nll, best.pilot_nll)
        if res.pilot_nll < best.pilot_nll:
            best = res
        best.restarts_run, best.total_iterations = n, total
    if cfg.refine_symbols:
        refine_symbols(model, best, known, pilot, alphabet, cfg)
    return best


def _restart(model, known, pilot, alphabet, cfg, first, grid, frame_cfg, kw):

    def attempts():
        base = first.x_soft
        yield cfg, _fit_to_pilots(base, known, pilot)
        if grid is not None and frame_cfg is not None:
            dim = model.dim
            for a, b in grid_translates(first.support, grid):
                moved = apply_path(base, a % dim, b % dim, 1.0, frame_cfg)
                yield cfg, _fit_to_pilots(moved, known, pilot)
        if cfg.h_message != "mean_field":
            yield replace(cfg, h_message="mean_field"), None

    best, total, n = first, first.total_iterations, 0
    for run_cfg, x_init in attempts():
        if n >= cfg.restarts:
            break
        run_cfg = replace(run_cfg, max_iters=min(cfg.max_iters, cfg.restart_iters))
        res = run_pacesd(model, known, pilot, alphabet, run_cfg, x_init=x_init, **kw)
        n += 1
        total += res.total_iterations
        logger.debug("restart %d: pilot mismatch %.3g, nll %.3g", n, res.pilot_mismatch, res.pilot_nll)
        if res.pilot_nll < best.pilot_nll:
            best = res
        if best.pilot_mismatch <= cfg.restart_threshold:
            break
    best.restarts_run = n
    best.total_iterations = total
    return best


# --------------------------------------------------------------------------- linear UAMP


def linear_uamp(r, Phi, noise_var, alphabet, cfg=SolverConfig(), pilot=None, x_init=None):
    """UAMP symbol detection for ``r = Phi x + w`` with row-orthogonal ``Phi = diag(s) V^H``.

    Parameters
    ----------
    r : array of complex, shape (n,)
        Observation after the unitary transform.
    Phi : array of complex, shape (n, dim)
    noise_var : float
        Per-sample noise variance of ``w``.
    alphabet : sequence of complex
    cfg : SolverConfig
        Only ``max_iters`` and ``rel_tol`` are used.
    pilot : array of complex, optional
        Known symbols, NaN elsewhere.

    Returns
    -------
    x_hat : ndarray of complex
        Posterior means.
    iterations : int
    converged : bool
    """
    dim = Phi.shape[1]
    lam2 = np.sum(np.abs(Phi) ** 2, axis=1)
    noise_var = max(float(noise_var), VAR_MIN)
    x_hat = np.zeros(dim, dtype=complex) if x_init is None else np.asarray(x_init, dtype=complex).copy()
    v_x = 1.0
    s = np.zeros_like(r)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        v_p = np.clip(lam2 * v_x, VAR_MIN, VAR_MAX)
        p = Phi @ x_hat - v_p * s
        v_s = 1.0 / (v_p + noise_var)
        s = v_s * (r - p)
        v_q = float(np.clip(dim / max(lam2 @ v_s, VAR_MIN), VAR_MIN, VAR_MAX))
        q = x_hat + v_q * (Phi.conj().T @ s)
        x_new, v_elem = symbol_denoiser(q, np.full(dim, v_q), alphabet, pilot)
        v_x = float(np.clip(v_elem.mean(), VAR_MIN, VAR_MAX))
        norm_prev = np.linalg.norm(x_hat)
        delta = np.linalg.norm(x_new - x_hat)
        x_hat = x_new
        if delta == 0 or (norm_prev > 0 and delta / norm_prev < cfg.rel_tol):
            converged = True
            break
    return x_hat, it, converged


def refine_symbols(model, result, pilot_mask, pilot_values, alphabet, cfg=SolverConfig()):
    """Re-detect symbols with linear UAMP on the estimated channel; updates ``result`` in place.

    The estimated DD channel is ``H = U (sum_p h_p Phi_p)``, i.e.
    ``sum_p h_p G_p`` rebuilt from the unitary model, and the noise level is
    ``1 / beta_hat``. Channel estimate, support and diagnostics are left
    unchanged.
    """
    known, pilot = _pilot_vector(pilot_mask, pilot_values, model.dim)
    alphabet = np.asarray(alphabet, dtype=complex)
    H = model.U @ (model.phi_blocks @ result.h_hat)
    if not np.any(H):
        return result
    try:
        Uh, sv, Vh = np.linalg.svd(H)
    except np.linalg.LinAlgError:
        return result
    r = Uh.conj().T @ (model.U @ model.r)
    x_hat, _, _ = linear_uamp(r, sv[:, None] * Vh, 1.0 / result.beta_hat, alphabet, cfg, pilot)
    x_hard, x_idx = hard_decision(x_hat, alphabet)
    if known.any():
        x_idx[known] = np.argmin(np.abs(pilot[known][:, None] - alphabet[None, :]), axis=1)
        x_hard = alphabet[x_idx]
    result.x_soft, result.x_hard, result.x_index = x_hat, x_hard, x_idx
    return result
