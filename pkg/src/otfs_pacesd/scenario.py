"""Vehicular ISAC scenarios: ground-truth paths, sensing candidate pool, uplink synthesis."""
from dataclasses import dataclass, field, replace
import io
import math

import numpy as np

from .otfs import DdFrame, FrameConfig, apply_path, steering_vector


@dataclass(frozen=True)
class PathTruth:
    vehicle_id: int
    l: int
    k: int
    theta: float
    gain: complex


@dataclass(frozen=True)
class Candidate:
    """One pooled sensing parameter tuple.

    ``owner_vehicle`` is ground truth for scoring only; solver-facing code
    reads ``l``, ``k``, ``theta`` and ``beamformer``.
    """

    candidate_id: int
    l: int
    k: int
    theta: float
    owner_vehicle: int
    beamformer: np.ndarray = field(default=None, compare=False, repr=False)


@dataclass
class Scenario:
    cfg: FrameConfig
    n_bs: int
    vehicles: list
    candidates: list
    rng_seed: int

    @property
    def n_candidates(self):
        return len(self.candidates)

    def owner_labels(self):
        return np.array([c.owner_vehicle for c in self.candidates])

    def true_gains(self, vehicle_id):
        """Sparse gain vector over the candidate pool for one transmitting vehicle."""
        if not 0 <= vehicle_id < len(self.vehicles):
            raise KeyError(f"unknown vehicle_id {vehicle_id}")
        lookup = {(p.l, p.k, p.theta): p.gain for p in self.vehicles[vehicle_id]}
        h = np.zeros(self.n_candidates, dtype=complex)
        for j, c in enumerate(self.candidates):
            if c.owner_vehicle == vehicle_id:
                h[j] = lookup[(c.l, c.k, c.theta)]
        return h


@dataclass
class Observation:
    y: np.ndarray
    snr_db: float
    noise_precision_true: float
    vehicle_id: int


def physical_to_index(tau, nu, cfg):
    """Round a physical (delay, Doppler) pair onto the DD grid.

    Ties round toward zero, e.g. 2.5 -> 2 and -2.5 -> -2.
    """

    def _round(v):
        # nearest integer, exact halves (to 1e-12) toward zero
        return int(math.copysign(math.ceil(abs(v) - 0.5 - 1e-12), v))

    l = _round(tau * cfg.M * cfg.delta_f)
    k = _round(nu * cfg.N * cfg.T)
    if not 0 <= l <= cfg.M - 1:
        raise ValueError(f"delay index {l} outside [0, {cfg.M - 1}]")
    if not 0 <= k <= cfg.N - 1:
        raise ValueError(f"Doppler index {k} outside [0, {cfg.N - 1}]")
    return l, k


def design_beamformers(candidates, n_bs):
    """Attach a matched beamformer ``f_p = b(theta_p)`` to every candidate."""
    if n_bs < 1:
        raise ValueError("n_bs must be >= 1")
    return [replace(c, beamformer=steering_vector(c.theta, n_bs)) for c in candidates]


def generate_scenario(K, paths_per_vehicle, l_max, k_max, n_bs, cfg, seed, distinct_pool=True):
    """Draw a K-vehicle scenario and its pooled, shuffled candidate list.

    Parameters
    ----------
    K : int
        Number of vehicles.
    paths_per_vehicle : int or sequence of int
        Path count per vehicle.
    l_max, k_max : int
        Largest delay / Doppler index.
    n_bs : int
        RSU antenna count.
    cfg : FrameConfig
    seed : int
    distinct_pool : bool
        If True (default) no two candidates in the pool share a (delay,
        Doppler) pair. Under the collapsed beam model every candidate's
        operator depends on (l, k) only, so a shared pair makes two
        dictionary atoms identical and association unidentifiable. With
        False, distinctness is enforced within each vehicle only.
    """
    if np.isscalar(paths_per_vehicle):
        paths_per_vehicle = [int(paths_per_vehicle)] * K
    paths_per_vehicle = [int(p) for p in paths_per_vehicle]
    if len(paths_per_vehicle) != K:
        raise ValueError(f"got {len(paths_per_vehicle)} path counts for K={K} vehicles")
    if not (0 <= l_max <= cfg.M - 1 and 0 <= k_max <= cfg.N - 1):
        raise ValueError(f"l_max={l_max}, k_max={k_max} exceed the {cfg.M}x{cfg.N} grid")
    grid = [(l, k) for k in range(k_max + 1) for l in range(l_max + 1)]
    need = sum(paths_per_vehicle) if distinct_pool else max(paths_per_vehicle, default=0)
    if need > len(grid):
        raise ValueError(f"cannot draw {need} distinct (l, k) pairs from a {len(grid)}-point grid")

    rng = np.random.default_rng(seed)
    vehicles = []
    if distinct_pool:
        picks = rng.choice(len(grid), size=need, replace=False)
        splits = np.split(picks, np.cumsum(paths_per_vehicle)[:-1])
    else:
        splits = [rng.choice(len(grid), size=p, replace=False) for p in paths_per_vehicle]
    for vid, (n_paths, idx) in enumerate(zip(paths_per_vehicle, splits)):
        thetas = rng.uniform(-np.pi / 2, np.pi / 2, size=n_paths)
        gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) * np.sqrt(0.5 / n_paths)
        vehicles.append(
            [PathTruth(vid, grid[i][0], grid[i][1], float(t), complex(g)) for i, t, g in zip(idx, thetas, gains)]
        )

    pooled = [p for v in vehicles for p in v]
    order = rng.permutation(len(pooled))
    candidates = [
        Candidate(j + 1, pooled[i].l, pooled[i].k, pooled[i].theta, pooled[i].vehicle_id)
        for j, i in enumerate(order)
    ]
    return Scenario(cfg, n_bs, vehicles, design_beamformers(candidates, n_bs), seed)


def noiseless_uplink(scenario, vehicle_id, frame):
    """Sum of this vehicle's paths, each received through its own matched beamformer."""
    if not 0 <= vehicle_id < len(scenario.vehicles):
        raise KeyError(f"unknown vehicle_id {vehicle_id}")
    cfg = scenario.cfg
    frame.validate(cfg)
    out = np.zeros(cfg.frame_len, dtype=complex)
    beams = {(c.l, c.k, c.theta): c.beamformer for c in scenario.candidates if c.owner_vehicle == vehicle_id}
    for p in scenario.vehicles[vehicle_id]:
        f = beams[(p.l, p.k, p.theta)]
        gain = p.gain * np.vdot(f, steering_vector(p.theta, scenario.n_bs))
        out += apply_path(frame.x, p.l, p.k, gain, cfg)
    return out


def synthesize_uplink(scenario, vehicle_id, frame, snr_db, seed):
    """Noisy DD observation for one vehicle at a per-frame SNR.

    The noise variance is ``||signal||^2 / (M*N * 10**(snr_db/10))``. Pass
    ``snr_db=np.inf`` for a noiseless observation. A zero signal is treated
    as unit power per sample so the noise level stays defined.
    """
    signal = noiseless_uplink(scenario, vehicle_id, frame)
    dim = signal.size
    if np.isposinf(snr_db):
        return Observation(signal, float(snr_db), np.inf, vehicle_id)
    power = np.vdot(signal, signal).real
    if power <= 0:
        power = float(dim)
    noise_var = power / (dim * 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) * np.sqrt(noise_var / 2)
    return Observation(signal + noise, float(snr_db), 1.0 / noise_var, vehicle_id)


def random_frame(cfg, pilot_fraction, rng):
    """Uniform random data symbols with ``round(pilot_fraction * M*N)`` (at least one) pilots."""
    dim = cfg.frame_len
    alphabet = cfg.alphabet_array
    n_pilots = max(1, int(round(pilot_fraction * dim)))
    idx = rng.integers(0, alphabet.size, size=dim)
    mask = np.zeros(dim, dtype=bool)
    mask[rng.choice(dim, size=n_pilots, replace=False)] = True
    return DdFrame(alphabet[idx], mask, cfg.M, cfg.N), idx


_SCENARIO_HEADER = "# candidate_id,vehicle,l,k,theta,gain_re,gain_im"


def write_scenario(scenario, fh):
    """Write one line per candidate: id, vehicle, l, k, theta, Re(gain), Im(gain)."""
    cfg = scenario.cfg
    fh.write(f"# M={cfg.M} N={cfg.N} n_bs={scenario.n_bs} seed={scenario.rng_seed}\n")
    fh.write(_SCENARIO_HEADER + "\n")
    gains = {}
    for vid in range(len(scenario.vehicles)):
        h = scenario.true_gains(vid)
        for j, c in enumerate(scenario.candidates):
            if c.owner_vehicle == vid:
                gains[c.candidate_id] = h[j]
    for c in scenario.candidates:
        g = gains[c.candidate_id]
        fh.write(f"{c.candidate_id},{c.owner_vehicle},{c.l},{c.k},{float(c.theta)!r},{float(g.real)!r},{float(g.imag)!r}\n")


def read_scenario(fh, cfg, n_bs, rng_seed=0):
    """Parse the flat candidate format back into a ``Scenario``."""
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    rows = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        cid, vid, l, k = (int(v) for v in parts[:4])
        theta, g_re, g_im = (float(v) for v in parts[4:])
        rows.append((cid, vid, l, k, theta, complex(g_re, g_im)))
    n_vehicles = max((r[1] for r in rows), default=-1) + 1
    vehicles = [[] for _ in range(n_vehicles)]
    candidates = []
    for cid, vid, l, k, theta, g in rows:
        vehicles[vid].append(PathTruth(vid, l, k, theta, g))
        candidates.append(Candidate(cid, l, k, theta, vid))
    return Scenario(cfg, n_bs, vehicles, design_beamformers(candidates, n_bs), rng_seed)
