"""Flat ``key = value`` experiment configuration files."""
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
import math

import numpy as np

from .otfs import QPSK, FrameConfig
from .pacesd import SolverConfig

DETECTORS = ("pacesd", "mmse", "uamp_csi", "oracle_ch", "sbl_known_x")

ALPHABETS = {
    "bpsk": (1 + 0j, -1 + 0j),
    "qpsk": QPSK,
}


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines a Monte Carlo sweep.

    Attributes
    ----------
    frame : FrameConfig
    K, paths_per_vehicle, l_max, k_max, n_bs : int
        Scenario generator settings.
    distinct_pool : bool
        Forbid repeated (delay, Doppler) pairs across the candidate pool.
    pilot_fraction : float
        Fraction of grid positions carrying known symbols.
    snr_grid_db : tuple of float
    trials : int
        Monte Carlo trials per SNR point.
    base_seed : int
    solver : SolverConfig
    detectors : tuple of str
    record_wall_time : bool
        Write measured runtimes into the CSV. Off by default so repeated
        sweeps produce byte-identical files.
    """

    frame: FrameConfig = field(default_factory=lambda: FrameConfig(16, 8))
    K: int = 3
    paths_per_vehicle: int = 2
    l_max: int = 3
    k_max: int = 3
    n_bs: int = 16
    distinct_pool: bool = True
    pilot_fraction: float = 1 / 16
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 100
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    detectors: tuple = DETECTORS
    record_wall_time: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ConfigError("snr_grid_db must not be empty")
        if not 0 < self.pilot_fraction < 1:
            raise ConfigError("pilot_fraction must lie in (0, 1)")
        if self.K < 1 or self.paths_per_vehicle < 1 or self.n_bs < 1:
            raise ConfigError("K, paths_per_vehicle and n_bs must be >= 1")
        if not (0 <= self.l_max < self.frame.M and 0 <= self.k_max < self.frame.N):
            raise ConfigError(f"l_max/k_max must fit the {self.frame.M}x{self.frame.N} grid")
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad or not self.detectors:
            raise ConfigError(f"detectors must be a non-empty subset of {DETECTORS}, got {self.detectors}")
        n = len(self.frame.alphabet)
        if n & (n - 1):
            raise ConfigError(f"alphabet size {n} is not a power of two")


def _parse_bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_fraction(s):
    return float(Fraction(s.replace(" ", "")))


def _parse_grid(s):
    """``0, 5, 10`` or ``start:step:stop`` (stop inclusive)."""
    if ":" in s:
        parts = [float(p) for p in s.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise ValueError(f"range must be start:step:stop with positive step, got {s!r}")
        start, step, stop = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(v) for v in start + step * np.arange(n))
    return tuple(float(v) for v in s.split(",") if v.strip())


def _parse_alphabet(s):
    key = s.strip().lower()
    if key not in ALPHABETS:
        raise ValueError(f"unknown alphabet {s!r}; choose from {sorted(ALPHABETS)}")
    return ALPHABETS[key]


_TOP = {
    "scenario.K": ("K", int),
    "scenario.paths_per_vehicle": ("paths_per_vehicle", int),
    "scenario.l_max": ("l_max", int),
    "scenario.k_max": ("k_max", int),
    "scenario.n_bs": ("n_bs", int),
    "scenario.distinct_pool": ("distinct_pool", _parse_bool),
    "pilot_fraction": ("pilot_fraction", _parse_fraction),
    "snr_grid_db": ("snr_grid_db", _parse_grid),
    "trials": ("trials", int),
    "base_seed": ("base_seed", int),
    "detectors": ("detectors", lambda s: tuple(d.strip() for d in s.split(",") if d.strip())),
    "record_wall_time": ("record_wall_time", _parse_bool),
}

_FRAME = {
    "M": int,
    "N": int,
    "delta_f": float,
    "f_c": float,
    "alphabet": _parse_alphabet,
    "pulse": str,
}

_SOLVER_TYPES = {bool: _parse_bool, int: int, float: float, str: str}


def _solver_parsers():
    out = {}
    for f in fields(SolverConfig):
        default = getattr(SolverConfig(), f.name)
        out[f.name] = _SOLVER_TYPES[type(default)]
    return out


def known_keys():
    """Every accepted configuration key."""
    keys = list(_TOP) + [f"frame.{k}" for k in _FRAME] + [f"solver.{k}" for k in _solver_parsers()]
    return sorted(keys)


def parse_config(text, source="<string>"):
    """Parse configuration text into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        On syntax errors, unknown or repeated keys, unparsable values and
        failed validation. Messages carry ``source:line``.
    """
    frame_kw, solver_kw, top_kw = {}, {}, {}
    seen = set()
    solver_parsers = _solver_parsers()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key in _TOP:
                name, parse = _TOP[key]
                top_kw[name] = parse(value)
            elif key.startswith("frame.") and key[6:] in _FRAME:
                frame_kw[key[6:]] = _FRAME[key[6:]](value)
            elif key.startswith("solver.") and key[7:] in solver_parsers:
                solver_kw[key[7:]] = solver_parsers[key[7:]](value)
            else:
                raise ConfigError(f"{where}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    try:
        base = ExperimentConfig()
        frame = replace(base.frame, **frame_kw)
        solver = replace(base.solver, **solver_kw)
        return replace(base, frame=frame, solver=solver, **top_kw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    """Read and parse a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))
