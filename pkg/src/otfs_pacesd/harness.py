"""Monte Carlo trials, metrics and CSV output for detector comparisons."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import logging
import math
import time

import numpy as np

from .baselines import (
    EffectiveChannel,
    mmse_detect,
    oracle_channel_mmse,
    sbl_channel_known_symbols,
    uamp_detect_perfect_csi,
)
from .config import ConfigError, ExperimentConfig
from .pacesd import (
    NonFiniteStateError,
    SolverPreparationError,
    assemble_dictionary,
    solve_pacesd,
    unitary_preprocess,
)
from .scenario import generate_scenario, random_frame, synthesize_uplink

logger = logging.getLogger(__name__)

RAW_COLUMNS = ("snr_db", "detector", "seed", "trial", "ber", "nmse_db", "hit", "false_alarm", "iterations",
               "wall_time_s")
TRACE_COLUMNS = ("snr_db", "trial", "iter", "beta_hat", "epsilon", "mean_gamma", "c_norm", "symbol_flips")

SNR_NOTE = ("snr_db = 10*log10(||received signal||^2 / (MN * noise variance)) per frame, "
            "using the realized DD-domain signal power of that frame")


@dataclass
class TrialMetrics:
    """One detector's outcome on one trial. Inapplicable metrics are NaN."""

    snr_db: float
    detector: str
    seed: int
    trial: int
    ber: float = math.nan
    nmse_db: float = math.nan
    hit: float = math.nan
    false_alarm: float = math.nan
    iterations: int = 0
    wall_time_s: float = math.nan
    failed: bool = field(default=False, compare=False)

    def row(self):
        return [_fmt(self.snr_db), self.detector, str(self.seed), str(self.trial), _fmt(self.ber),
                _fmt(self.nmse_db), _fmt(self.hit), _fmt(self.false_alarm), str(self.iterations),
                _fmt(self.wall_time_s)]


def _fmt(v):
    return repr(float(v))


def gray_bits(symbol_index, alphabet_size):
    """Binary-reflected Gray code of ``symbol_index`` as an array of bits (MSB first).

    Vectorized over ``symbol_index``; output shape is ``index.shape + (log2 size,)``.

    Examples
    --------
    >>> gray_bits(np.arange(4), 4).tolist()
    [[0, 0], [0, 1], [1, 1], [1, 0]]
    """
    if alphabet_size < 2 or alphabet_size & (alphabet_size - 1):
        raise ConfigError(f"alphabet size {alphabet_size} is not a power of two >= 2")
    n_bits = alphabet_size.bit_length() - 1
    idx = np.asarray(symbol_index, dtype=np.int64)
    if np.any((idx < 0) | (idx >= alphabet_size)):
        raise ValueError("symbol index out of range")
    g = idx ^ (idx >> 1)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((g[..., None] >> shifts) & 1).astype(np.int8)


def bit_error_rate(idx_hat, idx_true, data_mask, alphabet_size):
    """Fraction of Gray-mapped bits in error over ``data_mask`` positions."""
    data_mask = np.asarray(data_mask, dtype=bool)
    if not data_mask.any():
        return math.nan
    b_hat = gray_bits(np.asarray(idx_hat)[data_mask], alphabet_size)
    b_true = gray_bits(np.asarray(idx_true)[data_mask], alphabet_size)
    return float(np.mean(b_hat != b_true))


def nmse_db(h_hat, h_true):
    """``10 log10(||h_hat - h||^2 / ||h||^2)`` over the entries where ``h`` is nonzero."""
    h_true = np.asarray(h_true)
    active = h_true != 0
    den = np.sum(np.abs(h_true[active]) ** 2)
    num = np.sum(np.abs(np.asarray(h_hat)[active] - h_true[active]) ** 2)
    if den == 0:
        return math.nan
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(num / den))


def hit_false_alarm(support, h_true):
    """``(hit, false_alarm)`` of a detected 1-based support against the true sparse gains."""
    truth = frozenset(int(i) + 1 for i in np.flatnonzero(np.asarray(h_true)))
    support = frozenset(support)
    return int(truth <= support), int(bool(support - truth))


def trial_seed(base_seed, trial_index, snr_index):
    """32-bit seed of one (SNR point, trial) cell; independent of execution order."""
    ss = np.random.SeedSequence([int(base_seed), int(snr_index), int(trial_index)])
    return int(ss.generate_state(1, np.uint32)[0])


def draw_trial(cfg, snr_db, seed):
    """Scenario, frame and observation of one trial, all derived from ``seed``."""
    s_scen, s_frame, s_noise = np.random.SeedSequence(seed).spawn(3)
    scen = generate_scenario(cfg.K, cfg.paths_per_vehicle, cfg.l_max, cfg.k_max, cfg.n_bs, cfg.frame,
                             seed=int(s_scen.generate_state(1)[0]), distinct_pool=cfg.distinct_pool)
    rng = np.random.default_rng(s_frame)
    frame, idx = random_frame(cfg.frame, cfg.pilot_fraction, rng)
    vid = int(rng.integers(cfg.K))
    obs = synthesize_uplink(scen, vid, frame, snr_db, seed=int(s_noise.generate_state(1)[0]))
    return scen, frame, idx, obs


def run_trial(cfg, snr_db, trial_index, snr_index=0, trace=False, callback=None):
    """Run every enabled detector on one seeded trial.

    ``callback(state)`` is invoked after every iteration of the SBL-based
    detectors (``pacesd`` and ``sbl_known_x``).

    Returns
    -------
    metrics : list of TrialMetrics
        One entry per detector, in ``cfg.detectors`` order.
    trace_rows : list of tuple
        Per-iteration solver diagnostics (empty unless ``trace`` and
        ``pacesd`` is enabled).
    """
    seed = trial_seed(cfg.base_seed, trial_index, snr_index)
    scen, frame, idx, obs = draw_trial(cfg, snr_db, seed)
    alphabet = cfg.frame.alphabet_array
    n_sym = alphabet.size
    data = ~frame.pilot_mask
    h_true = scen.true_gains(obs.vehicle_id)
    active = np.flatnonzero(h_true)
    D = assemble_dictionary(scen.candidates, cfg.frame)
    eff = EffectiveChannel.from_paths(h_true[active], D.G[active], obs.noise_precision_true)
    shared = {}

    def model():
        if "model" not in shared:
            shared["model"] = unitary_preprocess(D, obs.y)
        return shared["model"]

    out, trace_rows = [], []
    for name in cfg.detectors:
        m = TrialMetrics(float(snr_db), name, seed, int(trial_index))
        t0 = time.perf_counter()
        try:
            if name == "pacesd":
                res = solve_pacesd(model(), frame.pilot_mask, frame.x, alphabet, cfg.solver,
                                   grid=[(c.l, c.k) for c in scen.candidates], frame_cfg=cfg.frame, trace=trace,
                                   callback=callback)
                m.ber = bit_error_rate(res.x_index, idx, data, n_sym)
                m.nmse_db = nmse_db(res.h_hat, h_true)
                m.hit, m.false_alarm = hit_false_alarm(res.support, h_true)
                m.iterations = res.total_iterations
                trace_rows = [(float(snr_db), int(trial_index)) + tuple(r) for r in res.trace]
            elif name == "mmse":
                _, _, x_idx = mmse_detect(obs.y, eff, alphabet)
                m.ber = bit_error_rate(x_idx, idx, data, n_sym)
            elif name == "uamp_csi":
                pilot = np.where(frame.pilot_mask, frame.x, np.nan)
                res = uamp_detect_perfect_csi(obs.y, eff, alphabet, cfg.solver, pilot=pilot)
                m.ber = bit_error_rate(res.x_index, idx, data, n_sym)
                m.iterations = res.iterations_run
            elif name == "oracle_ch":
                h_or = np.zeros_like(h_true)
                h_or[active] = oracle_channel_mmse(obs.y, frame.x, D.G[active], obs.noise_precision_true)
                m.nmse_db = nmse_db(h_or, h_true)
            elif name == "sbl_known_x":
                res = sbl_channel_known_symbols(model(), frame.x, alphabet, cfg.solver, callback=callback)
                m.nmse_db = nmse_db(res.h_hat, h_true)
                m.hit, m.false_alarm = hit_false_alarm(res.support, h_true)
                m.iterations = res.total_iterations
        except (NonFiniteStateError, SolverPreparationError, np.linalg.LinAlgError) as exc:
            logger.warning("trial %d at %.1f dB, detector %s failed: %s", trial_index, snr_db, name, exc)
            m = TrialMetrics(float(snr_db), name, seed, int(trial_index), iterations=-1, failed=True)
        if cfg.record_wall_time:
            m.wall_time_s = time.perf_counter() - t0
        out.append(m)
    return out, trace_rows


def _db_of_mean(values_db):
    v = np.asarray(values_db, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return math.nan
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(np.mean(10 ** (v / 10))))


def _nanmean(values):
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else math.nan


def aggregate(metrics):
    """Per-(SNR, detector) summary rows in first-seen order.

    BER, hit rate, false-alarm rate, iterations and wall time are plain
    means over non-NaN entries; NMSE is the dB value of the mean linear
    ratio. Failed trials are excluded.
    """
    groups = {}
    for m in metrics:
        if not m.failed:
            groups.setdefault((m.snr_db, m.detector), []).append(m)
    rows = []
    for (snr, det), ms in groups.items():
        rows.append(dict(
            snr_db=snr,
            detector=det,
            n=len(ms),
            ber=_nanmean([m.ber for m in ms]),
            nmse_db=_db_of_mean([m.nmse_db for m in ms]),
            hit=_nanmean([m.hit for m in ms]),
            false_alarm=_nanmean([m.false_alarm for m in ms]),
            iterations=_nanmean([m.iterations for m in ms]),
            wall_time_s=_nanmean([m.wall_time_s for m in ms]),
        ))
    return rows


def _aggregate_row(a):
    return [_fmt(a["snr_db"]), a["detector"], "", "mean", _fmt(a["ber"]), _fmt(a["nmse_db"]), _fmt(a["hit"]),
            _fmt(a["false_alarm"]), _fmt(a["iterations"]), _fmt(a["wall_time_s"])]


def _cell(args):
    cfg, snr_db, trial, snr_index, trace = args
    return run_trial(cfg, snr_db, trial, snr_index, trace)


def iter_trials(cfg, parallel=1, trace=False, callback=None):
    """Yield ``run_trial`` outputs in (SNR, trial) order, optionally from worker processes.

    A ``callback`` cannot cross process boundaries and requires ``parallel=1``.
    """
    jobs = [(cfg, snr, t, i, trace) for i, snr in enumerate(cfg.snr_grid_db) for t in range(cfg.trials)]
    if callback is not None and parallel > 1:
        raise ValueError("a solver callback requires parallel=1")
    if parallel <= 1:
        for cfg_, snr, t, i, tr in jobs:
            yield run_trial(cfg_, snr, t, i, tr, callback=callback)
        return
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        yield from pool.map(_cell, jobs, chunksize=max(1, len(jobs) // (8 * parallel)))


def sweep(cfg, out_path, parallel=1, trace_path=None, callback=None):
    """Run the full SNR x trial grid and write the CSV.

    The file starts with ``#`` comment lines (SNR definition, column notes),
    then the header, one raw row per (SNR, trial, detector) flushed as it
    completes, and finally one aggregate row per (SNR, detector) whose
    ``trial`` field is ``mean`` and ``seed`` field empty.

    Parameters
    ----------
    cfg : ExperimentConfig
    out_path : str or path
    parallel : int
        Worker processes; output is identical for every value.
    trace_path : str or path, optional
        Also write per-iteration solver diagnostics for ``pacesd``.
    callback : callable, optional
        Per-iteration solver hook, see :func:`run_trial`. Serial runs only.

    Returns
    -------
    list of dict
        The aggregate rows.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("cfg must be an ExperimentConfig")
    metrics = []
    trace_fh = None
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {SNR_NOTE}\n")
            fh.write("# nmse_db over the transmitting vehicle's true paths only; NaN marks a metric the "
                     "detector does not produce; iterations = -1 marks a failed trial\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RAW_COLUMNS)
            if trace_path is not None:
                trace_fh = open(trace_path, "w", newline="", encoding="utf-8")
                trace_writer = csv.writer(trace_fh, lineterminator="\n")
                trace_writer.writerow(TRACE_COLUMNS)
            for ms, trace_rows in iter_trials(cfg, parallel, trace=trace_path is not None, callback=callback):
                for m in ms:
                    writer.writerow(m.row())
                metrics.extend(ms)
                fh.flush()
                if trace_fh is not None:
                    for r in trace_rows:
                        trace_writer.writerow([_fmt(r[0]), r[1], r[2], _fmt(r[3]), _fmt(r[4]), _fmt(r[5]),
                                               _fmt(r[6]), r[7]])
            agg = aggregate(metrics)
            for a in agg:
                writer.writerow(_aggregate_row(a))
    except OSError as exc:
        raise OSError(f"writing {out_path}: {exc}") from exc
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return agg


def read_sweep(path):
    """Load a sweep CSV into ``(raw_rows, aggregate_rows)`` lists of dicts with numeric fields."""
    raw, agg = [], []
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rec = dict(row)
        for k in ("snr_db", "ber", "nmse_db", "hit", "false_alarm", "iterations", "wall_time_s"):
            rec[k] = float(rec[k])
        if rec["trial"] == "mean":
            agg.append(rec)
        else:
            rec["trial"] = int(rec["trial"])
            rec["seed"] = int(rec["seed"])
            raw.append(rec)
    return raw, agg
