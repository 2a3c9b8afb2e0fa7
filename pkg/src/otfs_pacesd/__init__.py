"""Sensing-aided OTFS uplink reception: joint candidate association, channel
estimation and symbol detection by bilinear message passing, with perfect-CSI
baselines and a Monte Carlo harness."""
from .baselines import (
    EffectiveChannel,
    mmse_detect,
    oracle_channel_mmse,
    sbl_channel_known_symbols,
    uamp_detect_perfect_csi,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimators import LinearDetector, PacesdDetector
from .harness import TrialMetrics, gray_bits, run_trial, sweep
from .otfs import QPSK, DdFrame, FrameConfig, build_path_operator, otfs_demodulate, otfs_modulate
from .pacesd import (
    Dictionary,
    NonFiniteStateError,
    PacesdResult,
    SolverConfig,
    SolverPreparationError,
    SolverState,
    UnitaryModel,
    assemble_dictionary,
    run_pacesd,
    solve_pacesd,
    unitary_preprocess,
)
from .scenario import (
    Candidate,
    Observation,
    PathTruth,
    Scenario,
    generate_scenario,
    random_frame,
    read_scenario,
    synthesize_uplink,
    write_scenario,
)

__version__ = "0.1.0"
