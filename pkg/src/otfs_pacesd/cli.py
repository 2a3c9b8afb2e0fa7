"""Command-line entry point: scenario generation and Monte Carlo sweeps."""
import argparse
import logging
import sys

from .config import ConfigError, load_config
from .harness import draw_trial, sweep, trial_seed
from .pacesd import NonFiniteStateError, SolverPreparationError
from .scenario import write_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("otfs_pacesd")


class _Parser(argparse.ArgumentParser):
    # usage errors count as configuration errors
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="otfs-pacesd", description="Sensing-aided OTFS uplink simulation.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-scenario", help="draw one scenario and write its candidate table")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--trial", type=int, default=0, help="trial index whose scenario is written")

    r = sub.add_parser("run", help="run the configured sweep serially")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="run the configured sweep, optionally in parallel")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--trace", action="store_true", help="also write <out>.trace.csv with solver diagnostics")
    return p


def _gen_scenario(args):
    cfg = load_config(args.config)
    seed = trial_seed(cfg.base_seed, args.trial, 0)
    scen, *_ = draw_trial(cfg, cfg.snr_grid_db[0], seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_scenario(scen, fh)
    log.info("wrote %d candidates to %s", scen.n_candidates, args.out)


def _sweep(args, parallel=1, trace=False):
    cfg = load_config(args.config)
    if parallel < 1:
        raise ConfigError("--parallel must be >= 1")
    trace_path = f"{args.out}.trace.csv" if trace else None
    agg = sweep(cfg, args.out, parallel=parallel, trace_path=trace_path)
    for a in agg:
        log.info("%6.1f dB %-12s ber=%.3e nmse=%.2f dB hit=%.3f fa=%.3f", a["snr_db"], a["detector"], a["ber"],
                 a["nmse_db"], a["hit"], a["false_alarm"])


def main(argv=None):
    """Run the CLI; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    try:
        if args.command == "gen-scenario":
            _gen_scenario(args)
        elif args.command == "run":
            _sweep(args)
        else:
            _sweep(args, parallel=args.parallel, trace=args.trace)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, NonFiniteStateError, SolverPreparationError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
