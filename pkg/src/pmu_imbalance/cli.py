"""Command-line entry point: ``pmu-imbalance {detect,sweep,calibrate,scenario-dump}``.

Exit codes are 0 on success, 2 when the configuration or arguments are
invalid, and 3 when a run fails after validation.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, build_config, load_raw
from .detection import Detector, analytic_threshold, glrt, glrt_snh, vuf
from .experiments import ResultTable, empirical_threshold, known_kappa, null_scenario, run_study, simulate_statistics
from .io import write_rows
from .pmu import extract_sequences
from .scenario import generate
from .whitening import covariance_for

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

DETECT_COLUMNS = ("detector", "freq_mode", "statistic", "threshold", "decision", "r", "delta_used", "calibration", "kappa")
CALIBRATE_COLUMNS = ("detector", "calibration", "pfa", "r", "kappa", "sqrt_kappa_r", "tau", "tau_tilde", "trials")
DUMP_COLUMNS = ("name", "value")

# stream id for null-scenario draws made by detect/calibrate
_NULL_STREAM = 2

log = logging.getLogger("pmu_imbalance")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="YAML configuration file (defaults apply when omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set scenario.beta=2")
    common.add_argument("-o", "--output", help="output file, '-' for stdout")
    common.add_argument("--format", choices=("csv", "jsonl"), help="output format")
    common.add_argument("--threads", type=int, help="worker threads for Monte-Carlo runs")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    common.add_argument("--seed", type=int, help="seed for both the scenario and the experiment")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="pmu-imbalance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("detect", parents=[common], help="run the detectors on one simulated record")
    sub.add_parser("sweep", parents=[common], help="run a Monte-Carlo study and write the result table")
    sub.add_parser("calibrate", parents=[common], help="print detector thresholds for a false-alarm target")
    sub.add_parser("scenario-dump", parents=[common], help="print the resolved scenario and its phasors")
    return parser


def _flag_overrides(args) -> list[str]:
    out = []
    if args.output is not None:
        out.append(f"output.path={args.output}")
    if args.format is not None:
        out.append(f"output.format={args.format}")
    if args.threads is not None:
        out.append(f"output.threads={args.threads}")
    if args.trials is not None:
        out.append(f"experiment.trials={args.trials}")
    if args.seed is not None:
        out += [f"scenario.seed={args.seed}", f"experiment.seed={args.seed}"]
    if args.verbose:
        out.append(f"output.verbosity={args.verbose}")
    return out


def _check_output(path: str) -> None:
    if path == "-":
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise ConfigError(f"output.path: directory {parent} is not writable")
    if Path(path).is_dir():
        raise ConfigError(f"output.path: {path} is a directory")


@contextlib.contextmanager
def _open_output(path: str):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit(cfg: RunConfig, rows, columns) -> None:
    with _open_output(cfg.output_path) as fh:
        write_rows(rows, columns, fh, cfg.output_format, cfg.digest)


def cmd_detect(cfg: RunConfig) -> int:
    sc = cfg.scenario
    cov = covariance_for(sc.window_count, sc.samples_per_cycle, sc.noise_variance)
    meas = extract_sequences(generate(sc))
    rows = []
    for spec in cfg.detectors:
        if spec.detector is Detector.VUF:
            null = null_scenario(sc, cfg.null)
            stats = simulate_statistics(
                null, cfg.vuf_calibration_trials, (sc.rng_seed, 0, _NULL_STREAM), [spec], cfg.r, cfg.grid, cfg.threads
            )
            report = vuf(meas, empirical_threshold(stats[spec.label], cfg.pfa))
            mode = "none"
        else:
            kw = dict(delta=sc.frequency_deviation, tau=cfg.tau, pfa=cfg.pfa, grid=cfg.grid)
            if spec.detector is Detector.GLRT:
                report = glrt(meas, cov, cfg.r, spec.freq_mode, **kw)
            else:
                report = glrt_snh(meas, cov, spec.freq_mode, **kw)
            mode = spec.freq_mode.value
        rows.append({**report.as_dict(), "freq_mode": mode})
    _emit(cfg, rows, DETECT_COLUMNS)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    table: ResultTable = run_study(cfg.study, cfg.spec)
    columns = ResultTable.COLUMNS + (("wall_time",) if cfg.timing else ())
    rows = [{c: getattr(row, c) for c in columns} for row in table.rows]
    _emit(cfg, rows, columns)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    sc = cfg.scenario
    kappa = cfg.kappa_override if cfg.kappa_override is not None else known_kappa(sc)
    root = float(np.sqrt(kappa))
    rows = []
    for name, r in (("GLRT", cfg.r), ("GLRT_SNH", 0.0)):
        tau = analytic_threshold(cfg.pfa, kappa, r)
        rows.append({
            "detector": name, "calibration": "analytic", "pfa": cfg.pfa, "r": r, "kappa": kappa,
            "sqrt_kappa_r": root * r, "tau": tau, "tau_tilde": tau + root * r, "trials": 0,
        })
    if cfg.calibrate_empirical:
        null = null_scenario(sc, cfg.null)
        stats = simulate_statistics(
            null, cfg.calibrate_trials, (sc.rng_seed, 0, _NULL_STREAM), cfg.detectors, cfg.r, cfg.grid, cfg.threads
        )
        for spec in cfg.detectors:
            tau = empirical_threshold(stats[spec.label], cfg.pfa)
            if spec.detector is Detector.VUF:
                r, shift = float("nan"), float("nan")
            else:
                r = cfg.r if spec.detector is Detector.GLRT else 0.0
                shift = root * r
            rows.append({
                "detector": spec.label, "calibration": "empirical", "pfa": cfg.pfa, "r": r, "kappa": kappa,
                "sqrt_kappa_r": shift, "tau": tau, "tau_tilde": tau + shift, "trials": cfg.calibrate_trials,
            })
    _emit(cfg, rows, CALIBRATE_COLUMNS)
    return EXIT_OK


def cmd_scenario_dump(cfg: RunConfig) -> int:
    sc = cfg.scenario
    rows = []

    def put(name, value):
        rows.append({"name": name, "value": value})

    for phase, mag, ang in zip("abc", sc.magnitudes, sc.phases):
        put(f"magnitude_{phase}", float(mag))
        put(f"phase_{phase}", float(ang))
    put("nominal_frequency", float(sc.nominal_frequency))
    put("frequency_deviation", float(sc.frequency_deviation))
    put("samples_per_cycle", sc.samples_per_cycle)
    put("window_count", sc.window_count)
    put("noise_variance", float(sc.noise_variance))
    put("harmonics", " ".join(repr(float(a)) for a in sc.harmonic_gains))
    put("seed", sc.rng_seed)
    for name, c in zip(("C_0", "C_plus", "C_minus"), sc.symmetrical_phasors()):
        put(f"{name}.real", float(np.real(c)))
        put(f"{name}.imag", float(np.imag(c)))
        put(f"{name}.abs", float(np.abs(c)))
        put(f"{name}.angle", float(np.angle(c)))
    put("kappa", known_kappa(sc))
    _emit(cfg, rows, DUMP_COLUMNS)
    return EXIT_OK


COMMANDS = {
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "scenario-dump": cmd_scenario_dump,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage already; keep --help/--version at 0
        return int(exc.code or 0)
    try:
        raw = load_raw(args.config, list(args.overrides) + _flag_overrides(args))
        cfg = build_config(raw, need_sweep=args.command == "sweep")
        _check_output(cfg.output_path)
    except (ConfigError, ValueError) as exc:
        print(f"pmu-imbalance: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID

    level = {0: logging.WARNING, 1: logging.INFO}.get(cfg.verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - report any failure after validation as a runtime error
        log.debug("run failed", exc_info=True)
        print(f"pmu-imbalance: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
