"""Run configuration: YAML file plus ``--set`` overrides, validated fail-closed."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .detection import DEFAULT_R
from .estimation import GridSpec
from .experiments import STUDIES, DetectorSpec, ExperimentSpec
from .scenario import TWO_PI, ThreePhaseScenario, snr_to_sigma2


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# every accepted key with its default; None means "not set"
SCHEMA: dict[str, dict] = {
    "scenario": {
        "beta": None,
        "epsilon": None,
        "magnitudes": None,
        "phases": None,
        "v_a": 1.0,
        "nominal_hz": 60.0,
        "deviation_hz": 0.1,
        "samples_per_cycle": 48,
        "window_count": 12,
        "snr_db": None,
        "noise_variance": None,
        "harmonics": [],
        "seed": 0,
    },
    "detection": {
        "detectors": ["GLRT", "GLRT:known", "GLRT_SNH:known", "VUF"],
        "r": DEFAULT_R,
        "pfa": 0.15,
        "tau": None,
        "null": "balanced",
        "vuf_calibration_trials": 20000,
        "grid": {"lower_hz": -5.0, "upper_hz": 5.0, "points": 2001, "refine": "parabolic"},
    },
    "experiment": {
        "study": None,
        "axis": "beta",
        "values": [],
        "trials": 5000,
        "seed": 0,
        "estimators": ["suboptimal", "ml_H0", "ml_H1"],
        "calibration_factor": 4,
    },
    "calibrate": {
        "empirical": False,
        "trials": 20000,
        "kappa": None,
    },
    "output": {
        "path": "-",
        "format": "csv",
        "threads": 1,
        "timing": False,
        "verbosity": 0,
    },
}


def parse_angle(value, key: str = "angle") -> float:
    """Radians from a number or a multiple of pi: ``0.25pi``, ``-2/3pi``, ``pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected an angle, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower().replace(" ", "")
        try:
            if not text.endswith("pi"):
                return float(text)
            coef = text[:-2].rstrip("*")
            if coef in ("", "+", "-"):
                return -np.pi if coef == "-" else np.pi
            num, _, den = coef.partition("/")
            return float(num) / (float(den) if den else 1.0) * np.pi
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{key}: cannot parse angle {value!r}")


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    dotted, _, text = assignment.partition("=")
    parts = dotted.strip().split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-mapping")
    node[parts[-1]] = yaml.safe_load(text)


def load_raw(path: str | Path | None, overrides=()) -> dict:
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping at top level")
    for assignment in overrides:
        apply_override(raw, assignment)
    return _merge(SCHEMA, raw, "")


def _num(section: dict, key: str, where: str, *, integer=False, positive=False, nonneg=False):
    value = section[key]
    full = f"{where}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{full}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{full}: expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{full}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{full}: must be > 0, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{full}: must be >= 0, got {value!r}")
    return int(value) if integer else float(value)


def build_scenario(sec: dict) -> ThreePhaseScenario:
    where = "scenario"
    v_a = _num(sec, "v_a", where, positive=True)
    omega0 = TWO_PI * _num(sec, "nominal_hz", where, positive=True)
    delta = TWO_PI * _num(sec, "deviation_hz", where)
    N = _num(sec, "samples_per_cycle", where, integer=True)
    K = _num(sec, "window_count", where, integer=True)
    if N < 3:
        raise ConfigError(f"scenario.samples_per_cycle: must be >= 3, got {N}")
    if K < 1:
        raise ConfigError(f"scenario.window_count: must be >= 1, got {K}")
    if sec["noise_variance"] is not None:
        if sec["snr_db"] is not None:
            raise ConfigError("scenario: give either snr_db or noise_variance, not both")
        sigma2 = _num(sec, "noise_variance", where, nonneg=True)
    else:
        snr = 5.0 if sec["snr_db"] is None else _num(sec, "snr_db", where)
        sigma2 = snr_to_sigma2(snr, v_a)
    harmonics = sec["harmonics"] or []
    if not isinstance(harmonics, list) or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) for a in harmonics
    ):
        raise ConfigError("scenario.harmonics: expected a list of numbers")
    seed = _num(sec, "seed", where, integer=True, nonneg=True)
    explicit = sec["magnitudes"] is not None or sec["phases"] is not None
    if explicit:
        if sec["beta"] is not None or sec["epsilon"] is not None:
            raise ConfigError("scenario: give either magnitudes/phases or beta/epsilon, not both")
        mags, phases = sec["magnitudes"], sec["phases"]
        if not (isinstance(mags, list) and len(mags) == 3):
            raise ConfigError("scenario.magnitudes: expected three numbers")
        if not (isinstance(phases, list) and len(phases) == 3):
            raise ConfigError("scenario.phases: expected three angles")
        if any(isinstance(m, bool) or not isinstance(m, (int, float)) or m < 0 for m in mags):
            raise ConfigError("scenario.magnitudes: entries must be numbers >= 0")
        return ThreePhaseScenario(
            magnitudes=tuple(float(m) for m in mags),
            phases=tuple(parse_angle(p, "scenario.phases") for p in phases),
            nominal_frequency=omega0,
            frequency_deviation=delta,
            samples_per_cycle=N,
            window_count=K,
            noise_variance=sigma2,
            harmonics=tuple(float(a) for a in harmonics),
            rng_seed=seed,
        )
    beta = 1.0 if sec["beta"] is None else _num(sec, "beta", where, nonneg=True)
    epsilon = 0.0 if sec["epsilon"] is None else parse_angle(sec["epsilon"], "scenario.epsilon")
    sc = ThreePhaseScenario.baseline(
        beta=beta,
        epsilon=epsilon,
        v_a=v_a,
        frequency_deviation=delta,
        samples_per_cycle=N,
        window_count=K,
        nominal_frequency=omega0,
        harmonics=tuple(float(a) for a in harmonics),
        rng_seed=seed,
    )
    return sc.with_(noise_variance=sigma2)


def build_grid(sec: dict) -> GridSpec:
    where = "detection.grid"
    refine = sec["refine"]
    if refine not in (None, "parabolic", "golden"):
        raise ConfigError(f"{where}.refine: expected parabolic, golden or null, got {refine!r}")
    return GridSpec(
        lower=TWO_PI * _num(sec, "lower_hz", where),
        upper=TWO_PI * _num(sec, "upper_hz", where),
        points=_num(sec, "points", where, integer=True, positive=True),
        refine=refine,
    )


def build_detectors(names) -> tuple[DetectorSpec, ...]:
    if not isinstance(names, list) or not names:
        raise ConfigError("detection.detectors: expected a non-empty list")
    out = []
    for name in names:
        try:
            out.append(DetectorSpec.parse(str(name)))
        except ValueError as exc:
            raise ConfigError(f"detection.detectors: bad entry {name!r} ({exc})") from exc
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    scenario: ThreePhaseScenario
    detectors: tuple[DetectorSpec, ...]
    r: float
    pfa: float
    tau: float | None
    null: str
    vuf_calibration_trials: int
    grid: GridSpec
    study: str
    spec: ExperimentSpec | None
    calibrate_empirical: bool
    calibrate_trials: int
    kappa_override: float | None
    output_path: str
    output_format: str
    threads: int
    timing: bool
    verbosity: int

    @property
    def digest(self) -> str:
        """SHA-256 of the resolved settings that can change results (the output section is left out)."""
        relevant = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(relevant, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def build_config(raw: dict, need_sweep: bool = False) -> RunConfig:
    scenario = build_scenario(raw["scenario"])
    det = raw["detection"]
    detectors = build_detectors(det["detectors"])
    r = _num(det, "r", "detection", nonneg=True)
    pfa = _num(det, "pfa", "detection")
    if not 0.0 < pfa < 1.0:
        raise ConfigError(f"detection.pfa: must lie in (0, 1), got {pfa}")
    tau = None if det["tau"] is None else _num(det, "tau", "detection", nonneg=True)
    if det["null"] not in ("balanced", "baseline"):
        raise ConfigError(f"detection.null: expected balanced or baseline, got {det['null']!r}")
    vuf_trials = _num(det, "vuf_calibration_trials", "detection", integer=True, positive=True)
    grid = build_grid(det["grid"])

    out = raw["output"]
    fmt = out["format"]
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"output.format: expected csv or jsonl, got {fmt!r}")
    threads = _num(out, "threads", "output", integer=True, positive=True)
    verbosity = _num(out, "verbosity", "output", integer=True, nonneg=True)
    if not isinstance(out["timing"], bool):
        raise ConfigError("output.timing: expected true or false")
    if not isinstance(out["path"], str) or not out["path"]:
        raise ConfigError("output.path: expected a file path or '-'")

    cal = raw["calibrate"]
    if not isinstance(cal["empirical"], bool):
        raise ConfigError("calibrate.empirical: expected true or false")
    cal_trials = _num(cal, "trials", "calibrate", integer=True, positive=True)
    kappa = None if cal["kappa"] is None else _num(cal, "kappa", "calibrate", positive=True)

    exp = raw["experiment"]
    axis = exp["axis"]
    study = exp["study"] or ("pe" if axis == "tau" else "pd")
    if study not in STUDIES:
        raise ConfigError(f"experiment.study: expected one of {STUDIES}, got {study!r}")
    spec = None
    if need_sweep:
        values = exp["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("experiment.values: sweep list must not be empty")
        if axis == "epsilon":
            values = [parse_angle(v, "experiment.values") for v in values]
        elif not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise ConfigError("experiment.values: expected numbers")
        if axis == "K" and not all(int(v) == v and v >= 1 for v in values):
            raise ConfigError("experiment.values: K sweep needs integers >= 1")
        estimators = exp["estimators"]
        if not isinstance(estimators, list) or not estimators:
            raise ConfigError("experiment.estimators: expected a non-empty list")
        try:
            spec = ExperimentSpec(
                base=scenario,
                axis=axis,
                values=tuple(values),
                trials=_num(exp, "trials", "experiment", integer=True, positive=True),
                pfa=pfa,
                r=r,
                detectors=detectors,
                harmonics=scenario.harmonics,
                estimators=tuple(estimators),
                grid=grid,
                null=det["null"],
                calibration_factor=_num(exp, "calibration_factor", "experiment", integer=True, positive=True),
                seed=_num(exp, "seed", "experiment", integer=True, nonneg=True),
                threads=threads,
            )
        except ValueError as exc:
            raise ConfigError(f"experiment: {exc}") from exc
    return RunConfig(
        raw=raw,
        scenario=scenario,
        detectors=detectors,
        r=r,
        pfa=pfa,
        tau=tau,
        null=det["null"],
        vuf_calibration_trials=vuf_trials,
        grid=grid,
        study=study,
        spec=spec,
        calibrate_empirical=cal["empirical"],
        calibrate_trials=cal_trials,
        kappa_override=kappa,
        output_path=out["path"],
        output_format=fmt,
        threads=threads,
        timing=out["timing"],
        verbosity=verbosity,
    )
