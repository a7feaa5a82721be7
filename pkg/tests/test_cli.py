import csv
import io
import json
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pmu_imbalance import __version__
from pmu_imbalance.cli import main
from pmu_imbalance.config import SCHEMA, ConfigError, build_config, load_raw, parse_angle

README = Path(__file__).resolve().parents[1] / "README.md"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith(f"# pmu_imbalance {__version__} config_sha256=")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_detect_defaults(capsys):
    code, out, _ = run(capsys, "detect", "--set", "detection.vuf_calibration_trials=500")
    assert code == 0
    rows = parse_csv(out)
    assert [r["detector"] for r in rows] == ["GLRT", "GLRT", "GLRT_SNH", "VUF"]
    assert [r["freq_mode"] for r in rows] == ["suboptimal", "known", "known", "none"]
    assert float(rows[0]["r"]) == 0.03
    for r in rows:
        assert r["decision"] == ("unbalanced" if float(r["statistic"]) > float(r["threshold"]) else "balanced")


def test_detect_is_deterministic(capsys):
    args = ("detect", "--set", "scenario.beta=1.0", "--set", "scenario.epsilon=0", "--set", "scenario.magnitudes=null",
            "--set", "detection.detectors=[GLRT]", "--seed", "7")
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first == second
    assert first[0] == 0


def test_detect_balanced_config_file(tmp_path, capsys):
    cfg = tmp_path / "balanced.yaml"
    cfg.write_text(
        "scenario:\n"
        "  magnitudes: [1.0, 1.0, 1.0]\n"
        "  phases: [0.25pi, -5/12pi, 11/12pi]\n"
        "  seed: 3\n"
        "detection:\n"
        "  detectors: [GLRT]\n"
        "  pfa: 0.15\n"
    )
    code, out, _ = run(capsys, "detect", str(cfg))
    assert code == 0
    (row,) = parse_csv(out)
    assert row["calibration"] == "analytic"
    assert float(row["threshold"]) == pytest.approx(np.sqrt(-np.log(0.15)) - np.sqrt(float(row["kappa"])) * 0.03)


@pytest.mark.parametrize(
    "override, field",
    [
        ("scenario.noise_variance=-1", "scenario.noise_variance"),
        ("scenario.bogus=1", "scenario.bogus"),
        ("detection.pfa=1.5", "detection.pfa"),
        ("scenario.samples_per_cycle=2", "scenario.samples_per_cycle"),
        ("detection.detectors=[FOO]", "detection.detectors"),
        ("output.format=xml", "output.format"),
        ("scenario.epsilon=halfpi", "scenario.epsilon"),
    ],
)
def test_validation_errors_exit_2(capsys, override, field):
    code, out, err = run(capsys, "detect", "--set", override)
    assert code == 2
    assert field in err
    assert out == ""


def test_conflicting_noise_settings(capsys):
    code, _, err = run(capsys, "detect", "--set", "scenario.snr_db=5", "--set", "scenario.noise_variance=0.1")
    assert code == 2 and "snr_db" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "detect", str(tmp_path / "nope.yaml"))
    assert code == 2


def test_bad_arguments_exit_2(capsys):
    assert main(["explode"]) == 2
    assert main(["detect", "--format", "xml"]) == 2
    capsys.readouterr()


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "calibrate", "-o", str(tmp_path / "missing" / "out.csv"))
    assert code == 2 and "output.path" in err


def test_runtime_failure_exit_3(capsys):
    code, _, err = run(capsys, "sweep", "--set", "experiment.values=[2.0]", "--set", "detection.detectors=[VUF]",
                       "--trials", "1")
    assert code == 3
    assert "CalibrationError" in err


def test_sweep_empty_list(capsys):
    code, _, err = run(capsys, "sweep")
    assert code == 2 and "experiment.values" in err


SWEEP = ("sweep", "--set", "experiment.values=[1.03, 2.0]", "--set", "detection.detectors=[GLRT, 'GLRT:known', VUF]",
         "--trials", "200")


def test_sweep_rows_and_byte_identical_rerun(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*SWEEP, "-o", str(a)]) == 0
    assert main([*SWEEP, "-o", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = parse_csv(a.read_text())
    assert len(rows) == 2 * 3
    assert list(rows[0]) == ["study", "axis", "value", "variant", "detector", "metric", "estimate", "std_error",
                             "threshold", "calibration", "analytic", "trials"]
    assert {(r["value"], r["detector"]) for r in rows} == {
        (v, d) for v in ("1.03", "2.0") for d in ("GLRT[suboptimal]", "GLRT[known]", "VUF")
    }
    capsys.readouterr()


def test_sweep_timing_column_and_jsonl(capsys):
    code, out, _ = run(capsys, *SWEEP, "--set", "output.timing=true")
    assert code == 0 and parse_csv(out)[0]["wall_time"]
    code, out, _ = run(capsys, *SWEEP, "--format", "jsonl")
    records = [json.loads(line) for line in out.splitlines()]
    assert len(records) == 6
    assert records[-1]["analytic"] is None  # NaN becomes null


def test_config_hash_tracks_settings(capsys):
    _, a, _ = run(capsys, "calibrate")
    _, b, _ = run(capsys, "calibrate", "--set", "detection.r=0.05")
    assert a.splitlines()[0] != b.splitlines()[0]


def test_floats_round_trip(capsys):
    _, out, _ = run(capsys, "calibrate")
    rows = parse_csv(out)
    assert float(rows[1]["tau"]) == np.sqrt(-np.log(0.15))


def test_calibrate_examples(capsys):
    # sqrt(kappa) r = 0.5 with r = 0.03
    kappa = (0.5 / 0.03) ** 2
    code, out, _ = run(capsys, "calibrate", "--set", f"calibrate.kappa={kappa!r}")
    assert code == 0
    glrt, snh = parse_csv(out)
    assert float(glrt["sqrt_kappa_r"]) == pytest.approx(0.5)
    assert float(glrt["tau"]) == pytest.approx(0.87737, abs=2e-5)
    assert float(glrt["tau_tilde"]) == pytest.approx(1.37737, abs=2e-5)
    assert float(snh["tau"]) == pytest.approx(1.37737, abs=2e-5)
    _, out, _ = run(capsys, "calibrate", "--set", "detection.pfa=0.999999")
    assert float(parse_csv(out)[1]["tau"]) == pytest.approx(0.0, abs=2e-3)


@pytest.mark.parametrize("pfa", ["0", "1", "-0.2"])
def test_calibrate_bad_pfa(capsys, pfa):
    code, _, err = run(capsys, "calibrate", "--set", f"detection.pfa={pfa}")
    assert code == 2 and "detection.pfa" in err


def test_calibrate_empirical(capsys):
    code, out, _ = run(capsys, "calibrate", "--set", "calibrate.empirical=true", "--set", "calibrate.trials=2000",
                       "--set", "detection.detectors=['GLRT:known', VUF]")
    assert code == 0
    rows = parse_csv(out)
    assert [r["calibration"] for r in rows] == ["analytic", "analytic", "empirical", "empirical"]
    # the empirical known-delta threshold sits near the analytic one
    assert float(rows[2]["tau"]) == pytest.approx(float(rows[0]["tau"]), abs=0.1)


def test_scenario_dump(capsys):
    code, out, _ = run(capsys, "scenario-dump", "--set", "scenario.beta=2", "--set", "scenario.epsilon=0.25pi")
    assert code == 0
    values = {r["name"]: r["value"] for r in parse_csv(out)}
    assert float(values["phase_c"]) == pytest.approx(np.pi / 4 + 2 * np.pi / 3 + np.pi / 4)
    assert float(values["magnitude_c"]) == 2.0
    for name in ("C_0", "C_plus", "C_minus"):
        assert f"{name}.abs" in values
    assert float(values["noise_variance"]) == pytest.approx(3 / 10**0.5)


def test_parse_angle():
    assert parse_angle("0.25pi") == pytest.approx(np.pi / 4)
    assert parse_angle("-pi") == pytest.approx(-np.pi)
    assert parse_angle("2/3pi") == pytest.approx(2 * np.pi / 3)
    assert parse_angle("-0.03*pi") == pytest.approx(-0.03 * np.pi)
    assert parse_angle(0.5) == 0.5
    for bad in ("pie", "1/0pi", True, None):
        with pytest.raises(ConfigError):
            parse_angle(bad)


def test_k_sweep_validation():
    raw = load_raw(None, ["experiment.axis=K", "experiment.values=[16, 20.5]"])
    with pytest.raises(ConfigError):
        build_config(raw, need_sweep=True)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pmu_imbalance", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout


def _schema_keys(schema, prefix=""):
    for key, value in schema.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _schema_keys(value, name + ".")
        else:
            yield name


def test_every_config_key_is_documented():
    text = README.read_text()
    documented = set(re.findall(r"`([a-z_]+(?:\.[a-z_]+)+)`", text))
    keys = set(_schema_keys(SCHEMA))
    assert keys <= documented, sorted(keys - documented)


@pytest.mark.slow
def test_baseline_sweep_full_size(capsys, tmp_path):
    out = tmp_path / "baseline.csv"
    code = main(["sweep", "--set", "experiment.values=[1.03, 2.0]", "--trials", "5000", "--threads", "4",
                 "-o", str(out)])
    assert code == 0
    rows = parse_csv(out.read_text())
    assert len(rows) == 2 * 4
    assert all(r["trials"] == "5000" for r in rows)
