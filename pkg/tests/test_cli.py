import hashlib
import importlib
import json
import math
from pathlib import Path

import pytest
import yaml

from qdsps.cli import run
from qdsps.config import DEFAULT_SCENARIO


def scenario(tmp_path, **changes):
    raw = yaml.safe_load(DEFAULT_SCENARIO.read_text())
    for dotted, value in changes.items():
        section, key = dotted.split("__")
        raw[section][key] = value
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


def test_design_sweep(tmp_path, capsys):
    out = tmp_path / "design"
    assert run(["design-sweep", "--out", str(out)]) == 0
    m = manifest(out)
    assert set(m["files"]) == {"design_sweep.csv"}
    assert {p.name for p in out.iterdir()} == {"design_sweep.csv", "manifest.json"}
    assert m["files"]["design_sweep.csv"] == hashlib.sha256((out / "design_sweep.csv").read_bytes()).hexdigest()
    assert m["seeds"]["base_seed"] == 2015 and len(m["config_sha256"]) == 64
    assert "eta_ext" in capsys.readouterr().out


def test_rabi_single_zero_area(tmp_path):
    path = scenario(tmp_path, sweep__areas_pi=[0.0])
    out = tmp_path / "rabi"
    assert run(["rabi", "--scenario", str(path), "--out", str(out)]) == 0
    rows = (out / "rabi_curve.csv").read_text().splitlines()
    assert len(rows) == 2
    assert float(rows[1].split(",")[2]) == 0.0
    assert json.loads((out / "rabi_fit.json").read_text())["fit"] is None


@pytest.mark.parametrize("cmd", ["design-sweep", "detuning-scan", "lifetime"])
def test_reruns_are_byte_identical(tmp_path, cmd):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run([cmd, "--out", str(a)]) == 0
    assert run([cmd, "--out", str(b)]) == 0
    ma, mb = manifest(a), manifest(b)
    assert ma["files"] == mb["files"]
    for name in ma["files"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_hbt_reports_reference_g2(tmp_path):
    out = tmp_path / "hbt"
    assert run(["hbt", "--out", str(out), "--threads", "2"]) == 0
    rep = json.loads((out / "g2_report.json").read_text())
    combined = math.hypot(rep["error"], 0.011)
    assert abs(rep["g2"] - 0.072) < 2 * combined
    assert (out / "g2_histogram.csv").exists()


def test_hbt_on_existing_stream(tmp_path):
    path = scenario(tmp_path, sweep__n_pulses=20000, outputs__write_click_stream=True)
    first = tmp_path / "first"
    assert run(["hbt", "--scenario", str(path), "--out", str(first)]) == 0
    assert "click_stream.csv.json" in manifest(first)["files"]
    second = tmp_path / "second"
    assert run(["hbt", "--scenario", str(path), "--out", str(second),
                "--clicks", str(first / "click_stream.csv")]) == 0
    assert (first / "g2_report.json").read_bytes() == (second / "g2_report.json").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    path = scenario(tmp_path, pulse__fwhm_ps=-2.0)
    out = tmp_path / "x"
    assert run(["rabi", "--scenario", str(path), "--out", str(out)]) == 2
    assert "pulse.fwhm_ps" in capsys.readouterr().err
    assert not out.exists()


def test_failure_leaves_no_partial_output(tmp_path):
    # a diameter without a Q value fails after validation, inside the command
    path = scenario(tmp_path, sweep__diameters_um=[2.0, 2.2])
    out = tmp_path / "partial"
    assert run(["design-sweep", "--scenario", str(path), "--out", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.glob(".partial-*")) == []


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    cli_main = importlib.import_module("qdsps.cli.main")
    from qdsps.core.evolution import IntegrationError

    def boom(*a, **k):
        raise IntegrationError("step size underflow", 5.0)

    monkeypatch.setattr(cli_main, "lifetime_trace", boom)
    out = tmp_path / "num"
    assert run(["lifetime", "--out", str(out)]) == 3
    assert not out.exists()


def test_seed_override_changes_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = scenario(tmp_path, sweep__n_pulses=5000, outputs__write_click_stream=True)
    assert run(["hbt", "--scenario", str(path), "--out", str(a)]) == 0
    assert run(["hbt", "--scenario", str(path), "--out", str(b), "--seed", "99"]) == 0
    assert manifest(b)["seeds"]["base_seed"] == 99
    assert (a / "click_stream.csv").read_bytes() != (b / "click_stream.csv").read_bytes()
