import json
import subprocess
import sys

import numpy as np
import pytest

from tocflow.cli import run
from tocflow.experiments.artifacts import read_array
from tocflow.report import read_report_csv

SMALL_TRAJ = {"n_samples": 5, "steps": 30, "methods": ["vanilla", "gd", "tocflow"]}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_fig1_outputs(tmp_path):
    out = tmp_path / "fig1"
    assert run(["fig1", "--out", str(out), "--quiet"]) == 0
    assert (out / "report.csv").read_text().startswith("lambda,exact,gd,toc\n")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "fig1" and "numpy" in manifest["versions"]


def test_sampling_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path / "c.json", SMALL_TRAJ)
    a, b = tmp_path / "a", tmp_path / "b"
    run(["trajectory", "--config", cfg, "--out", str(a), "--quiet"])
    run(["trajectory", "--config", cfg, "--out", str(b), "--quiet", "--workers", "2"])
    for name in ("report.csv", "summary.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = read_report_csv(a / "report.csv")
    assert set(rep) == {"vanilla", "gd", "tocflow"}
    assert np.all(np.isnan(rep["gd"]["wallclock_ms"]))
    assert rep["tocflow"]["kink"].shape == (5,)


def test_manifest_can_be_replayed(tmp_path):
    cfg = _write(tmp_path / "c.json", SMALL_TRAJ)
    a, b = tmp_path / "a", tmp_path / "b"
    run(["trajectory", "--config", cfg, "--out", str(a), "--quiet", "--seed", "4", "--dump-states"])
    run(["trajectory", "--config", str(a / "manifest.json"), "--out", str(b), "--quiet"])
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    states, meta = read_array(b / "states_tocflow")
    assert states.shape == (5, 64) and meta["method"] == "tocflow"
    assert json.loads((b / "manifest.json").read_text())["config"]["seed"] == 4


def test_manifest_from_other_subcommand_is_rejected(tmp_path):
    out = tmp_path / "f"
    run(["fig1", "--out", str(out), "--quiet"])
    assert run(["proximal-check", "--config", str(out / "manifest.json"), "--out", str(tmp_path / "p")]) == 2


def test_wallclock_flag(tmp_path):
    cfg = _write(tmp_path / "c.json", {**SMALL_TRAJ, "methods": ["vanilla"]})
    run(["trajectory", "--config", cfg, "--out", str(tmp_path), "--quiet", "--wallclock"])
    rep = read_report_csv(tmp_path / "report.csv")
    assert np.all(np.isfinite(rep["vanilla"]["wallclock_ms"]))


def test_failed_check_exits_one(tmp_path):
    cfg = _write(tmp_path / "c.json", {"tolerance": 1e-300})
    assert run(["gaussian-verify", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 1


@pytest.mark.parametrize("content", ['{"steps": 3,', '{"stepz": 3}', '[1, 2]', '{"n_samples": -1}'])
def test_config_errors_exit_two(tmp_path, capsys, content):
    p = tmp_path / "bad.json"
    p.write_text(content)
    assert run(["trajectory", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "steps": ,\n}')
    run(["trajectory", "--config", str(p), "--out", str(tmp_path / "o")])
    assert f"{p}:2:" in capsys.readouterr().err


def test_missing_dataset_exits_two(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"dataset": str(tmp_path / "none")})
    assert run(["darcy", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "gen-data" in capsys.readouterr().err


def test_usage_errors_exit_two():
    assert run([]) == 2
    assert run(["fig1", "--bogus"]) == 2
    assert run(["fig1", "--seed", "x"]) == 2


def test_runtime_error_exits_three(tmp_path):
    cfg = _write(tmp_path / "c.json", {"spec": {"n_x": 8, "span_length": 3}, "n_samples": 1})
    assert run(["trajectory", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_gen_data_then_darcy(tmp_path):
    data = tmp_path / "data"
    gen = _write(tmp_path / "g.json", {"darcy": {"n": 6, "modes": 6}, "darcy_count": 12, "spectrum_count": 0})
    assert run(["gen-data", "--config", gen, "--out", str(data), "--quiet"]) == 0
    cfg = _write(tmp_path / "d.json", {"spec": {"n": 6, "modes": 6}, "dataset": str(data / "darcy_pairs"),
                                       "steps": 20, "n_samples": 2, "methods": ["vanilla", "tocflow"]})
    assert run(["darcy", "--config", cfg, "--out", str(tmp_path / "d"), "--quiet"]) in (0, 1)
    summary = json.loads((tmp_path / "d" / "summary.json").read_text())
    assert summary["train_pairs"] == 12


def test_module_entry_point(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "tocflow", "fig1", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "PASS gd_le_exact_everywhere" in proc.stdout
