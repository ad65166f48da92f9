import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hsifuse.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, even_windows, load_windows, run
from hsifuse.io_formats import read_cube, write_cube


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--truth", "bundled", "--snr-h", "35", "--snr-m", "40", "--out", str(out)]) == EXIT_OK
    wins = json.loads((out / "provenance.json").read_text())["windows"]
    (out / "windows.json").write_text(json.dumps(wins))
    return out


@pytest.fixture(scope="module")
def fused(sim, tmp_path_factory):
    out = tmp_path_factory.mktemp("fuse")
    code = run(
        ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "4",
         "--windows", str(sim / "windows.json"), "--max-iter", "20", "--out", str(out)]
    )
    assert code == EXIT_OK
    return out


def test_simulate_outputs(sim):
    for name in ("hsi", "msi", "pan", "truth"):
        assert (sim / f"{name}.json").exists() and (sim / f"{name}.raw").exists()
    assert read_cube(sim / "hsi").shape == (8, 8, 16)
    assert read_cube(sim / "msi").shape == (32, 32, 4)
    cfg = json.loads((sim / "config.json").read_text())
    assert cfg["command"] == "simulate"
    prov = json.loads((sim / "provenance.json").read_text())
    assert prov["windows"][0] == {"lo": 1, "hi": 4}
    assert abs(sum(prov["b1"]) - 1) < 1e-12


def test_fuse_outputs(fused):
    assert read_cube(fused / "fused").shape == (32, 32, 16)
    rows = list(csv.reader(open(fused / "trace.csv")))
    assert rows[0][:3] == ["iter", "L1", "L2"] and len(rows) == 21
    est = json.loads((fused / "estimates.json").read_text())
    assert set(est) >= {"b1", "b2", "srf_weights"}
    assert json.loads((fused / "config.json").read_text())["command"] == "fuse"


def test_eval_reports_gain(sim, fused, tmp_path, capsys):
    code = run(
        ["eval", "--fused", str(fused / "fused"), "--truth", str(sim / "truth"), "--init", str(fused / "init"),
         "--hsi", str(sim / "hsi"), "--pan", str(sim / "pan"), "--msi", str(sim / "msi"), "--window", "8",
         "--stride", "8", "--out", str(tmp_path)]
    )
    assert code == EXIT_OK
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["diagnostics"]["psnr_gain_db"] > 0
    assert 0 <= metrics["qnr"] <= 1 and metrics["r_squared"] > 0.5
    assert "psnr_db" in capsys.readouterr().out


def test_eval_identical(sim, tmp_path):
    assert run(["eval", "--fused", str(sim / "truth"), "--truth", str(sim / "truth"), "--out", str(tmp_path)]) == EXIT_OK
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["psnr_db"] == "inf" and metrics["sam_rad"] == 0.0 and metrics["ergas"] == 0.0
    assert metrics["uiqi"] == 1.0


def test_dimension_mismatch(sim, tmp_path, capsys):
    code = run(
        ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "2",
         "--windows", str(sim / "windows.json"), "--out", str(tmp_path)]
    )
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    assert "32x32" in err and "8x8" in err


def test_usage_and_data_errors(sim, tmp_path):
    assert run(["fuse", "--bogus"]) == EXIT_USAGE
    assert run(["nonsense"]) == EXIT_USAGE
    assert run(["eval", "--fused", str(tmp_path / "missing"), "--truth", str(sim / "truth")]) == EXIT_DATA
    (tmp_path / "bad.json").write_text("[{\"lo\": 0, \"hi\": 3}]")
    with pytest.raises(Exception):
        load_windows(tmp_path / "bad.json")
    code = run(
        ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "4",
         "--windows", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]
    )
    assert code == EXIT_DATA


def test_windows_from_wavelengths(sim, tmp_path):
    # bundled wavelengths are linspace(400, 1000, 16): 40 nm spacing
    edges = [[390, 530], [550, 690], [710, 850], [870, 1010]]
    (tmp_path / "edges.json").write_text(json.dumps(edges))
    code = run(
        ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "4",
         "--windows-from-wavelengths", str(tmp_path / "edges.json"), "--max-iter", "2", "--out", str(tmp_path / "o")]
    )
    assert code == EXIT_OK
    wins = json.loads((tmp_path / "o" / "config.json").read_text())["config"]["windows"]
    assert wins == [{"lo": 1, "hi": 4}, {"lo": 5, "hi": 8}, {"lo": 9, "hi": 12}, {"lo": 13, "hi": 16}]


def test_grid_limit(sim, tmp_path):
    code = run(
        ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "4",
         "--windows", str(sim / "windows.json"), "--max-iter", "2", "--grid", "--grid-limit", "2",
         "--truth", str(sim / "truth"), "--out", str(tmp_path)]
    )
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "grid_summary.csv")))
    assert len(rows) == 2 and all(r["status"] == "ok" for r in rows)
    assert float(rows[0]["psnr_db"]) > 20
    assert (tmp_path / "grid" / "run_001" / "fused.json").exists()


def test_simulate_custom_truth(tmp_path, rng):
    write_cube(rng.random((12, 12, 6)), tmp_path / "t")
    code = run(["simulate", "--truth", str(tmp_path / "t"), "--factor", "3", "--kernel-taps", "5",
                "--even-windows", "3", "--srf-sigma", "1.0", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert read_cube(tmp_path / "o" / "hsi").shape == (4, 4, 6)
    assert run(["simulate", "--truth", str(tmp_path / "t"), "--factor", "5", "--out", str(tmp_path / "p")]) == EXIT_USAGE


def test_even_windows():
    assert even_windows(16, 4) == [(0, 3), (4, 7), (8, 11), (12, 15)]
    assert sum(hi - lo + 1 for lo, hi in even_windows(10, 3)) == 10


def test_selftest_module_entry():
    proc = subprocess.run([sys.executable, "-m", "hsifuse", "selftest"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "0 failed" in proc.stdout


def test_deterministic_pipeline(sim, tmp_path):
    outs = []
    for tag in "ab":
        out = tmp_path / tag
        args = ["fuse", "--hsi", str(sim / "hsi"), "--msi", str(sim / "msi"), "--factor", "4",
                "--windows", str(sim / "windows.json"), "--max-iter", "5", "--out", str(out)]
        assert run(args) == EXIT_OK
        outs.append(out)
    assert (outs[0] / "fused.raw").read_bytes() == (outs[1] / "fused.raw").read_bytes()
    assert np.array_equal(read_cube(outs[0] / "init"), read_cube(outs[1] / "init"))
