import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from barprop.cli import run
from barprop.harness import write_measurements
from barprop.model import Measurement

FAST = ["--set", "experiment.runs=6", "--set", "experiment.algorithms=[barprop, lm]"]


def solve_position(out):
    parts = out.split()
    return np.array([float(parts[1]), float(parts[2])])


@pytest.fixture
def noiseless_cfg(tmp_path):
    path = tmp_path / "noiseless.yaml"
    path.write_text("scenario:\n  layout: homogeneous_12\nsolve:\n  target: [20, 20]\n  noiseless: true\n")
    return path


class TestSolve:
    @pytest.mark.xfail(strict=True, reason="displacement stop at 0.01 m halts BARProp short of 0.05 m "
                                           "on noiseless input; see README known limitations")
    def test_noiseless_barprop(self, noiseless_cfg, capsys):
        assert run(["solve", "--config", str(noiseless_cfg)]) == 0
        assert np.linalg.norm(solve_position(capsys.readouterr().out) - [20, 20]) < 0.05

    @pytest.mark.parametrize("algo", ["lm", "de"])
    def test_noiseless_other_algorithms(self, noiseless_cfg, capsys, algo):
        assert run(["solve", "--config", str(noiseless_cfg), "--set", f"solve.algorithm={algo}"]) == 0
        assert np.linalg.norm(solve_position(capsys.readouterr().out) - [20, 20]) < 0.05

    def test_writes_json(self, tmp_path, capsys):
        assert run(["solve", "--out", str(tmp_path), "--seed", "3"]) == 0
        doc = json.loads((tmp_path / "solve.json").read_text())
        assert doc["algorithm"] == "barprop" and doc["metadata"]["seed"] == 3
        assert capsys.readouterr().out.startswith("position ")

    def test_explicit_rss(self, capsys):
        rss = "[" + ",".join(["-50"] * 12) + "]"
        assert run(["solve", "--set", f"solve.rss_dbm={rss}", "--set", "solve.target=null"]) == 0


class TestSweeps:
    def test_sweep_noise_rows(self, tmp_path, capsys):
        assert run(["sweep-noise", "--out", str(tmp_path), *FAST]) == 0
        with open(tmp_path / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        for algo in ("barprop", "lm"):
            assert [float(r["sweep_value"]) for r in rows if r["algorithm"] == algo] == [1, 2, 3, 4, 5]
        assert (tmp_path / "timing.csv").exists() and (tmp_path / "report.json").exists()
        assert "rmse" in capsys.readouterr().out

    def test_sweep_anchors(self, tmp_path):
        assert run(["sweep-anchors", "--out", str(tmp_path), *FAST,
                    "--set", "experiment.anchor_counts=[6, 12]"]) == 0
        with open(tmp_path / "results.csv") as fh:
            assert {r["sweep_value"] for r in csv.DictReader(fh)} == {"6", "12"}

    def test_byte_identical_csv(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["experiment", "--out", str(a), "--seed", "11", *FAST]) == 0
        assert run(["experiment", "--out", str(b), "--seed", "11", "--workers", "2", *FAST]) == 0
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_overrides_echoed(self, tmp_path):
        assert run(["experiment", "--out", str(tmp_path), *FAST, "--set", "barprop.learning_rate=0.05"]) == 0
        meta = json.loads((tmp_path / "report.json").read_text())["metadata"]
        assert "barprop.learning_rate=0.05" in meta["overrides"]
        assert "experiment.runs=6" in meta["overrides"]

    def test_ingest(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        recs = [(Measurement(rng.normal(-45, 3, 12), [3.0] * 12), np.array([20.0, 20.0])) for _ in range(5)]
        write_measurements(tmp_path / "d.csv", recs)
        assert run(["ingest", str(tmp_path / "d.csv"), "--out", str(tmp_path / "o"), *FAST,
                    "--set", "experiment.trials=4"]) == 0
        assert "dataset=4" in capsys.readouterr().out


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert run(["bogus"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("barprop:\n  learning_rate: [oops\n")
        assert run(["solve", "--config", str(path)]) == 2

    def test_unknown_key(self):
        assert run(["solve", "--set", "barprop.momentum=0.5"]) == 2

    def test_bad_ingest_schema(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,rss_1\n1,2\n")
        assert run(["ingest", str(path)]) == 2

    def test_runtime_abort(self, capsys):
        collinear = "[[0, 0], [10, 0], [20, 0]]"
        assert run(["crlb", "--set", f"scenario.anchors={collinear}", "--set", "solve.target=[5, 0]"]) == 3
        assert "aborted" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        assert run(["ingest", str(tmp_path / "absent.csv")]) == 4

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run(["crlb", "--out", str(blocker / "sub")]) == 4


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "barprop", "crlb"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "crlb 2.461567"
