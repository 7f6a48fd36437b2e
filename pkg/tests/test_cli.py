import csv
import hashlib
import json
import math
import subprocess
import sys

import pytest

from coaldet import acceptance, cli
from coaldet.acceptance import CheckResult
from coaldet.gaps import rayleigh_gap_density
from coaldet.quad import QuadratureError


def run(args, tmp_path=None):
    return cli.main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_gap_pmf_table(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    out = tmp_path / "g.csv"
    assert run(["gap-pmf", "--T", 1.0, "--gmax", 40, "--out", out]) == 0
    rows = read_csv(out)
    assert [int(r["g"]) for r in rows] == list(range(1, 41))
    assert sum(float(r["pmf"]) for r in rows) == pytest.approx(1.0, abs=1e-10)
    side = json.loads(out.with_suffix(".json").read_text())
    assert float(side["total_intensity"]) == pytest.approx(float(side["closed_form_value"]), rel=1e-11)
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["timestamp"].startswith("1970-01-01")
    for name in ("g.csv", "g.json"):
        assert manifest["outputs"][name] == hashlib.sha256((tmp_path / name).read_bytes()).hexdigest()


def test_gap_pmf_parity_rows_are_even(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["gap-pmf", "--model", "parity_walk", "--T", 6, "--gmax", 20, "--out", out]) == 0
    assert [int(r["g"]) for r in read_csv(out)] == list(range(2, 21, 2))


def test_numbers_have_twelve_significant_digits(tmp_path):
    out = tmp_path / "g.csv"
    run(["gap-pmf", "--T", 2.0, "--gmax", 3, "--out", out])
    mantissa = read_csv(out)[0]["pmf"].split("e")[0]
    assert len(mantissa.replace(".", "").lstrip("-")) == 12


def test_rayleigh_table(tmp_path):
    out = tmp_path / "r.csv"
    assert run(["rayleigh", "--gmax", 4, "--points", 40, "--out", out]) == 0
    rows = read_csv(out)
    assert len(rows) == 40
    G = float(rows[9]["G"])
    assert float(rows[9]["intensity"]) == pytest.approx(rayleigh_gap_density(G), rel=1e-11)
    side = json.loads(out.with_suffix(".json").read_text())
    assert float(side["total_intensity"]) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-11)
    assert float(side["variance"]) == pytest.approx(4 - math.pi, rel=1e-11)


def test_joint_gap_mesh_file(tmp_path, capsys):
    out = tmp_path / "j.dat"
    assert run(["joint-gap", "--grid-rows", 4, "--gmax", 2.0, "--out", out]) == 0
    blocks = out.read_text().strip().split("\n\n")
    assert len(blocks) == 4 and all(len(b.splitlines()) == 4 for b in blocks)
    side = json.loads(out.with_suffix(".json").read_text())
    assert float(side["rho"]) == pytest.approx((3 - math.pi) / (4 - math.pi), abs=1e-8)
    assert "rho" in capsys.readouterr().out


def test_warren_command(capsys):
    assert run(["warren", "--T", 2, "--starts", "0,2", "--thresholds", "0,2", "--mc", 20000, "--seed", 1]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["matrix"]) == 2
    assert abs(float(out["z"])) < 4
    assert run(["warren", "--T", 2, "--starts", "0,2", "--thresholds", "0,2", "--mc", 10]) == 2


def test_intensity_command(capsys):
    assert run(["intensity", "--walls", "0.3", "--survivors=-0.5,1.2"]) == 0
    value = float(capsys.readouterr().out)
    phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    assert value == pytest.approx(phi(0.8) * phi(0.9) * 1.7, rel=1e-11)
    assert run(["intensity", "--walls", "1.0", "--survivors", "0.4,1.9", "--halfline"]) == 0
    assert float(capsys.readouterr().out) > 0


@pytest.mark.parametrize(
    "args",
    [
        ["gap-pmf", "--model", "parity_walk", "--T", 2.5],
        ["gap-pmf", "--T", -1],
        ["intensity", "--walls", "1,2", "--survivors", "0,1"],
        ["warren", "--T", 1, "--starts", "0,x", "--thresholds", "0,1"],
        ["intensity", "--walls=-1", "--survivors=-2,0.5", "--halfline"],
    ],
)
def test_domain_errors_exit_2(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(args) == 2


def test_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "parity_walk", "horizon": 4, "window_halfwidth": 100, "replicates": 2, "seed": 1}))
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "o"]) == 2
    cfg.write_text(json.dumps({"model": "ct_simple_walk", "horizon": 1, "window_halfwidth": 100, "replicates": 2}))
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "o"]) == 2


def test_numeric_failure_exits_3(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise QuadratureError("budget exhausted")

    monkeypatch.setattr(cli, "joint_gap_mesh", boom)
    assert run(["joint-gap", "--grid-rows", 2, "--out", tmp_path / "j.dat"]) == 3


def test_acceptance_failure_exits_4(monkeypatch):
    bad = [CheckResult(1, "dummy", False, 1.0, 0.0, 0.0, 1.0)]
    monkeypatch.setattr(acceptance, "run_suite", lambda name, report=print: bad)
    assert run(["verify", "--suite", "oracle"]) == 4


def test_simulate_is_reproducible(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "ct_simple_walk", "horizon": 1.0, "window_halfwidth": 150, "replicates": 6, "seed": 42}))
    monkeypatch.setenv("COALDET_THREADS", "1")
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "a"]) == 0
    monkeypatch.setenv("COALDET_THREADS", "3")
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "b"]) == 0
    for name in ("gap_histogram.csv", "wall_gap_histogram.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 42
    digest = hashlib.sha256((tmp_path / "a" / "summary.json").read_bytes()).hexdigest()
    assert manifest["outputs"]["summary.json"] == digest


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "coaldet", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
    res = subprocess.run([sys.executable, "-m", "coaldet", "gap-pmf"], capture_output=True, text=True)
    assert res.returncode == 2
