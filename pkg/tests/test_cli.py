import csv
import io
import math
import subprocess
import sys
from pathlib import Path

import pytest

from gfcap.cli import CAPACITY_COLUMNS, SWEEP_COLUMNS, main

GOLDEN = Path(__file__).parent / "golden"


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_headers_are_fixed():
    assert ",".join(CAPACITY_COLUMNS) == (
        "method,k,alphas,betas,P,capacity,units,status,max_residual,seconds"
    )
    assert ",".join(SWEEP_COLUMNS) == (
        "sweep_param,sweep_value,series,method,capacity,units,status,max_residual"
    )


def test_golden_capacity_output(capsys):
    code, out, _ = run_cli(
        capsys, "capacity", "--k", 1, "--alphas", 0.5, "--betas", 0, "--P", 1,
        "--method", "arma1,waterfill", "--no-timing",
    )
    assert code == 0
    assert out == (GOLDEN / "capacity_arma1_waterfill.csv").read_text()


def test_white_arma1_is_log2(capsys):
    code, out, _ = run_cli(capsys, "capacity", "--k", 1, "--alphas", 0, "--betas", 0, "--P", 3, "--method", "arma1")
    assert code == 0
    (row,) = _rows(out)
    assert float(row["capacity"]) == pytest.approx(math.log(2), abs=1e-12)
    assert row["units"] == "nats"


def test_all_methods_agree(capsys):
    code, out, _ = run_cli(capsys, "capacity", "--k", 1, "--alphas", 0.5, "--betas", 0, "--P", 1, "--method", "all")
    assert code == 0
    rows = {r["method"]: r for r in _rows(out)}
    assert set(rows) == {"arma1", "cert", "iterate", "nblock", "waterfill"}
    caps = {m: float(r["capacity"]) for m, r in rows.items()}
    for m in ("cert", "iterate"):
        assert abs(caps[m] - caps["arma1"]) <= 1e-4
    assert 0 < caps["arma1"] - caps["nblock"] < 0.05
    assert float(rows["arma1"]["max_gap"]) <= 1e-4


def test_bits_flag(capsys):
    _, nats, _ = run_cli(capsys, "capacity", "--k", 1, "--alphas", 0.2, "--betas", 0.1, "--P", 2, "--method", "arma1")
    _, bits, _ = run_cli(capsys, "capacity", "--k", 1, "--alphas", 0.2, "--betas", 0.1, "--P", 2, "--method", "arma1", "--bits")
    (n,), (b,) = _rows(nats), _rows(bits)
    assert float(b["capacity"]) == pytest.approx(float(n["capacity"]) / math.log(2), rel=1e-15)
    assert b["units"] == "bits"


@pytest.mark.parametrize(
    "args",
    [
        ["capacity", "--k", "2", "--alphas", "0.5", "--betas", "0", "--P", "1"],
        ["capacity", "--k", "1", "--alphas", "1.5", "--betas", "0", "--P", "1"],
        ["capacity", "--k", "1", "--alphas", "0.5", "--betas", "0", "--P", "-1"],
        ["capacity", "--k", "1", "--alphas", "0.5", "--betas", "0", "--method", "magic"],
        ["capacity", "--k", "1", "--alphas", "x", "--betas", "0"],
        ["sweep", "--param", "gamma1", "--start", "0", "--stop", "1", "--k", "1", "--alphas", "0", "--betas", "0"],
        ["sweep", "--preset", "Z"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_1(capsys, args):
    code, _, err = run_cli(capsys, *args)
    assert code == 1
    assert err.startswith("gfcap:")


def test_cert_round_trip_and_corruption(capsys, tmp_path):
    cert = tmp_path / "c.txt"
    code, _, _ = run_cli(
        capsys, "capacity", "--k", 1, "--alphas", 0.5, "--betas", 0, "--P", 1, "--method", "cert",
        "--cert-out", cert,
    )
    assert code == 0
    code, out, _ = run_cli(capsys, "verify", cert)
    assert code == 0 and out.strip().endswith("PASS")
    bad = tmp_path / "bad.txt"
    lines = [
        "lambda=0.6" if line.startswith("lambda=") else line for line in cert.read_text().splitlines()
    ]
    bad.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(capsys, "verify", bad)
    assert code == 2
    assert "FAIL iii orthogonality" in out
    short = tmp_path / "short.txt"
    short.write_text("\n".join(cert.read_text().splitlines()[:3]))
    code, _, err = run_cli(capsys, "verify", short)
    assert code == 1 and "missing keys" in err


def test_verify_with_model_on_command_line(capsys, tmp_path):
    cert = tmp_path / "c.txt"
    run_cli(capsys, "capacity", "--k", 1, "--alphas", 0.5, "--betas", 0, "--P", 1, "--method", "cert", "--cert-out", cert)
    code, _, _ = run_cli(capsys, "verify", cert, "--alphas", 0.5, "--betas", 0, "--P", 2)
    assert code == 2


def test_config_file_with_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nk=1\nalphas=0.0\nbetas=0.0\nP=3\nmethod=arma1\nno_timing=true\n")
    code, out, _ = run_cli(capsys, "capacity", "--config", cfg)
    (row,) = _rows(out)
    assert code == 0 and float(row["capacity"]) == pytest.approx(math.log(2))
    assert row["seconds"] == ""
    code, out, _ = run_cli(capsys, "capacity", "--config", cfg, "--P", 1)
    (row,) = _rows(out)
    assert float(row["capacity"]) == pytest.approx(0.5 * math.log(2))


def test_bad_config_key(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    code, _, err = run_cli(capsys, "capacity", "--config", cfg)
    assert code == 1 and "colour" in err


def test_custom_sweep_is_deterministic(capsys, tmp_path):
    args = [
        "sweep", "--k", 2, "--alphas", "0.0;0.1", "--betas", "0.3;0", "--P", 1,
        "--param", "alpha1", "--start", -0.5, "--stop", 0.5, "--steps", 3,
        "--method", "cert,waterfill",
    ]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(capsys, *args, "--out", a)[0] == 0
    assert run_cli(capsys, *args, "--out", b, "--workers", 2)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a.read_text())
    assert [r["sweep_value"] for r in rows] == ["-0.5", "-0.5", "0.0", "0.0", "0.5", "0.5"]
    for cert, wf in zip(rows[::2], rows[1::2]):
        assert cert["status"] == "ok"
        assert float(cert["capacity"]) >= float(wf["capacity"])


def test_sweep_records_point_failures(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, _ = run_cli(
        capsys, "sweep", "--k", 1, "--alphas", 0.2, "--betas", 0, "--P", 1,
        "--param", "alpha1", "--start", 0.5, "--stop", 1.5, "--steps", 2, "--method", "arma1",
        "--out", out,
    )
    assert code == 0
    rows = _rows(out.read_text())
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"].startswith("error")


def test_preset_a_white_anchor(capsys, tmp_path):
    out = tmp_path / "a.csv"
    code, _, _ = run_cli(capsys, "sweep", "--preset", "A", "--steps", 1, "--method", "cert", "--out", out)
    assert code == 0
    rows = _rows(out.read_text())
    anchor = [r for r in rows if r["series"] == "white_anchor"]
    assert len(anchor) == 1
    assert float(anchor[0]["capacity"]) == pytest.approx(0.5 * math.log(2), abs=1e-9)
    assert {r["series"] for r in rows} >= {"beta1=-0.5", "beta1=0.0", "beta1=0.5"}


def test_oracle_command(capsys):
    code, out, _ = run_cli(capsys, "oracle", "--k", 1, "--alphas", 0, "--betas", -0.5, "--P", 1, "--n", "4,8")
    assert code == 0
    rows = _rows(out)
    assert [r["n"] for r in rows] == ["4", "8"]
    assert float(rows[1]["capacity"]) >= float(rows[0]["capacity"]) - 1e-6


def test_oracle_rejects_huge_horizon(capsys):
    code, _, _ = run_cli(capsys, "oracle", "--k", 1, "--alphas", 0, "--betas", 0, "--n", "500")
    assert code == 1


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "gfcap", "capacity", "--k", "1", "--alphas", "0", "--betas", "0",
         "--P", "3", "--method", "arma1", "--no-timing"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    assert res.stdout.splitlines()[0].startswith("method,k,alphas")
