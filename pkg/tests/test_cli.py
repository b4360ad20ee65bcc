import json
import subprocess
import sys

import pytest

from dampwave import cli

FAST = ["--dx", "0.1", "--tmax", "30"]


def run_cli(*argv, capsys=None):
    rc = cli.main(list(argv))
    out = capsys.readouterr() if capsys is not None else None
    return rc, out


def test_predict_json(capsys):
    rc, out = run_cli("predict", "--n", "2", "--p", "1.5", "--alpha", "0", "--beta", "0.5",
                      "--json", capsys=capsys)
    assert rc == 0
    res = json.loads(out.out)
    assert res["report"]["kappa"] == pytest.approx(1.5)
    assert res["report"]["p_crit"] == pytest.approx(2.0)
    assert res["report"]["regime"] == "subcritical-power"
    assert res["bound"]["constant"].startswith("unknown")


def test_predict_table_beta_zero_column(capsys):
    rc, out = run_cli("predict", "--n", "2", "--alpha", "0.5", "--beta", "0", capsys=capsys)
    assert rc == 0
    text = out.out
    assert "eps^(-1/kappa)" in text
    assert "eps^(-(p-1)) * log(1/eps)^(p-1)" in text
    assert "eps^(-(p-1))" in text
    assert "(4/3 < p < 7/3)" in text
    assert "(p = 4/3)" in text
    assert "(1 < p < 4/3)" in text


def test_predict_rejects_alpha_beta(capsys):
    rc, out = run_cli("predict", "--alpha", "0.3", "--beta", "0.3", capsys=capsys)
    assert rc == 2
    assert "exploratory" in out.err


def test_predict_rejects_range(capsys):
    rc, out = run_cli("predict", "--alpha", "1.0", capsys=capsys)
    assert rc == 2
    assert "alpha" in out.err


def test_simulate_norms_only(tmp_path, capsys):
    out = tmp_path / "sim"
    rc, _ = run_cli("simulate", *FAST, "--out", str(out), capsys=capsys)
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "norms.csv", "report.json"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["blowup"] and rep["T_est"] == pytest.approx(13.87, rel=0.02)
    header = (out / "norms.csv").read_text().splitlines()[0]
    assert header == "t,sup_u,l2_u,energy"


def test_simulate_exploratory_flag(tmp_path, capsys):
    out = tmp_path / "x"
    rc, res = run_cli("simulate", "--alpha", "0.3", "--beta", "0.3", *FAST, "--out", str(out),
                      capsys=capsys)
    assert rc == 2
    rc, res = run_cli("simulate", "--alpha", "0.3", "--beta", "0.3", "--exploratory", *FAST,
                      "--out", str(out), capsys=capsys)
    assert rc == 0


def test_manifest_round_trip_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("simulate", *FAST, "--stride", "20", "--out", str(a), capsys=capsys)[0] == 0
    rc, _ = run_cli("simulate", "--config", str(a / "manifest.json"), "--out", str(b),
                    capsys=capsys)
    assert rc == 0
    for name in ("norms.csv", "trace.csv", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_key_value_config_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 2\np = 1.5\nbeta = 0.5\neps = 0.3\n")
    rc, out = run_cli("predict", "--config", str(cfg), "--p", "1.6", "--json", capsys=capsys)
    assert rc == 0
    res = json.loads(out.out)
    assert res["report"]["p"] == 1.6 and res["report"]["n"] == 2
    assert res["bound"]["epsilon"] == 0.3


def test_bad_config_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 3\n")
    assert run_cli("predict", "--config", str(cfg), capsys=capsys)[0] == 2
    cfg.write_text("just words\n")
    assert run_cli("predict", "--config", str(cfg), capsys=capsys)[0] == 2


def test_failure_removes_partial_outputs(tmp_path, capsys):
    out = tmp_path / "fail"
    # supercritical sweep: rejected after the output dir is chosen
    rc, res = run_cli("sweep", "--p", "4", *FAST, "--out", str(out), capsys=capsys)
    assert rc == 1
    assert not [p for p in out.rglob("*") if p.is_file()]


def test_sweep_resume_skips_completed(tmp_path, capsys, monkeypatch):
    out = tmp_path / "sw"
    grid = "1.0,0.85,0.7,0.6"
    args = ("sweep", "--eps-grid", grid, *FAST, "--out", str(out), "--json")
    rc, first = run_cli(*args, capsys=capsys)
    assert rc == 0
    first = json.loads(first.out)
    assert first["resumed"] == []
    assert len(list((out / "points").glob("eps_*.json"))) == 4

    calls = []
    real = cli.run_sweep

    def spy(base, eps_grid, **kw):
        calls.append(sorted(kw["done"]))
        return real(base, eps_grid, **kw)

    monkeypatch.setattr(cli, "run_sweep", spy)
    rc, second = run_cli(*args, capsys=capsys)
    second = json.loads(second.out)
    assert rc == 0
    assert second["resumed"] == [0.6, 0.7, 0.85, 1.0]
    assert calls == [[0.6, 0.7, 0.85, 1.0]]
    assert second["fit_exponent"] == first["fit_exponent"]
    for name in ("sweep.csv", "loglog.dat", "summary.json"):
        assert (out / name).exists()
    # a changed physics config must not reuse the stored points
    rc, third = run_cli("sweep", "--eps-grid", grid, "--dx", "0.1", "--tmax", "31",
                        "--out", str(out), "--json", capsys=capsys)
    assert json.loads(third.out)["resumed"] == []


def test_certify_on_simulate_trace(tmp_path, capsys):
    sim, cert = tmp_path / "sim", tmp_path / "cert"
    assert run_cli("simulate", "--dx", "0.1", "--tmax", "16", "--stride", "1", "--out", str(sim),
                   capsys=capsys)[0] == 0
    rc, out = run_cli("certify", "--trace", str(sim / "trace.csv"), "--out", str(cert), "--json",
                      capsys=capsys)
    assert rc == 0
    res = json.loads(out.out)
    assert len(res["certificates"]) == 3
    assert all(c["I"] >= 0 for c in res["certificates"])
    assert all(c["identity_residual"] < 1e-2 for c in res["certificates"])
    lines = (cert / "certificates.csv").read_text().splitlines()
    assert lines[0] == "tau,R,I,J,K1,K2,K3,residual,D,C_empirical"
    assert len(lines) == 4
    assert json.loads((cert / "chain.json").read_text())["applicable"]


def test_certify_needs_trace(tmp_path, capsys):
    rc, out = run_cli("certify", "--out", str(tmp_path / "c"), capsys=capsys)
    assert rc == 1
    assert "--trace" in out.err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dampwave", "predict", "--json"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["report"]["kappa"] == pytest.approx(0.5)


def test_workers_env(monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    args = cli.build_parser().parse_args(["sweep"])
    assert cli.resolve(args)["workers"] == 3
    args = cli.build_parser().parse_args(["sweep", "--workers", "2"])
    assert cli.resolve(args)["workers"] == 2
