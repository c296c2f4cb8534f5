import json
import subprocess
import sys

import pytest

from fsebackstep.cli import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, EXIT_VERIFY_FAILED, main
from fsebackstep.config import ScenarioConfig


def write_config(path, **raw):
    doc = ScenarioConfig().to_dict()
    doc.update(raw)
    path.write_text(json.dumps(doc))
    return path


def run_cli(*argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_run_writes_trace_and_plots(tmp_path, capsys):
    code, out = run_cli("run", "--t-final", "0.5", "--out-dir", tmp_path, capsys=capsys)
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["approx.svg", "switch.svg", "trace.csv", "tracking.svg"]
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "t,eta1,eta2,y_d,xi1,u,w2,p_hat2,e_F2,s_n2,delta1,delta2,omega_norm2"
    assert len((tmp_path / "trace.csv").read_text().splitlines()) == 502
    assert "variant developed" in out.out


def test_run_no_plots_and_variant_flag(tmp_path, capsys):
    code, out = run_cli("run", "--t-final", "0.1", "--no-plots", "--variant", "fse-rbfnn-cfb", "--out-dir", tmp_path,
                        capsys=capsys)
    assert code == EXIT_OK
    assert [p.name for p in tmp_path.iterdir()] == ["trace.csv"]
    assert "variant fse-rbfnn-cfb" in out.out


def test_run_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", t_final=0.3)
    files = {}
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / name)]) == EXIT_OK
        files[name] = {p.name: p.read_bytes() for p in (tmp_path / name).iterdir()}
    assert files["a"] == files["b"]


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path / "c.json", t_final=5.0, dt=0.01, plots=True)
    assert main(["run", "--config", str(cfg), "--t-final", "0.2", "--no-plots", "--out-dir", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "trace.csv").read_text().splitlines()
    assert len(lines) == 22
    assert not (tmp_path / "o" / "tracking.svg").exists()


def test_invalid_m_c_exits_2(tmp_path, capsys):
    doc = ScenarioConfig().to_dict()
    doc["gains"]["m_c"] = "1/2"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    code, out = run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o", capsys=capsys)
    assert code == EXIT_INVALID
    assert "(0.5, 1)" in out.err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", colour="blue")
    code, out = run_cli("run", "--config", cfg, capsys=capsys)
    assert code == EXIT_INVALID and "colour" in out.err


def test_divergence_exits_3_with_partial_trace(tmp_path, capsys):
    # a step far longer than the command-filter time constant makes RK4 unstable
    doc = ScenarioConfig().to_dict()
    doc["dt"] = 0.5
    doc["t_final"] = 500.0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    code, out = run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o", capsys=capsys)
    assert code == EXIT_DIVERGED
    assert "diverged" in out.err or "non-finite" in out.err


def test_compare_writes_table(tmp_path, capsys):
    code, out = run_cli("compare", "--t-final", "0.2", "--variant", "developed", "--variant", "fse-rbfnn-cfb",
                        "--out-dir", tmp_path, capsys=capsys)
    assert code == EXIT_OK
    rows = (tmp_path / "comparison.csv").read_text().splitlines()
    assert rows[0].startswith("variant,rms_tracking")
    assert [r.split(",")[0] for r in rows[1:]] == ["developed", "fse-rbfnn-cfb"]
    assert (tmp_path / "comparison.txt").read_text() == out.out


def test_compare_rejects_unknown_tag(tmp_path, capsys):
    code, out = run_cli("compare", "--variant", "developed", "--variant", "lqr", "--out-dir", tmp_path,
                        capsys=capsys)
    assert code == EXIT_INVALID and "lqr" in out.err
    code, out = run_cli("compare", "--variant", "developed", "--out-dir", tmp_path, capsys=capsys)
    assert code == EXIT_INVALID


def test_verify_default_passes(capsys):
    code, out = run_cli("verify", "--samples", "2000", capsys=capsys)
    assert code == EXIT_OK
    lines = out.out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_verify_zero_samples_exits_2(capsys):
    code, out = run_cli("verify", "--samples", "0", capsys=capsys)
    assert code == EXIT_INVALID and "--samples" in out.err


def test_verify_negative_tolerance_exits_2(capsys):
    assert run_cli("verify", "--tolerance", "-1", capsys=capsys)[0] == EXIT_INVALID


def test_verify_zero_tolerance_reports_counterexample(capsys):
    code, out = run_cli("verify", "--samples", "20000", "--tolerance", "0", capsys=capsys)
    assert code == EXIT_VERIFY_FAILED
    assert "first counterexample (tanh-gap)" in out.out
    assert "sigma=" in out.out


def test_usage_error_exits_2(capsys):
    assert run_cli("frobnicate", capsys=capsys)[0] == 2
    assert run_cli("run", "--dt", "fast", capsys=capsys)[0] == 2


@pytest.mark.parametrize("argv", [["--help"], ["verify", "--help"]])
def test_help_exits_0(argv, capsys):
    assert run_cli(*argv, capsys=capsys)[0] == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fsebackstep", "verify", "--samples", "100"], capture_output=True,
                          text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout.count("PASS") == 5
