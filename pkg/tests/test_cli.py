import json
import os
import subprocess
import sys

import pytest

from spinrenew import cli
from spinrenew.cli import run_command


def header(path):
    with open(path) as fh:
        first = fh.readline()
    assert first.startswith("# ")
    return json.loads(first[2:])


def test_simulate_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--gamma", "1", "--beta", "0.25", "--n", "1500", "--t-final", "60", "--seed", "42"]
    assert run_command(argv + ["-o", str(a)]) == 0
    assert run_command(argv + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    h = header(a)
    assert h["command"] == "simulate" and h["config"]["seed"] == 42 and h["config"]["beta"] == 0.25
    lines = a.read_text().splitlines()
    assert lines[1] == "t,m,mean_y"
    assert len(lines) == 2 + 1201
    t, m = cli.read_trajectory_csv(str(a))
    assert t[-1] == pytest.approx(60.0) and m[0] == 1.0


def test_different_seed_differs(tmp_path):
    argv = ["simulate", "--gamma", "1", "--beta", "0.25", "--n", "200", "--t-final", "5"]
    run_command(argv + ["--seed", "1", "-o", str(tmp_path / "a")])
    run_command(argv + ["--seed", "2", "-o", str(tmp_path / "b")])
    assert (tmp_path / "a").read_bytes() != (tmp_path / "b").read_bytes()


def test_pde_and_classify(tmp_path):
    out = tmp_path / "pde.csv"
    assert run_command(["pde", "--gamma", "1", "--beta", "0.3", "--t-final", "20", "--initial", "tilted",
                        "--tilt", "0.2", "-o", str(out)]) == 0
    t, m = cli.read_trajectory_csv(str(out))
    assert abs(m[0] - 0.2) < 1e-12 and abs(m[-1]) < 0.05
    res = tmp_path / "label.json"
    assert run_command(["classify", "--input", str(out), "-o", str(res)]) == 0
    doc = json.loads(res.read_text())
    assert doc["kind"] == "Stable" and doc["command"] == "classify"


def test_spectral_hopf_json(tmp_path):
    out = tmp_path / "h.json"
    assert run_command(["spectral-hopf", "--gamma", "1", "--beta-lo", "0.5", "--beta-hi", "1.0", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["hopf"]["beta_c"] == pytest.approx(0.769, abs=5e-3)
    assert doc["hopf"]["omega_c"] == pytest.approx(1.171, abs=5e-3)
    assert doc["config"]["beta-lo"] == 0.5


def test_spectral_roots_json(tmp_path):
    out = tmp_path / "r.json"
    assert run_command(["spectral-roots", "--gamma", "1", "--beta", "0.769", "--box=-2,1,-3,3", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["beta"] == 0.769 and doc["gamma"] == 1
    assert any(abs(r["im"] - 1.1705) < 5e-3 for r in doc["roots"])
    assert all({"re", "im", "residual"} <= set(r) for r in doc["roots"])


def test_couple_json(tmp_path):
    out = tmp_path / "c.json"
    assert run_command(["couple", "--gamma", "1", "--beta", "0.5", "--n", "50", "--t-final", "3",
                        "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["n"] == 50 and 0 <= doc["distance"] <= 2


def test_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert run_command(["sweep", "--gamma", "1", "--beta", "0.25,1.6", "--n", "300", "--t-final", "30",
                        "--seeds", "2", "--threads", "2", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    h = json.loads(lines[0][2:])
    assert h["config"]["beta"] == "0.25,1.6" and "onset_window" in h
    assert lines[1] == "beta,label,votes,mean_amplitude,mean_period"
    assert lines[2].startswith("0.25,Stable,") and lines[3].startswith("1.6,Magnetized,")


def test_selftest():
    assert run_command(["selftest", "--quiet"]) == 0


@pytest.mark.parametrize("argv", [
    ["simulate", "--gamma", "1", "--beta", "0.2", "--bogus"],
    ["nonsense"],
    [],
    ["simulate", "--gamma", "1"],
    ["simulate", "--gamma", "1", "--beta", "-0.2"],
    ["simulate", "--gamma", "1", "--beta", "0.2", "--n", "0"],
    ["simulate", "--gamma", "-1", "--beta", "0.2"],
    ["simulate", "--gamma", "1", "--beta", "0.2", "--seed", "-3"],
    ["sweep", "--gamma", "1", "--beta", "1:0:0.1"],
    ["spectral-roots", "--gamma", "1", "--beta", "0.5", "--box=1,0,0,1"],
    ["spectral-roots", "--gamma", "3", "--beta", "0.5"],
    ["classify", "--input", "/nonexistent/file.csv"],
])
def test_invalid_input_exits_1(argv, capsys):
    assert run_command(argv) == 1
    assert capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    assert run_command(["simulate", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_numeric_failure_exits_2(capsys):
    assert run_command(["spectral-hopf", "--gamma", "1", "--beta-lo", "1.0", "--beta-hi", "0.5"]) == 2
    assert run_command(["spectral-hopf", "--gamma", "1", "--beta-lo", "0.2", "--beta-hi", "0.4"]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_help_and_version(capsys):
    assert run_command(["--help"]) == 0
    assert run_command(["--version"]) == 0
    assert "0.1.0" in capsys.readouterr().out


def test_beta_list_parser():
    assert cli.parse_beta_list("0.1:0.3:0.05") == [0.1, 0.15, 0.2, 0.25, 0.3]
    assert cli.parse_beta_list("0.1:0.32:0.05") == [0.1, 0.15, 0.2, 0.25, 0.3]
    assert cli.parse_beta_list("0.1:0.28:0.05") == [0.1, 0.15, 0.2, 0.25, 0.3]
    assert len(cli.parse_beta_list("0.1:1.8:0.05")) == 35
    assert cli.parse_beta_list("0.25,1.1, 1.4") == [0.25, 1.1, 1.4]
    assert cli.parse_beta_list("0.7") == [0.7]
    for bad in ("1:0:0.1", "0:1:0", "0:1", "a:b:c"):
        with pytest.raises(ValueError):
            cli.parse_beta_list(bad)


def test_config_round_trip(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_command(["simulate", "--gamma", "2", "--beta", "0.3", "--n", "100", "--t-final", "4",
                        "--seed", "9", "--initial", "fair", "-o", str(out1)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# saved\n" + cli.format_config(header(out1)["config"]))
    assert cli.read_config(str(cfg)) == {k: str(v) for k, v in header(out1)["config"].items()}
    assert run_command(["--config", str(cfg), "simulate", "-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_command_line_overrides_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("gamma = 1\nbeta = 0.3\nn = 50\nt_final = 2\nseed = 1\n")
    out = tmp_path / "o.csv"
    assert run_command(["--config", str(cfg), "simulate", "--seed", "5", "-o", str(out)]) == 0
    assert header(out)["config"]["seed"] == 5 and header(out)["config"]["t-final"] == 2.0


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("this line has no equals sign\n")
    assert run_command(["--config", str(cfg), "selftest"]) == 1
    assert run_command(["--config", str(tmp_path / "missing.cfg"), "selftest"]) == 1


def test_write_atomic_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "out.txt"
    target.write_text("old")
    cli.write_atomic(str(target), "new\n")
    assert target.read_text() == "new\n"
    assert os.listdir(tmp_path) == ["out.txt"]


def test_failed_run_leaves_existing_output(tmp_path):
    target = tmp_path / "h.json"
    target.write_text("keep")
    assert run_command(["spectral-hopf", "--gamma", "1", "--beta-lo", "1.0", "--beta-hi", "0.5",
                        "-o", str(target)]) == 2
    assert target.read_text() == "keep"


def test_stdout_output(capsys):
    assert run_command(["simulate", "--gamma", "0", "--beta", "0.5", "--n", "10", "--t-final", "1"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "t,m,mean_y"


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "spinrenew", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout
