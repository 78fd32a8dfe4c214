import subprocess
import sys
from pathlib import Path


from chemolab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_run_steady_state(tmp_path, capsys):
    code = main(["run", str(CONFIGS / "steady_state.ini"), "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.split("equilibrium_linf")[1].split()[0] == "pass"
    assert (tmp_path / "series.csv").exists() and (tmp_path / "report.txt").exists()


def test_missing_config_prints_usage(tmp_path, capsys):
    code = main(["run", str(tmp_path / "nope.ini")])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_no_arguments():
    assert main([]) == 2


def test_bad_key_is_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text((CONFIGS / "steady_state.ini").read_text() + "\n[model]\nbogus = 1\n")
    assert main(["run", str(path)]) == 2


def test_sweep_requires_sweep_config():
    assert main(["sweep", str(CONFIGS / "steady_state.ini"), "--quiet"]) == 2


def test_numerical_failure(tmp_path):
    code = main(["run", str(CONFIGS / "cfl_violation.ini"), "--out", str(tmp_path), "--quiet"])
    assert code == 3
    lines = (tmp_path / "series.csv").read_text().splitlines()
    assert len(lines) >= 2


def test_inconclusive_exits_zero(tmp_path):
    text = (CONFIGS / "periodic_a0.ini").read_text().replace("r = 2", "r = 0.8")
    path = tmp_path / "below.ini"
    path.write_text(text)
    assert main(["run", str(path), "--quiet"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chemolab", "run", str(CONFIGS / "steady_state_trivial.ini"),
                           "--out", str(tmp_path), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
