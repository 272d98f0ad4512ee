import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from slowfast_is.cli import main
from slowfast_is.engine import SWEEP_COLUMNS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

CONST = """
[model]
name = rough_langevin
[model.params]
amplitude = 0
potential = linear
stiffness = 0
[regime]
tag = R1
exponent = 1.5
[sim]
epsilon = 0.25
eps_list = 0.5, 0.25
n_paths = 200
seed = 5
chunk_size = 64
[functional]
h = quadratic
center = 1.0
weight = -0.1
offset = 1.2
[subsolution]
kind = hopf_lax
"""


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def run(tmp_path, command, text, *extra, name="run.ini"):
    cfg = tmp_path / name
    cfg.write_text(text, encoding="utf-8")
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def test_validate_preset(tmp_path):
    code = main(["validate", "--config", str(CONFIGS / "rough_langevin_validate.ini"),
                 "--out", str(tmp_path)])
    assert code == 0
    rows = dict(read(tmp_path / "validation.csv")[1:])
    assert rows["ok"] == "true"


def test_validate_degenerate_noise(tmp_path, capsys):
    code = main(["validate", "--config", str(CONFIGS / "degenerate_noise.ini"), "--out", str(tmp_path)])
    assert code == 1
    assert "ellipticity" in capsys.readouterr().err


def test_missing_regime_is_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "validate", "[model]\nname = rough_langevin\n")
    assert code == 2
    assert "regime" in capsys.readouterr().err


def test_increasing_eps_list(tmp_path):
    code, _ = run(tmp_path, "sweep", CONST.replace("eps_list = 0.5, 0.25", "eps_list = 0.25, 0.5"))
    assert code == 2


def test_unknown_key(tmp_path, capsys):
    code, _ = run(tmp_path, "estimate", CONST + "colour = red\n")
    assert code == 2
    assert "unknown key 'colour'" in capsys.readouterr().err


def test_bad_model_param(tmp_path):
    code, _ = run(tmp_path, "validate", CONST.replace("stiffness = 0", "stiffness = 0\nflavour = 1"))
    assert code == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["estimate"])
    assert exc.value.code == 2


def test_solve_cell_outputs(tmp_path):
    code = main(["solve-cell", "--config", str(CONFIGS / "fast_vol_r3.ini"), "--out", str(tmp_path)])
    assert code == 0
    cell = read(tmp_path / "cell.csv")
    assert cell[0] == ["y", "xi", "dxi"] and len(cell) == 513
    summary = dict(read(tmp_path / "cell_summary.csv")[1:])
    # sigma = 1 + sin(2 pi y)/2 integrates to 1, so h_bar = -p^2/2 at p = 1
    assert float(summary["h_bar"]) == pytest.approx(-0.5, abs=1e-8)


def test_solve_cell_r1_writes_measure(tmp_path):
    code = main(["solve-cell", "--config", str(CONFIGS / "rough_langevin_validate.ini"), "--out", str(tmp_path)])
    assert code == 0
    assert read(tmp_path / "cell.csv")[0] == ["y", "chi", "dchi"]
    mu = np.array(read(tmp_path / "measure.csv")[1:], float)
    assert mu[:, 1].sum() / 512 == pytest.approx(1.0)


def test_effective_ou_factor(tmp_path):
    text = ("[model]\nname = fast_vol\n[model.params]\nperiodic = false\namplitude = 0.5\n"
            "[regime]\ntag = R1\nexponent = 2\n")
    code, out = run(tmp_path, "effective", text)
    assert code == 0
    rows = read(out / "effective.csv")
    # [DERIVED] E (1 + sin(2 pi Y)/2)^2 for Y ~ N(0, 1/2): 1 + (1 - e^{-4 pi^2}) / 8
    assert float(rows[1][2]) == pytest.approx(1 + (1 - np.exp(-4 * np.pi**2)) / 8, rel=1e-10)


def test_quasipotential(tmp_path):
    code, out = run(tmp_path, "quasipotential", CONST)
    assert code == 0
    rows = read(out / "quasipotential.csv")
    assert rows[0] == ["t", "x1", "G", "z1"]
    # [DERIVED] G = w (x - c)^2 / (1 + 2 w q tau) + k with q = 2
    assert float(rows[1][2]) == pytest.approx(-0.1 / 0.6 + 1.2, abs=1e-10)
    assert read(out / "verification.csv")[0] == ["t", "x1", "hjb_residual", "terminal_slack"]


def test_estimate_deterministic(tmp_path):
    code, out = run(tmp_path, "estimate", CONST, "--no-timing", "--threads", "1")
    first = (out / "estimate.csv").read_bytes()
    code2, _ = run(tmp_path, "estimate", CONST, "--no-timing", "--threads", "2")
    assert code == code2 == 0
    assert (out / "estimate.csv").read_bytes() == first
    assert read(out / "estimate.csv")[0] == list(SWEEP_COLUMNS)
    run(tmp_path, "estimate", CONST, "--no-timing", "--seed", "6")
    assert (out / "estimate.csv").read_bytes() != first


def test_estimate_per_path_log(tmp_path):
    code, out = run(tmp_path, "estimate", CONST.replace("chunk_size = 64", "per_path_log = true"))
    assert code == 0
    paths = read(out / "paths.csv")
    assert paths[0] == ["path", "x1_T", "log_lr", "log_gamma", "diverged_step"]
    assert len(paths) == 201


def test_sweep_outputs(tmp_path):
    code, out = run(tmp_path, "sweep", CONST, "--no-timing")
    assert code == 0
    rows = read(out / "sweep.csv")
    assert rows[0] == list(SWEEP_COLUMNS) and len(rows) == 3
    assert read(out / "sweep_plot.csv")[0] == ["epsilon", "decay_2nd", "bound"]
    assert float(rows[1][SWEEP_COLUMNS.index("bound")]) == pytest.approx(2 * (-0.1 / 0.6 + 1.2))


def test_out_dir_from_environment(tmp_path, monkeypatch):
    cfg = tmp_path / "run.ini"
    cfg.write_text(CONST, encoding="utf-8")
    monkeypatch.setenv("SLOWFAST_IS_OUT", str(tmp_path / "env_out"))
    assert main(["quasipotential", "--config", str(cfg)]) == 0
    assert (tmp_path / "env_out" / "quasipotential.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "slowfast_is.cli", "validate", "--config",
                           str(CONFIGS / "rough_langevin_validate.ini"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
