import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import CONFIGS
from evowave.cli import main

GOLDEN = str(CONFIGS / "reflection_1d.toml")


def read_csv(path, skip_comment=False):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if skip_comment:
        assert lines[0].startswith("# schema=evowave-snapshot/1")
        lines = lines[1:]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def golden_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", GOLDEN, "--out", str(out)]) == 0
    return out


def test_run_writes_all_files(golden_run):
    manifest = json.loads((golden_run / "manifest.json").read_text())
    for name in manifest["files"]:
        assert (golden_run / name).is_file()
    assert manifest["certification"]["passed"] and manifest["certification"]["c0"] == pytest.approx(0.5)
    assert 0 <= manifest["skew_defect"] <= 1e-12
    assert manifest["config"]["stepping"]["tau"] == 0.00390625
    assert manifest["interface_faces"] == 1


def test_energy_constant_after_source_switch_off(golden_run):
    header, rows = read_csv(golden_run / "energy.csv")
    assert header == ["time", "energy"]
    t, e = np.array(rows, dtype=float).T
    assert len(t) == 129 and e[0] == 0
    off = e[t >= 0.15 + 1e-12]
    assert off[0] > 0
    assert np.abs(off - off[0]).max() <= 1e-8 * off[0]


def test_snapshot_schema(golden_run):
    header, rows = read_csv(golden_run / "snapshots" / "snapshot_00004.csv", skip_comment=True)
    assert header == ["cell", "x", "label", "v1", "T11", "p"]
    assert len(rows) == 128
    assert rows[0][2] == "acoustic" and rows[0][4] == "" and rows[0][5] != ""
    assert rows[-1][2] == "elastic" and rows[-1][5] == ""


def test_interface_series(golden_run):
    header, rows = read_csv(golden_run / "interface.csv")
    assert header[0] == "time" and len(rows) == 9


def test_run_is_deterministic(golden_run, tmp_path):
    assert main(["run", "--config", GOLDEN, "--out", str(tmp_path)]) == 0
    files = sorted(p.relative_to(golden_run) for p in golden_run.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    for f in files:
        assert (golden_run / f).read_bytes() == (tmp_path / f).read_bytes()


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("EVOWAVE_OUT", str(target))
    assert main(["demo-order-dependence", "--n", "16"]) == 0
    assert (target / "A_D2.csv").is_file()


def test_check_adjoint_3d(tmp_path, capsys):
    assert main(["check-adjoint", "--config", str(CONFIGS / "mixed_3d.toml"), "--out", str(tmp_path), "--seed", "7"]) == 0
    header, rows = read_csv(tmp_path / "adjoint.csv")
    assert all(r[3] == "true" for r in rows) and any(r[0] == "A" and r[1] == "skew" for r in rows)
    assert "all defects" in capsys.readouterr().out


def test_check_positivity(tmp_path, capsys):
    assert main(["check-positivity", "--config", str(CONFIGS / "mixed_2d.toml"), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "positivity_rho.csv")
    assert [float(r[0]) for r in rows if r[4] == "true"] == [1.0, 2.0, 4.0, 8.0]
    assert "threshold rho = 1.0" in capsys.readouterr().out
    _, cells = read_csv(tmp_path / "positivity.csv")
    assert len(cells) == 32 * 32 * 2


def test_check_positivity_failure(tmp_path):
    text = (CONFIGS / "mixed_2d.toml").read_text().replace("rho_star = -1.0", "rho_star = -100.0")
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    assert main(["check-positivity", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_convergence(tmp_path):
    assert main(["convergence", "--config", GOLDEN, "--levels", "3", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "convergence.csv")
    orders = [float(r[6]) for r in rows if r[0] == "time" and r[6]]
    assert len(orders) == 2 and min(orders) >= 1.8


@pytest.mark.parametrize("n", [16, 64])
def test_demo_order_dependence(tmp_path, n):
    assert main(["demo-order-dependence", "--n", str(n), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "A_D1.csv")
    assert len(rows) == 2 * n + 1 and len(header) == 2 * n + 2
    _, support = read_csv(tmp_path / "difference_support.csv")
    assert len(support) == 4


def test_bad_config_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text((CONFIGS / "mixed_3d.toml").read_text().replace("[stepping]", "[stepping]\nsteps = 3"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "stepping.steps" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "evowave.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("run", "check-adjoint", "check-positivity", "convergence", "demo-order-dependence"):
        assert cmd in proc.stdout
