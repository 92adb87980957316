"""Command line verbs and exit codes (0 ok, 2 config, 3 i/o)."""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lbflow import analysis, storage
from lbflow.cli import main

CFG = """\
[lattice]
nx = 8
ny = 6
nz = 4
max_steps = 6

[component red]
tau = 1.0
colour_charge = 1.0
density = 0.5

[component blue]
tau = 0.8
colour_charge = -1.0
density = 0.45

[couplings]
red:blue = 0.05

[init]
mode = random
seed = 11

[output]
run_id = clirun
directory = {out}
period = 3
fields = phi
checkpoint_period = 3
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CFG.format(out=tmp_path / "out"))
    return p


def test_run_verb(config_file, tmp_path, capsys):
    assert main(["run", str(config_file), "--quiet"]) == 0
    assert "finished at t=6" in capsys.readouterr().out
    root = tmp_path / "out" / "clirun"
    assert sorted(p.name for p in root.glob("*.vol")) == \
        ["phi_t3.vol", "phi_t6.vol"]
    assert (root / "checkpoint_t3.chk").exists()
    assert (root / "checkpoint_t6.chk").exists()


def test_run_missing_config_is_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2
    assert "config error" in capsys.readouterr().err


def test_run_broken_config_is_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[lattice]\nnx = soup\nny = 4\nnz = 4\n"
                 "[component w]\ntau = 1.0\n")
    assert main(["run", str(p)]) == 2


def test_run_invalid_physics_is_exit_2(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[lattice]\nnx = 4\nny = 4\nnz = 4\n"
                 "[component w]\ntau = 0.2\ndensity = 1.0\n")
    assert main(["run", str(p)]) == 2


def test_resume_verb(config_file, tmp_path, capsys):
    main(["run", str(config_file), "--quiet"])
    chk = tmp_path / "out" / "clirun" / "checkpoint_t3.chk"
    assert main(["resume", str(chk), "--max-steps", "6", "--quiet"]) == 0
    assert "finished at t=6" in capsys.readouterr().out


def test_resume_corrupt_checkpoint_is_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.chk"
    bad.write_bytes(b"CHKX garbage")
    assert main(["resume", str(bad)]) == 3
    assert "i/o error" in capsys.readouterr().err


def test_resume_matches_uninterrupted_run_bitwise(config_file, tmp_path):
    main(["run", str(config_file), "--quiet"])
    root = tmp_path / "out" / "clirun"
    direct = storage.read_checkpoint(root / "checkpoint_t6.chk")
    # wipe and redo in two halves through the CLI
    resumed_dir = tmp_path / "resumed"
    cfg2 = tmp_path / "run2.cfg"
    cfg2.write_text(CFG.format(out=resumed_dir).replace(
        "max_steps = 6", "max_steps = 3"))
    main(["run", str(cfg2), "--quiet"])
    chk = resumed_dir / "clirun" / "checkpoint_t3.chk"
    assert main(["resume", str(chk), "--max-steps", "6", "--quiet"]) == 0
    halves = storage.read_checkpoint(resumed_dir / "clirun" /
                                     "checkpoint_t6.chk")
    np.testing.assert_array_equal(halves.f, direct.f)
    assert halves.timestep == direct.timestep == 6


def test_bench_verb(capsys):
    assert main(["bench", "--size", "8", "--steps", "3"]) == 0
    out = capsys.readouterr().out
    assert "site-updates/s" in out and "MLUPS" in out


def test_analyze_structure_factor(config_file, tmp_path, capsys):
    main(["run", str(config_file), "--quiet"])
    vols = sorted(str(p) for p in
                  (tmp_path / "out" / "clirun").glob("*.vol"))
    table = tmp_path / "sf.tsv"
    assert main(["analyze", *vols, "--structure-factor", str(table)]) == 0
    header, rows = analysis.read_table(table)
    assert header == "timestep\tk1\tx_max\tpeaks"
    assert list(rows[:, 0]) == [3.0, 6.0]
    assert np.all(rows[:, 1] > 0)


def test_analyze_radial(config_file, tmp_path):
    main(["run", str(config_file), "--quiet"])
    vols = sorted(str(p) for p in
                  (tmp_path / "out" / "clirun").glob("*.vol"))
    table = tmp_path / "radial.tsv"
    assert main(["analyze", vols[-1], "--radial", str(table)]) == 0
    header, rows = analysis.read_table(table)
    assert header == "k\ts" and rows.shape[0] > 0


def test_analyze_missing_volume_is_exit_3(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "gone.vol"),
                 "--structure-factor", str(tmp_path / "t.tsv")]) == 3
    assert "i/o error" in capsys.readouterr().err


def test_analyze_defect_detection(tmp_path, capsys):
    # synthetic volume: regular dot lattice with one dead patch
    n = 64
    x = np.arange(n)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    img = (np.sin(2 * np.pi * gx / 8) * np.sin(2 * np.pi * gy / 8)) ** 2
    vol = np.broadcast_to(img, (n, n, n)).copy()
    vol[:, 24:40, 24:40] = 0.0
    path = tmp_path / "synth_t10.vol"
    storage.write_volume(path, vol.reshape(-1), (n, n, n), run_id="s",
                         name="phi", timestep=10)
    table = tmp_path / "regions.tsv"
    rc = main(["analyze", str(path), "--detect-defects", str(table),
               "--axis", "x", "--thickness", "64", "--mesh"])
    assert rc == 0
    lines = [l for l in table.read_text().splitlines()
             if not l.startswith("#")]
    assert len(lines) >= 1
    out = capsys.readouterr().out
    assert "defect region(s)" in out


def test_analyze_track(config_file, tmp_path):
    main(["run", str(config_file), "--quiet"])
    vols = sorted(str(p) for p in
                  (tmp_path / "out" / "clirun").glob("*.vol"))
    table = tmp_path / "track.tsv"
    assert main(["analyze", *vols, "--track", str(table),
                 "--axis", "z", "--thickness", "4", "--window", "4",
                 "--stride", "4"]) == 0
    header, rows = analysis.read_table(table)
    assert header == "timestep\tregions"
    assert list(rows[:, 0]) == [3.0, 6.0]


def test_cli_subprocess_entry():
    """The installed console entry point answers --help."""
    proc = subprocess.run([sys.executable, "-m", "lbflow.cli", "--help"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    for verb in ("run", "resume", "bench", "analyze", "registry"):
        assert verb in proc.stdout


def test_cli_subprocess_resume_bit_exact(config_file, tmp_path):
    """Full process isolation: run, stop, resume in a fresh interpreter,
    compare against the uninterrupted trajectory."""
    env_dir = tmp_path / "out" / "clirun"
    subprocess.run([sys.executable, "-m", "lbflow.cli", "run",
                    str(config_file), "--quiet"], check=True, timeout=300)
    direct = storage.read_checkpoint(env_dir / "checkpoint_t6.chk")
    (env_dir / "checkpoint_t6.chk").unlink()
    proc = subprocess.run(
        [sys.executable, "-m", "lbflow.cli", "resume",
         str(env_dir / "checkpoint_t3.chk"), "--max-steps", "6", "--quiet"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    resumed = storage.read_checkpoint(env_dir / "checkpoint_t6.chk")
    np.testing.assert_array_equal(resumed.f, direct.f)
    np.testing.assert_array_equal(resumed.obstacle, direct.obstacle)
