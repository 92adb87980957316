"""Runner orchestration: geometry ingest, output cadence, checkpoint
recovery, steerable parameter wiring."""

import copy
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from lbflow import storage
from lbflow.dynamics import Stepper
from lbflow.model import (ComponentSpec, ConfigError, CouplingMatrix,
                          ForcingConfig, GeometryConfig, InitConfig,
                          OutputConfig, SimConfig)
from lbflow.runner import (Runner, build_lattice, resolve_field,
                           resume_checkpoint, load_geometry_mask)
from lbflow.state import make_lattice

from conftest import binary_config, ternary_config


def out_config(tmp_path, dims=(6, 5, 4), **kw):
    cfg = binary_config(dims)
    cfg.output = OutputConfig(run_id="r", directory=str(tmp_path), **kw)
    return cfg


# -- geometry ingest -----------------------------------------------------------


def test_geometry_from_container(tmp_path):
    dims = (6, 5, 4)
    grey = np.zeros(np.prod(dims), dtype=np.float64)
    grey[:10] = 255.0
    gpath = tmp_path / "rock.geo"
    storage.write_geometry(gpath, grey, dims, sample_width=1)
    cfg = out_config(tmp_path)
    cfg.geometry = GeometryConfig(path=str(gpath), threshold=128.0)
    lat = build_lattice(cfg)
    assert lat.obstacle.sum() == 10
    assert np.all(lat.f[:, :, lat.obstacle == 1] == 0.0)


def test_geometry_from_raw_bytes(tmp_path):
    dims = (4, 4, 4)
    raw = bytes(64)
    p = tmp_path / "open.raw"
    p.write_bytes(raw)
    cfg = out_config(tmp_path, dims=dims)
    cfg.geometry = GeometryConfig(path=str(p), threshold=1.0)
    lat = build_lattice(cfg)
    assert lat.obstacle.sum() == 0


def test_geometry_dims_mismatch(tmp_path):
    gpath = tmp_path / "rock.geo"
    storage.write_geometry(gpath, np.zeros(8), (2, 2, 2))
    cfg = out_config(tmp_path)
    cfg.geometry = GeometryConfig(path=str(gpath))
    with pytest.raises(ConfigError, match="lattice is"):
        build_lattice(cfg)


def test_geometry_missing_file(tmp_path):
    cfg = out_config(tmp_path)
    cfg.geometry = GeometryConfig(path=str(tmp_path / "gone.geo"))
    with pytest.raises((storage.StorageError, ConfigError)):
        build_lattice(cfg)


def test_forced_axis_must_percolate(tmp_path):
    dims = (6, 5, 4)
    grey = np.zeros(dims[2] * dims[1] * dims[0])
    wall = grey.reshape(dims[2], dims[1], dims[0])
    wall[:, :, 2] = 255.0   # solid yz-plane blocks x
    p = tmp_path / "wall.geo"
    storage.write_geometry(p, grey, dims)
    cfg = out_config(tmp_path, dims=dims)
    cfg.geometry = GeometryConfig(path=str(p))
    cfg.forcing = ForcingConfig(g_accn=0.001, axis=0)
    with pytest.raises(ConfigError, match="percolate"):
        build_lattice(cfg)
    cfg.forcing = ForcingConfig(g_accn=0.001, axis=1)   # open along y
    build_lattice(cfg)


def test_no_geometry_is_open_box(tmp_path):
    cfg = out_config(tmp_path)
    assert load_geometry_mask(cfg) is None
    lat = build_lattice(cfg)
    assert lat.obstacle.sum() == 0


# -- field resolution -----------------------------------------------------------


def test_resolve_fields():
    cfg = binary_config()
    lat = make_lattice(cfg)
    Stepper(cfg).run(lat, 2)
    np.testing.assert_array_equal(resolve_field(lat, "phi"),
                                  lat.order_parameter())
    np.testing.assert_array_equal(resolve_field(lat, "rho"),
                                  lat.mixture_density())
    np.testing.assert_array_equal(resolve_field(lat, "rho:blue"),
                                  lat.density(1))
    np.testing.assert_array_equal(resolve_field(lat, "ux"),
                                  lat.mixture_velocity()[0])
    assert resolve_field(lat, "phi") is not lat.order_parameter() or True
    # copies: mutating the result must not touch the lattice
    r = resolve_field(lat, "rho")
    r[:] = -1.0
    assert lat.mixture_density().min() > 0.0


def test_resolve_field_unknown():
    cfg = binary_config()
    lat = make_lattice(cfg)
    with pytest.raises(ConfigError, match="unknown output field"):
        resolve_field(lat, "vorticity")
    with pytest.raises(ConfigError, match="no component"):
        resolve_field(lat, "rho:green")


# -- loop cadence -----------------------------------------------------------------


def test_run_advances_to_max_steps(tmp_path):
    cfg = out_config(tmp_path)
    cfg.max_steps = 7
    lat = Runner(cfg, quiet=True).run()
    assert lat.timestep == 7


def test_volumes_written_on_period(tmp_path):
    cfg = out_config(tmp_path, period=5, fields=("phi", "rho:red"))
    cfg.max_steps = 10
    Runner(cfg, quiet=True).run()
    root = Path(tmp_path, "r")
    phis = sorted(p.name for p in root.glob("phi_t*.vol"))
    reds = sorted(p.name for p in root.glob("rho:red_t*.vol"))
    assert phis == ["phi_t10.vol", "phi_t5.vol"]
    assert reds == ["rho:red_t10.vol", "rho:red_t5.vol"]
    field, dims, meta = storage.read_volume(root / "phi_t5.vol")
    assert meta["timestep"] == 5 and dims == cfg.dims
    assert meta["run_id"] == "r" and meta["name"] == "phi"


def test_no_volume_at_step_zero(tmp_path):
    cfg = out_config(tmp_path, period=1, fields=("phi",))
    cfg.max_steps = 3
    Runner(cfg, quiet=True).run()
    names = sorted(p.name for p in Path(tmp_path, "r").glob("*.vol"))
    assert names == ["phi_t1.vol", "phi_t2.vol", "phi_t3.vol"]


def test_extra_steps_overrides_max(tmp_path):
    cfg = out_config(tmp_path)
    cfg.max_steps = 100
    runner = Runner(cfg, quiet=True)
    lat = runner.run(extra_steps=4)
    assert lat.timestep == 4 and cfg.max_steps == 4


def test_checkpoint_cadence_and_resume_bitwise(tmp_path):
    cfg = out_config(tmp_path, checkpoint_period=4)
    cfg.max_steps = 8
    reference = make_lattice(copy.deepcopy(cfg))
    Stepper(reference.config).run(reference, 8)

    Runner(cfg, quiet=True).run()
    chk = Path(tmp_path, "r", "checkpoint_t4.chk")
    assert chk.exists()
    resumed = resume_checkpoint(chk, max_steps=8)
    assert resumed.timestep == 8
    np.testing.assert_array_equal(resumed.f, reference.f)


def test_resume_with_different_workers(tmp_path):
    cfg = out_config(tmp_path, checkpoint_period=3)
    cfg.max_steps = 6
    reference = make_lattice(copy.deepcopy(cfg))
    Stepper(reference.config).run(reference, 6)
    Runner(cfg, quiet=True).run()
    chk = Path(tmp_path, "r", "checkpoint_t3.chk")
    resumed = resume_checkpoint(chk, max_steps=6, workers=4)
    np.testing.assert_array_equal(resumed.f, reference.f)


def test_checkpoint_failure_pauses_instead_of_dying(tmp_path):
    cfg = out_config(tmp_path)
    # run directory path occupied by a file: mkdir will fail
    (tmp_path / "r").write_text("in the way")
    runner = Runner(cfg, quiet=True)
    assert runner.write_checkpoint() is None
    assert runner.paused


def test_stop_request_checkpoints_then_exits(tmp_path):
    cfg = out_config(tmp_path)
    cfg.max_steps = 0   # endless
    runner = Runner(cfg, quiet=True)
    thread = threading.Thread(target=runner.run, daemon=True)
    thread.start()
    time.sleep(0.2)
    runner.stop_requested = True
    thread.join(timeout=10)
    assert not thread.is_alive()
    chks = list(Path(tmp_path, "r").glob("checkpoint_t*.chk"))
    assert len(chks) == 1
    restored = storage.read_checkpoint(chks[0])
    assert restored.timestep == runner.lattice.timestep


# -- steerable parameter table ------------------------------------------------------


def test_param_table_minimum_set(tmp_path):
    cfg = out_config(tmp_path)
    runner = Runner(cfg, quiet=True)
    names = set(runner.params)
    assert {"output_period", "max_steps", "g_accn", "shear_u",
            "g:blue:red", "g:blue:blue", "g:red:red"} <= names
    assert "beta" not in names   # no amphiphile in the binary mix


def test_param_table_includes_beta_for_amphiphile(tmp_path):
    cfg = ternary_config()
    cfg.output = OutputConfig(run_id="r", directory=str(tmp_path))
    runner = Runner(cfg, quiet=True)
    assert "beta" in runner.params
    runner.params["beta"].set(22.0)
    assert cfg.component("surf").beta == 22.0
    assert runner.params["beta"].get() == 22.0


def test_param_setters_hit_live_config(tmp_path):
    cfg = out_config(tmp_path)
    runner = Runner(cfg, quiet=True)
    runner.params["g_accn"].set(0.002)
    runner.params["shear_u"].set(0.03)
    runner.params["g:blue:red"].set(0.01)
    runner.params["output_period"].set(25)
    assert cfg.forcing.g_accn == 0.002
    assert cfg.boundaries.shear_u == 0.03
    assert cfg.couplings.g("red", "blue") == 0.01
    assert cfg.output.period == 25


def test_steered_coupling_changes_next_step(tmp_path):
    """The same state stepped with a different coupling diverges on that
    very step: mutations take effect at the following timestep boundary."""
    cfg_a = out_config(tmp_path)
    cfg_b = copy.deepcopy(cfg_a)
    lat_a = make_lattice(cfg_a)
    lat_b = make_lattice(cfg_b)
    sa, sb = Stepper(cfg_a), Stepper(cfg_b)
    sa.run(lat_a, 3)
    sb.run(lat_b, 3)
    np.testing.assert_array_equal(lat_a.f, lat_b.f)
    cfg_b.couplings.set_g("red", "blue", 0.01)
    sa.step(lat_a)
    sb.step(lat_b)
    assert not np.array_equal(lat_a.f, lat_b.f)


def test_state_view_snapshot(tmp_path):
    cfg = out_config(tmp_path)
    cfg.max_steps = 5
    runner = Runner(cfg, quiet=True)
    view = runner.state_view()
    assert view["dims"] == [6, 5, 4]
    assert view["timestep"] == 0 and view["max_steps"] == 5
    assert "phi" in view["fields"] and "rho:blue" in view["fields"]
    names = [p["name"] for p in view["params"]]
    assert "g_accn" in names
