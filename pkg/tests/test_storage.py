import json
import struct

import numpy as np
import pytest

from conftest import binary_config, ternary_config
from lbflow import state, storage
from lbflow.storage import StorageError


def test_volume_roundtrip_f64_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    dims = (5, 4, 3)
    field = rng.normal(size=60)
    p = storage.write_volume(tmp_path / "a.vol", field, dims,
                             run_id="r1", name="phi", timestep=42)
    back, rdims, meta = storage.read_volume(p)
    assert rdims == dims
    assert meta == {"run_id": "r1", "name": "phi", "timestep": 42,
                    "dtype": "f64"}
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, field)


def test_volume_f32_payload_size(tmp_path):
    dims = (128, 128, 128)
    field = np.zeros(128 ** 3, dtype=np.float64)
    p = storage.write_volume(tmp_path / "b.vol", field, dims, dtype="f32")
    header = 4 + (4 + 0) + (4 + 0) + 8 + 12 + 1
    assert p.stat().st_size == header + 8388608
    back, rdims, meta = storage.read_volume(p)
    assert back.dtype == np.float32
    assert meta["dtype"] == "f32"


def test_volume_payload_is_little_endian_x_fastest(tmp_path):
    dims = (2, 2, 1)
    field = np.array([1.0, 2.0, 3.0, 4.0])  # x-fastest flat order
    p = storage.write_volume(tmp_path / "c.vol", field, dims, run_id="q")
    raw = p.read_bytes()
    assert raw[:4] == b"VOL1"
    payload = raw[-32:]
    assert struct.unpack("<4d", payload) == (1.0, 2.0, 3.0, 4.0)


def test_volume_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.vol"
    p.write_bytes(b"XXXX" + bytes(64))
    with pytest.raises(StorageError, match="magic"):
        storage.read_volume(p)


def test_volume_truncation_detected(tmp_path):
    dims = (4, 4, 4)
    p = storage.write_volume(tmp_path / "t.vol", np.zeros(64), dims)
    raw = p.read_bytes()
    p.write_bytes(raw[:-9])
    with pytest.raises(StorageError, match="truncated"):
        storage.read_volume(p)


def test_volume_trailing_bytes_detected(tmp_path):
    dims = (2, 2, 2)
    p = storage.write_volume(tmp_path / "tr.vol", np.zeros(8), dims)
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(StorageError, match="trailing"):
        storage.read_volume(p)


def test_volume_path_layout():
    p = storage.volume_path("/data", "run7", "phi", 2500)
    assert str(p) == "/data/run7/phi_t2500.vol"


def test_geometry_roundtrip_8_and_16_bit(tmp_path):
    rng = np.random.default_rng(1)
    dims = (3, 5, 2)
    g8 = rng.integers(0, 256, size=30, dtype=np.uint8)
    p = storage.write_geometry(tmp_path / "g8.geo", g8, dims, name="rock",
                               voxel_size=2.5)
    back, rdims, meta = storage.read_geometry(p)
    assert rdims == dims and meta["sample_width"] == 1
    assert meta["voxel_size"] == 2.5 and meta["name"] == "rock"
    np.testing.assert_array_equal(back, g8)

    g16 = rng.integers(0, 1 << 16, size=30, dtype=np.uint16)
    p = storage.write_geometry(tmp_path / "g16.geo", g16, dims,
                               sample_width=2)
    back, rdims, meta = storage.read_geometry(p)
    assert meta["sample_width"] == 2
    np.testing.assert_array_equal(back, g16)


def test_geometry_feeds_ingest(tmp_path):
    from lbflow import geometry
    dims = (4, 4, 4)
    grey = np.zeros((4, 4, 4), dtype=np.uint8)
    grey[1:3] = 200
    p = storage.write_geometry(tmp_path / "s.geo", grey, dims)
    back, rdims, _ = storage.read_geometry(p)
    mask, poro = geometry.ingest_voxels(back.tobytes(), rdims, 128.0)
    assert poro == 0.5


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    cfg = ternary_config()
    lat = state.make_lattice(cfg)
    lat.timestep = 137
    lat.le_displacement = 3.25
    lat.dipole[:] = np.random.default_rng(5).normal(size=lat.dipole.shape)
    lat.rng.random(10)  # advance the stream so state is nontrivial
    p = storage.write_checkpoint(tmp_path / "c.chk", lat)
    back = storage.read_checkpoint(p)
    assert back.timestep == 137
    assert back.le_displacement == 3.25
    assert back.config.to_dict() == cfg.to_dict()
    np.testing.assert_array_equal(back.f, lat.f)
    np.testing.assert_array_equal(back.obstacle, lat.obstacle)
    np.testing.assert_array_equal(back.dipole, lat.dipole)
    assert storage._rng_state_json(back.rng.bit_generator.state) == \
        storage._rng_state_json(lat.rng.bit_generator.state)
    # the restored stream continues identically
    np.testing.assert_array_equal(back.rng.random(5), lat.rng.random(5))


def test_checkpoint_binary_no_dipole(tmp_path):
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    p = storage.write_checkpoint(tmp_path / "b.chk", lat)
    back = storage.read_checkpoint(p)
    assert back.dipole is None
    np.testing.assert_array_equal(back.f, lat.f)


def test_checkpoint_corrupt_magic(tmp_path):
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    p = storage.write_checkpoint(tmp_path / "m.chk", lat)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"JUNK"
    p.write_bytes(bytes(raw))
    with pytest.raises(StorageError, match="magic"):
        storage.read_checkpoint(p)


def test_checkpoint_truncated_payload(tmp_path):
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    p = storage.write_checkpoint(tmp_path / "t.chk", lat)
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(StorageError, match="truncated"):
        storage.read_checkpoint(p)


def test_checkpoint_bad_config_json(tmp_path):
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    p = storage.write_checkpoint(tmp_path / "j.chk", lat)
    raw = bytearray(p.read_bytes())
    # clobber the embedded config json
    cfg_len = struct.unpack("<I", raw[4:8])[0]
    raw[8:8 + cfg_len] = b"{" * cfg_len
    p.write_bytes(bytes(raw))
    with pytest.raises(StorageError, match="config"):
        storage.read_checkpoint(p)


def test_checkpoint_write_is_atomic(tmp_path):
    # simulated crash: the temp file may linger, the final name never holds
    # a partial file because it appears only through rename
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    p = storage.write_checkpoint(tmp_path / "a.chk", lat)
    assert not (tmp_path / "a.chk.tmp").exists()
    storage.read_checkpoint(p)


def test_replicate_tiles_every_axis():
    cfg = binary_config(dims=(3, 4, 2))
    lat = state.make_lattice(cfg)
    big = storage.replicate_upscale(lat, (2, 1, 3))
    assert big.config.dims == (6, 4, 6)
    f0 = lat.f.reshape(2, 19, 2, 4, 3)
    f1 = big.f.reshape(2, 19, 6, 4, 6)
    for kz in range(3):
        for kx in range(2):
            np.testing.assert_array_equal(
                f1[:, :, 2 * kz:2 * kz + 2, :, 3 * kx:3 * kx + 3], f0)
    assert big.timestep == lat.timestep


def test_replicate_noise_breaks_copies_but_conserves_nothing_weird():
    cfg = ternary_config(dims=(3, 3, 3))
    lat = state.make_lattice(cfg)
    big = storage.replicate_upscale(lat, (2, 2, 2), noise=0.01)
    f5 = big.f.reshape(3, 19, 6, 6, 6)
    assert not np.array_equal(f5[:, :, :3, :3, :3], f5[:, :, 3:, 3:, 3:])
    # noise is bounded multiplicative
    ratio = f5[:, :, :3, :3, :3] / lat.f.reshape(3, 19, 3, 3, 3)
    assert np.all(np.abs(ratio - 1.0) <= 0.0100001)


def test_replicate_rejects_sheared_state():
    cfg = binary_config()
    lat = state.make_lattice(cfg)
    lat.le_displacement = 1.5
    with pytest.raises(StorageError, match="displaced"):
        storage.replicate_upscale(lat, (2, 1, 1))


def test_replicated_state_steps_like_periodic_copy():
    # a tiled state evolved one step equals the small state's step, tiled
    from lbflow.dynamics import Stepper
    cfg = binary_config(dims=(4, 3, 3))
    lat = state.make_lattice(cfg)
    big = storage.replicate_upscale(lat, (1, 2, 1))
    Stepper(lat.config).step(lat)
    Stepper(big.config).step(big)
    tiled = np.tile(lat.f.reshape(2, 19, 3, 3, 4), (1, 1, 1, 2, 1)).reshape(
        2, 19, -1)
    np.testing.assert_array_equal(big.f, tiled)
