"""Binary containers for volumes (VOL1), greyscale geometry (GEO1) and
restart checkpoints (CHK1).

All multi-byte values are little-endian. Strings are a u32 byte count
followed by UTF-8 bytes. Scalar field payloads are stored x-fastest
(site index = x + nx*(y + ny*z)), matching the in-memory flat layout.

VOL1: magic "VOL1" | run_id str | field str | timestep u64
      | nx,ny,nz u32 | dtype u8 (0=f64, 1=f32) | payload
GEO1: magic "GEO1" | name str | nx,ny,nz u32 | sample_width u8 (1|2)
      | voxel_size f64 (physical units per voxel, 0 = unknown) | payload
CHK1: magic "CHK1" | config json str | timestep u64 | le_displacement f64
      | rng json str | has_dipole u8 | f (C*Q*N f64) | obstacle (N u8)
      | dipole (3*N f64, if present)

Checkpoints restore bit-exactly: every array and the RNG stream round-trip
through the file unchanged.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .model import ConfigError, SimConfig
from .state import Lattice

VOL_MAGIC = b"VOL1"
GEO_MAGIC = b"GEO1"
CHK_MAGIC = b"CHK1"

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_DTYPE_CODES = {"f64": 0, "f32": 1}


class StorageError(Exception):
    """Malformed or truncated container, or a filesystem failure."""


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _read_exact(fh, n: int, what: str) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise StorageError(f"truncated file: expected {n} bytes for {what}, "
                           f"got {len(b)}")
    return b


def _read_str(fh, what: str) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4, what + " length"))
    if n > 1 << 24:
        raise StorageError(f"unreasonable {what} length {n}")
    return _read_exact(fh, n, what).decode("utf-8")


def _check_magic(fh, magic: bytes, path) -> None:
    got = fh.read(4)
    if got != magic:
        raise StorageError(f"{path}: bad magic {got!r}, expected {magic!r}")


# -- volumes -------------------------------------------------------------


def volume_path(directory, run_id: str, field: str, timestep: int) -> Path:
    d = Path(directory) / run_id
    return d / f"{field}_t{timestep}.vol"


def write_volume(path, field: np.ndarray, dims, *, run_id: str = "",
                 name: str = "", timestep: int = 0, dtype: str = "f64"):
    nx, ny, nz = dims
    data = np.ascontiguousarray(field, dtype=np.float64).reshape(-1)
    if data.size != nx * ny * nz:
        raise StorageError(f"field has {data.size} values, dims {dims} "
                           f"need {nx * ny * nz}")
    code = _DTYPE_CODES[dtype]
    payload = data.astype(_DTYPES[code], copy=False)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(VOL_MAGIC)
        fh.write(_pack_str(run_id))
        fh.write(_pack_str(name))
        fh.write(struct.pack("<QIIIB", timestep, nx, ny, nz, code))
        fh.write(payload.tobytes())
    return path


def read_volume(path):
    """Returns (field flat f64 or f32, dims, meta dict)."""
    with open(path, "rb") as fh:
        _check_magic(fh, VOL_MAGIC, path)
        run_id = _read_str(fh, "run id")
        name = _read_str(fh, "field name")
        timestep, nx, ny, nz, code = struct.unpack(
            "<QIIIB", _read_exact(fh, 21, "volume header"))
        if code not in _DTYPES:
            raise StorageError(f"{path}: unknown dtype code {code}")
        dt = _DTYPES[code]
        raw = _read_exact(fh, nx * ny * nz * dt.itemsize, "volume payload")
        if fh.read(1):
            raise StorageError(f"{path}: trailing bytes after payload")
    field = np.frombuffer(raw, dtype=dt)
    meta = {"run_id": run_id, "name": name, "timestep": timestep,
            "dtype": "f64" if code == 0 else "f32"}
    return field, (nx, ny, nz), meta


# -- greyscale geometry ---------------------------------------------------


def write_geometry(path, grey: np.ndarray, dims, *, name: str = "",
                   sample_width: int = 1, voxel_size: float = 0.0):
    nx, ny, nz = dims
    if sample_width not in (1, 2):
        raise StorageError(f"sample width must be 1 or 2, got {sample_width}")
    dt = np.uint8 if sample_width == 1 else np.dtype("<u2")
    data = np.ascontiguousarray(grey, dtype=dt).reshape(-1)
    if data.size != nx * ny * nz:
        raise StorageError(f"geometry has {data.size} samples, dims {dims} "
                           f"need {nx * ny * nz}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(GEO_MAGIC)
        fh.write(_pack_str(name))
        fh.write(struct.pack("<IIIBd", nx, ny, nz, sample_width, voxel_size))
        fh.write(data.tobytes())
    return path


def read_geometry(path):
    """Returns (grey flat, dims, meta dict)."""
    with open(path, "rb") as fh:
        _check_magic(fh, GEO_MAGIC, path)
        name = _read_str(fh, "geometry name")
        nx, ny, nz, width, voxel = struct.unpack(
            "<IIIBd", _read_exact(fh, 21, "geometry header"))
        if width not in (1, 2):
            raise StorageError(f"{path}: bad sample width {width}")
        dt = np.uint8 if width == 1 else np.dtype("<u2")
        raw = _read_exact(fh, nx * ny * nz * width, "geometry payload")
        if fh.read(1):
            raise StorageError(f"{path}: trailing bytes after payload")
    grey = np.frombuffer(raw, dtype=dt)
    return grey, (nx, ny, nz), {"name": name, "sample_width": width,
                                "voxel_size": voxel}


# -- checkpoints ----------------------------------------------------------


def checkpoint_path(directory, run_id: str, timestep: int) -> Path:
    return Path(directory) / run_id / f"checkpoint_t{timestep}.chk"


def _rng_state_json(state: dict) -> str:
    """Philox state holds uint64 arrays; python ints serialize exactly."""
    def conv(v):
        if isinstance(v, np.ndarray):
            return [int(x) for x in v]
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return int(v) if isinstance(v, np.integer) else v
    return json.dumps(conv(state))


def _rng_from_state(state: dict):
    kinds = {"Philox": np.random.Philox, "PCG64": np.random.PCG64}
    name = state.get("bit_generator")
    if name not in kinds:
        raise StorageError(f"unknown rng kind {name!r}")
    gen = np.random.Generator(kinds[name]())
    gen.bit_generator.state = state
    return gen


def write_checkpoint(path, lattice: Lattice):
    """Atomic write (temp file + rename) so a crash mid-write never leaves
    a half checkpoint under the final name."""
    cfg_json = json.dumps(lattice.config.to_dict())
    rng_json = _rng_state_json(lattice.rng.bit_generator.state)
    has_dip = lattice.dipole is not None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHK_MAGIC)
        fh.write(_pack_str(cfg_json))
        fh.write(struct.pack("<Qd", lattice.timestep, lattice.le_displacement))
        fh.write(_pack_str(rng_json))
        fh.write(struct.pack("<B", int(has_dip)))
        fh.write(np.ascontiguousarray(lattice.f, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lattice.obstacle, dtype=np.uint8).tobytes())
        if has_dip:
            fh.write(np.ascontiguousarray(lattice.dipole, dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> Lattice:
    from . import stencil

    with open(path, "rb") as fh:
        _check_magic(fh, CHK_MAGIC, path)
        cfg_json = _read_str(fh, "config")
        try:
            config = SimConfig.from_dict(json.loads(cfg_json))
        except (json.JSONDecodeError, ConfigError, KeyError, TypeError) as e:
            raise StorageError(f"{path}: bad embedded config: {e}") from e
        timestep, le_disp = struct.unpack("<Qd", _read_exact(fh, 16, "state header"))
        rng_state = json.loads(_read_str(fh, "rng state"))
        (has_dip,) = struct.unpack("<B", _read_exact(fh, 1, "dipole flag"))
        n = config.n_sites
        ncomp = len(config.components)
        f = np.frombuffer(
            _read_exact(fh, ncomp * stencil.Q * n * 8, "distributions"),
            dtype="<f8").reshape(ncomp, stencil.Q, n).copy()
        obstacle = np.frombuffer(
            _read_exact(fh, n, "obstacle mask"), dtype=np.uint8
        ).astype(bool)
        dipole = None
        if has_dip:
            dipole = np.frombuffer(
                _read_exact(fh, 3 * n * 8, "dipoles"), dtype="<f8"
            ).reshape(3, n).copy()
        if fh.read(1):
            raise StorageError(f"{path}: trailing bytes after payload")
    if has_dip != (config.amphiphile_index() is not None):
        raise StorageError(f"{path}: dipole payload does not match config")
    try:
        rng = _rng_from_state(rng_state)
    except (ValueError, TypeError, KeyError, AttributeError) as e:
        raise StorageError(f"{path}: bad rng state: {e}") from e
    return Lattice(config, f, obstacle, dipole, rng, timestep, le_disp)


# -- replication upscaling ------------------------------------------------


def replicate_upscale(lattice: Lattice, factors, noise: float = 0.0) -> Lattice:
    """Tile a converged state k-fold per axis to seed a larger run.

    Optional multiplicative noise (uniform in [1-noise, 1+noise], drawn from
    the lattice RNG) breaks the artificial periodicity of the copies.
    Shear-displaced states cannot be tiled (the seam offset is incompatible
    with replication), so le_displacement must be zero.
    """
    kx, ky, kz = factors
    if min(kx, ky, kz) < 1:
        raise StorageError(f"replication factors must be >= 1, got {factors}")
    if lattice.le_displacement != 0.0:
        raise StorageError("cannot replicate a shear-displaced state "
                           "(le_displacement != 0)")
    nx, ny, nz = lattice.config.dims
    d = lattice.config.to_dict()
    d["nx"], d["ny"], d["nz"] = nx * kx, ny * ky, nz * kz
    config = SimConfig.from_dict(d)

    def tile(a):
        block = a.reshape(a.shape[:-1] + (nz, ny, nx))
        reps = (1,) * (a.ndim - 1) + (kz, ky, kx)
        return np.ascontiguousarray(np.tile(block, reps)).reshape(
            a.shape[:-1] + (-1,))

    rng = _rng_from_state(lattice.rng.bit_generator.state)
    f = tile(lattice.f)
    if noise > 0.0:
        f *= rng.uniform(1.0 - noise, 1.0 + noise, size=f.shape[-1])
    obstacle = tile(lattice.obstacle)
    dipole = None if lattice.dipole is None else tile(lattice.dipole)
    return Lattice(config, f, obstacle, dipole, rng,
                   lattice.timestep, 0.0)
