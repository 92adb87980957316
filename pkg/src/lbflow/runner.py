"""Run orchestration: build state from a config, loop the stepper, handle
output cadence, checkpoints, and live steering commands.

The command point sits at the top of the loop: every queued mutation is
applied after step t has completed and before any force computation of
step t+1, so a parameter change is atomic with respect to a timestep. An
attached client that sends nothing leaves the trajectory bit-identical to
an unattached run because the only shared state is the command queue.
"""

from __future__ import annotations

import logging
import os
import queue
import time
from pathlib import Path

import numpy as np

from . import geometry, storage
from .dynamics import Stepper
from .model import ConfigError, SimConfig
from .state import Lattice, make_lattice
from .steering import SteerableParam

log = logging.getLogger("lbflow.runner")

REGISTRY_ENV = "LBFLOW_REGISTRY"


def load_geometry_mask(config: SimConfig):
    """Obstacle mask from the configured geometry file, or None.

    Accepts the native container (suffix .geo) or a raw voxel dump whose
    payload length must match the lattice (1 or 2 bytes per site,
    little-endian, x fastest). Grey values at or above the threshold are
    rock."""
    gc = config.geometry
    if gc is None or not gc.path:
        return None
    path = Path(gc.path)
    dims = config.dims
    try:
        if path.suffix == ".geo":
            grey, gdims, meta = storage.read_geometry(path)
            if gdims != dims:
                raise ConfigError(
                    f"geometry {path} is {gdims}, lattice is {dims}")
            mask = geometry.binarise(grey, gc.threshold, invert=gc.invert)
        else:
            raw = path.read_bytes()
            n = dims[0] * dims[1] * dims[2]
            width = len(raw) // n if n else 0
            mask, _ = geometry.ingest_voxels(
                raw, dims, gc.threshold, sample_width=width or 1,
                invert=gc.invert)
    except OSError as e:
        raise storage.StorageError(f"cannot read geometry {path}: {e}") from e
    return mask


def build_lattice(config: SimConfig) -> Lattice:
    """Initial state for a configured run: geometry ingest, pore-scale
    resolution warning, percolation check along any forced axis."""
    mask = load_geometry_mask(config)
    if mask is not None:
        mask3 = mask.reshape(config.nz, config.ny, config.nx)
        report = geometry.resolution_check(mask3)
        log.info("geometry: porosity %.3f, narrowest pore %d sites",
                 geometry.porosity(mask), report["min_pore_width"])
        if config.forcing.g_accn != 0.0:
            geometry.check_flow_geometry(mask, config.dims,
                                         config.forcing.axis)
        if config.boundaries.x == "recycling":
            geometry.check_flow_geometry(mask, config.dims, 0)
    return make_lattice(config, mask)


def resolve_field(lattice: Lattice, name: str) -> np.ndarray:
    """Flat f64 copy of a named observable. Grammar: phi | rho |
    rho:<component> | ux | uy | uz."""
    cfg = lattice.config
    if name == "phi":
        return lattice.order_parameter().copy()
    if name == "rho":
        return lattice.mixture_density().copy()
    if name.startswith("rho:"):
        comp = name[4:]
        names = cfg.component_names()
        if comp not in names:
            raise ConfigError(f"no component {comp!r} for field {name!r}")
        return lattice.density(names.index(comp)).copy()
    if name in ("ux", "uy", "uz"):
        return lattice.mixture_velocity()["xyz".index(name[1])].copy()
    raise ConfigError(f"unknown output field {name!r}")


class Runner:
    """One simulation from initial (or restored) state to completion."""

    def __init__(self, config: SimConfig, lattice: Lattice | None = None,
                 quiet: bool = False):
        self.config = config
        self.lattice = lattice if lattice is not None else build_lattice(config)
        self.stepper = Stepper(config)
        self.quiet = quiet
        self.commands = queue.Queue()
        self.params = self._build_params()
        self.paused = False
        self.stop_requested = False
        self.service = None
        self._registry = None
        self._t_wall = time.perf_counter()
        self._t_step0 = self.lattice.timestep

    # -- steerable parameter table -------------------------------------------

    def _build_params(self) -> dict:
        cfg = self.config
        params = [
            SteerableParam("output_period", "int", 0, 1 << 31,
                           lambda: cfg.output.period,
                           lambda v: setattr(cfg.output, "period", v)),
            SteerableParam("max_steps", "int", 0, 1 << 62,
                           lambda: cfg.max_steps,
                           lambda v: setattr(cfg, "max_steps", v)),
            SteerableParam("g_accn", "real", -1.0, 1.0,
                           lambda: cfg.forcing.g_accn,
                           lambda v: setattr(cfg.forcing, "g_accn", v)),
            SteerableParam("shear_u", "real", -0.2, 0.2,
                           lambda: cfg.boundaries.shear_u,
                           lambda v: setattr(cfg.boundaries, "shear_u", v)),
        ]
        names = cfg.component_names()
        for i, a in enumerate(names):
            for b in names[i:]:
                def getter(a=a, b=b):
                    return cfg.couplings.g(a, b)

                def setter(v, a=a, b=b):
                    cfg.couplings.set_g(a, b, v)
                key = "g:{}:{}".format(*sorted((a, b)))
                params.append(SteerableParam(key, "real",
                                             -1.0, 1.0, getter, setter))
        amph = cfg.amphiphile_index()
        if amph is not None:
            spec = cfg.components[amph]
            params.append(SteerableParam(
                "beta", "real", 0.0, 100.0,
                lambda: spec.beta,
                lambda v: setattr(spec, "beta", v)))
        return {p.name: p for p in params}

    # -- live status (read by steering sessions from their own thread) --------

    def state_view(self) -> dict:
        cfg = self.config
        lat = self.lattice
        fields = ["phi", "rho"] + [f"rho:{n}" for n in cfg.component_names()]
        fields += ["ux", "uy", "uz"]
        return {
            "run_id": cfg.output.run_id,
            "timestep": lat.timestep,
            "max_steps": cfg.max_steps,
            "dims": list(cfg.dims),
            "paused": self.paused,
            "fields": fields,
            "params": [p.describe() for p in self.params.values()],
        }

    # -- steering / registry wiring --------------------------------------------

    def attach_steering(self):
        from .steering import SteeringService
        sc = self.config.steering
        self.service = SteeringService(
            sc, self.state_view, self.commands, self.params,
            console_dir=sc.console_dir or None).start()
        log.info("steering on %s:%d", sc.host, self.service.tcp_port)
        addr = sc.registry or os.environ.get(REGISTRY_ENV, "")
        if addr:
            from .registry import RegistryClient
            self._registry = RegistryClient(
                addr, self.config.output.run_id,
                {"host": sc.host, "port": self.service.tcp_port,
                 "http_port": self.service.http_port,
                 "dims": list(self.config.dims),
                 "meta": {"components": self.config.component_names()}},
                heartbeat=sc.heartbeat).start()
        return self

    def detach_steering(self):
        if self._registry is not None:
            self._registry.stop()
            self._registry = None
        if self.service is not None:
            self.service.stop()
            self.service = None

    # -- command handling ------------------------------------------------------

    def _drain_commands(self):
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            self._apply(cmd)

    def _apply(self, cmd):
        svc = self.service
        t_next = self.lattice.timestep + 1
        if cmd.verb == "set":
            name, value = cmd.args["name"], cmd.args["value"]
            self.params[name].set(value)
            log.info("t=%d set %s = %r", self.lattice.timestep, name, value)
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "set",
                                        "name": name, "value": value,
                                        "timestep": t_next})
        elif cmd.verb == "pause":
            self.paused = True
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "pause",
                                        "timestep": self.lattice.timestep})
                svc.broadcast(self._status())
        elif cmd.verb == "resume":
            self.paused = False
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "resume",
                                        "timestep": self.lattice.timestep})
                svc.broadcast(self._status())
        elif cmd.verb == "stop":
            self.stop_requested = True
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "stop",
                                        "timestep": self.lattice.timestep})
        elif cmd.verb == "checkpoint":
            path = self.write_checkpoint()
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "checkpoint",
                                        "path": str(path) if path else None,
                                        "timestep": self.lattice.timestep})
        elif cmd.verb == "emit":
            self.emit_volumes()
            self.publish_frames()
            if svc:
                svc.reply(cmd.session, {"type": "ack", "cmd": "emit",
                                        "timestep": self.lattice.timestep})

    def _status(self) -> dict:
        return {"type": "status", "timestep": self.lattice.timestep,
                "paused": self.paused, "max_steps": self.config.max_steps}

    # -- output ---------------------------------------------------------------

    def emit_volumes(self):
        out = self.config.output
        if not out.fields:
            return
        t = self.lattice.timestep
        for name in out.fields:
            field = resolve_field(self.lattice, name)
            path = storage.volume_path(out.directory, out.run_id, name, t)
            storage.write_volume(path, field, self.config.dims,
                                 run_id=out.run_id, name=name,
                                 timestep=t, dtype=out.dtype)
        if not self.quiet:
            rate = self._rate()
            log.info("t=%d wrote %d volume(s)%s", t, len(out.fields),
                     f" ({rate:.0f} site-updates/s)" if rate else "")

    def publish_frames(self):
        if self.service is None:
            return
        wanted = self.service.subscribed_fields()
        if not wanted:
            return
        fields = {}
        for name in wanted:
            try:
                fields[name] = resolve_field(self.lattice, name)
            except ConfigError:
                continue
        self.service.publish_frames(self.lattice.timestep, fields,
                                    self.config.dims)

    def write_checkpoint(self):
        """Returns the path, or None when the write failed (the run pauses
        rather than dying so the operator can free disk and retry)."""
        t = self.lattice.timestep
        out = self.config.output
        path = storage.checkpoint_path(out.directory, out.run_id, t)
        try:
            storage.write_checkpoint(path, self.lattice)
        except (OSError, storage.StorageError) as e:
            log.error("checkpoint at t=%d failed (%s); pausing run", t, e)
            self.paused = True
            if self.service:
                self.service.broadcast(
                    {"type": "status", "timestep": t, "paused": True,
                     "error": f"checkpoint failed: {e}"})
            return None
        log.info("checkpoint t=%d -> %s", t, path)
        return path

    def _rate(self) -> float:
        dt = time.perf_counter() - self._t_wall
        steps = self.lattice.timestep - self._t_step0
        if dt <= 0 or steps <= 0:
            return 0.0
        return steps * self.config.n_sites / dt

    # -- main loop --------------------------------------------------------------

    def run(self, extra_steps: int | None = None) -> Lattice:
        """Advance to config.max_steps (or current + extra_steps), serving
        commands at every timestep boundary."""
        cfg = self.config
        if extra_steps is not None:
            cfg.max_steps = self.lattice.timestep + extra_steps
        try:
            while True:
                self._drain_commands()
                if self.stop_requested:
                    self.write_checkpoint()
                    break
                if self.paused:
                    time.sleep(0.05)
                    continue
                if cfg.max_steps and self.lattice.timestep >= cfg.max_steps:
                    break
                self.stepper.step(self.lattice)
                t = self.lattice.timestep
                out = cfg.output
                if out.period and t % out.period == 0:
                    self.emit_volumes()
                self.publish_frames()
                if out.checkpoint_period and t % out.checkpoint_period == 0:
                    self.write_checkpoint()
        finally:
            if self.service:
                self.service.broadcast(
                    {"type": "status", "timestep": self.lattice.timestep,
                     "paused": False, "finished": True})
        return self.lattice


def run_config(config: SimConfig, quiet: bool = False) -> Lattice:
    """Convenience wrapper: build, optionally steer, run to max_steps."""
    runner = Runner(config, quiet=quiet)
    if config.steering.enabled:
        runner.attach_steering()
    try:
        return runner.run()
    finally:
        runner.detach_steering()


def resume_checkpoint(path, max_steps: int | None = None,
                      workers: int | None = None,
                      quiet: bool = False) -> Lattice:
    """Restore a checkpoint and continue; worker count may differ from the
    writing run without changing the trajectory."""
    lattice = storage.read_checkpoint(path)
    cfg = lattice.config
    if max_steps is not None:
        cfg.max_steps = max_steps
    if workers is not None:
        cfg.workers = workers
    runner = Runner(cfg, lattice=lattice, quiet=quiet)
    if cfg.steering.enabled:
        runner.attach_steering()
    try:
        return runner.run()
    finally:
        runner.detach_steering()
