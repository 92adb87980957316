"""Configuration dataclasses for a simulation run.

Everything here is plain data: serializable to/from dicts so checkpoints can
embed the exact configuration (including values changed live through the
steering service) and restores reproduce the run bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration."""


@dataclass
class ComponentSpec:
    """One fluid component.

    colour_charge enters the colour field and the order parameter
    (immiscible pairs use +1/-1, an amphiphile uses 0). Amphiphile
    components additionally carry a dipole field with saturation length d0,
    relaxation time tau_d and alignment strength beta.
    """

    name: str
    tau: float = 1.0
    colour_charge: float = 0.0
    amphiphile: bool = False
    d0: float = 1.0
    tau_d: float = 1.0
    beta: float = 1.0

    def validate(self):
        if not self.name or not self.name.replace("_", "").isalnum():
            raise ConfigError(f"bad component name {self.name!r}")
        if self.tau <= 0.5:
            raise ConfigError(f"component {self.name}: tau must exceed 0.5")
        if self.amphiphile:
            if self.d0 <= 0:
                raise ConfigError(f"component {self.name}: d0 must be positive")
            if self.tau_d <= 0.5:
                raise ConfigError(f"component {self.name}: tau_d must exceed 0.5")


class CouplingMatrix:
    """Symmetric pair couplings g[a, b] keyed by component name.

    Missing pairs default to 0. Values are mutable at runtime (couplings are
    steerable); the matrix is consulted every step.
    """

    def __init__(self, entries: dict | None = None):
        self._g: dict[tuple[str, str], float] = {}
        if entries:
            for (a, b), v in entries.items():
                self.set_g(a, b, v)

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def g(self, a: str, b: str) -> float:
        return self._g.get(self._key(a, b), 0.0)

    def set_g(self, a: str, b: str, value: float):
        self._g[self._key(a, b)] = float(value)

    def items(self):
        return sorted(self._g.items())

    def to_dict(self) -> dict:
        return {f"{a}:{b}": v for (a, b), v in self.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingMatrix":
        m = cls()
        for k, v in d.items():
            a, b = k.split(":")
            m.set_g(a, b, v)
        return m

    def __eq__(self, other):
        return isinstance(other, CouplingMatrix) and self._g == other._g


@dataclass
class BoundaryConfig:
    """Boundary rule per axis. y is always periodic.

    x: "periodic" or "recycling" (mass crossing the x seam is reassigned to
       the invader component).
    z: "periodic" or "lees_edwards" (the z-extreme planes slide along x with
       speeds +U and -U, so the relative image velocity is 2U).
    """

    x: str = "periodic"
    z: str = "periodic"
    shear_u: float = 0.0
    shear_mode: str = "constant"  # constant | oscillatory
    shear_period: float = 0.0
    invader: str | None = None

    def validate(self, component_names: list[str], amphiphile: str | None):
        if self.x not in ("periodic", "recycling"):
            raise ConfigError(f"boundaries.x: unknown mode {self.x!r}")
        if self.z not in ("periodic", "lees_edwards"):
            raise ConfigError(f"boundaries.z: unknown mode {self.z!r}")
        if self.x == "recycling":
            if self.invader is None:
                raise ConfigError("recycling boundary requires an invader component")
            if self.invader not in component_names:
                raise ConfigError(f"invader {self.invader!r} is not a component")
            if self.invader == amphiphile:
                raise ConfigError("invader must not be the amphiphile (recycled mass carries no dipole)")
        if self.x == "recycling" and self.z == "lees_edwards":
            raise ConfigError("recycling and lees_edwards cannot be combined")
        if self.shear_mode not in ("constant", "oscillatory"):
            raise ConfigError(f"unknown shear_mode {self.shear_mode!r}")
        if self.shear_mode == "oscillatory" and self.shear_period <= 0:
            raise ConfigError("oscillatory shear requires shear_period > 0")


@dataclass
class ForcingConfig:
    """Uniform body force: acceleration g_accn along an axis, force density
    g_accn * rho per component, applied at every non-obstacle site."""

    g_accn: float = 0.0
    axis: int = 0

    def validate(self):
        if self.axis not in (0, 1, 2):
            raise ConfigError("forcing.axis must be 0, 1 or 2")


@dataclass
class GeometryConfig:
    """Obstacle mask source: a greyscale voxel file, binarised at load time.

    Voxels with value >= threshold become rock; invert flips that. A mask
    built programmatically is attached to the lattice directly and this
    block stays unset.
    """

    path: str = ""
    threshold: float = 128.0
    invert: bool = False


@dataclass
class InitConfig:
    """Initial state: per-component density plus zero dipole.

    mode "uniform" fills each component at its given density; "random" draws
    each site density uniformly from [0, density) with the counter-based RNG
    seeded below, so runs are reproducible regardless of worker count.
    """

    mode: str = "uniform"
    densities: dict[str, float] = field(default_factory=dict)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def validate(self, component_names: list[str]):
        if self.mode not in ("uniform", "random"):
            raise ConfigError(f"unknown init mode {self.mode!r}")
        for name in self.densities:
            if name not in component_names:
                raise ConfigError(f"init density for unknown component {name!r}")
        for name, rho in self.densities.items():
            if rho < 0:
                raise ConfigError(f"init density for {name} must be >= 0")


@dataclass
class OutputConfig:
    run_id: str = "run"
    directory: str = "out"
    period: int = 0  # steps between volume dumps; 0 = never
    fields: tuple = ("phi",)
    dtype: str = "f64"  # f64 | f32 (f32 halves volume files)
    checkpoint_period: int = 0  # steps between checkpoints; 0 = never

    def validate(self):
        if self.period < 0 or self.checkpoint_period < 0:
            raise ConfigError("output periods must be >= 0")
        if self.dtype not in ("f64", "f32"):
            raise ConfigError(f"output dtype must be f64 or f32, got {self.dtype!r}")


@dataclass
class SteeringConfig:
    enabled: bool = False
    host: str = "127.0.0.1"
    port: int = 0  # 0 = ephemeral
    http_port: int = 0  # browser console + websocket bridge; 0 = disabled
    console_dir: str = ""  # static assets for the browser console
    registry: str = ""  # "host:port" of a registry to announce to
    heartbeat: float = 5.0


@dataclass
class SimConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 16
    components: list = field(default_factory=list)
    couplings: CouplingMatrix = field(default_factory=CouplingMatrix)
    boundaries: BoundaryConfig = field(default_factory=BoundaryConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    geometry: GeometryConfig | None = None
    init: InitConfig = field(default_factory=InitConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    steering: SteeringConfig = field(default_factory=SteeringConfig)
    psi_form: str = "exp"  # exp: psi = 1 - e^-rho | linear: psi = rho
    max_steps: int = 0
    workers: int = 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny * self.nz

    def component_names(self) -> list[str]:
        return [c.name for c in self.components]

    def component(self, name: str) -> ComponentSpec:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def amphiphile_index(self) -> int | None:
        for i, c in enumerate(self.components):
            if c.amphiphile:
                return i
        return None

    def validate(self):
        for d, label in ((self.nx, "nx"), (self.ny, "ny"), (self.nz, "nz")):
            if d < 2:
                raise ConfigError(f"{label} must be >= 2")
        if not self.components:
            raise ConfigError("at least one component is required")
        names = self.component_names()
        if len(set(names)) != len(names):
            raise ConfigError("component names must be unique")
        amph = [c.name for c in self.components if c.amphiphile]
        if len(amph) > 1:
            raise ConfigError("at most one amphiphile component is supported")
        for c in self.components:
            c.validate()
        for (a, b), _ in self.couplings.items():
            if a not in names or b not in names:
                raise ConfigError(f"coupling references unknown component {a!r}:{b!r}")
        self.boundaries.validate(names, amph[0] if amph else None)
        self.forcing.validate()
        self.init.validate(names)
        self.output.validate()
        if self.psi_form not in ("exp", "linear"):
            raise ConfigError(f"unknown psi_form {self.psi_form!r}")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["couplings"] = self.couplings.to_dict()
        d["components"] = [asdict(c) for c in self.components]
        d["geometry"] = asdict(self.geometry) if self.geometry else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["components"] = [ComponentSpec(**c) for c in d.get("components", [])]
        d["couplings"] = CouplingMatrix.from_dict(d.get("couplings", {}))
        d["boundaries"] = BoundaryConfig(**d.get("boundaries", {}))
        d["forcing"] = ForcingConfig(**d.get("forcing", {}))
        geo = d.get("geometry")
        d["geometry"] = GeometryConfig(**geo) if geo else None
        init = dict(d.get("init", {}))
        if "velocity" in init:
            init["velocity"] = tuple(init["velocity"])
        d["init"] = InitConfig(**init)
        out = dict(d.get("output", {}))
        if "fields" in out:
            out["fields"] = tuple(out["fields"])
        d["output"] = OutputConfig(**out)
        d["steering"] = SteeringConfig(**d.get("steering", {}))
        return cls(**d)
