"""Lattice state: distributions, obstacle mask, dipole field, shear bookkeeping.

Arrays are flat over sites, x-fastest (n = x + nx*(y + ny*z)); f is indexed
[component, link, site]. Obstacle sites carry f = 0 at all times. The RNG is
counter-based (Philox) and its state travels with checkpoints.
"""

from __future__ import annotations

import numpy as np

from . import stencil
from .model import ConfigError, SimConfig

# Below this density the forcing velocity shift tau*F/rho is suppressed and
# velocity moments report zero.
RHO_FLOOR = 1e-10


class Lattice:
    def __init__(self, config: SimConfig, f, obstacle, dipole, rng,
                 timestep: int = 0, le_displacement: float = 0.0):
        self.config = config
        self.nx, self.ny, self.nz = config.dims
        self.n = config.n_sites
        self.f = f
        self.obstacle = obstacle
        self.dipole = dipole
        self.rng = rng
        self.timestep = timestep
        self.le_displacement = le_displacement
        self.amph = config.amphiphile_index()

    # -- indexing ---------------------------------------------------------

    def index(self, x: int, y: int, z: int) -> int:
        return x + self.nx * (y + self.ny * z)

    def as_3d(self, a: np.ndarray) -> np.ndarray:
        """View a flat site array as [z, y, x]."""
        return a.reshape(self.nz, self.ny, self.nx)

    # -- moments ----------------------------------------------------------

    def density(self, c: int) -> np.ndarray:
        return self.f[c].sum(axis=0)

    def momentum(self, c: int) -> np.ndarray:
        """(3, N) momentum density of component c."""
        return stencil.C.T.astype(np.float64) @ self.f[c]

    def velocity(self, c: int) -> np.ndarray:
        rho = self.density(c)
        mom = self.momentum(c)
        v = np.zeros_like(mom)
        ok = rho > RHO_FLOOR
        v[:, ok] = mom[:, ok] / rho[ok]
        return v

    def mixture_density(self) -> np.ndarray:
        return self.f.sum(axis=(0, 1))

    def mixture_velocity(self) -> np.ndarray:
        rho = self.mixture_density()
        mom = sum(self.momentum(c) for c in range(len(self.config.components)))
        v = np.zeros_like(mom)
        ok = rho > RHO_FLOOR
        v[:, ok] = mom[:, ok] / rho[ok]
        return v

    def order_parameter(self) -> np.ndarray:
        """Colour order parameter phi = sum_c q_c rho_c."""
        phi = np.zeros(self.n)
        for i, spec in enumerate(self.config.components):
            if spec.colour_charge != 0.0:
                phi += spec.colour_charge * self.density(i)
        return phi

    def total_mass(self, c: int) -> float:
        return float(np.sum(self.f[c]))

    def total_momentum(self) -> np.ndarray:
        return np.sum([np.sum(self.momentum(c), axis=1)
                       for c in range(len(self.config.components))], axis=0)

    # -- misc ---------------------------------------------------------------

    def pore_fraction(self) -> float:
        return 1.0 - float(np.count_nonzero(self.obstacle)) / self.n

    def copy(self) -> "Lattice":
        lat = Lattice(self.config, self.f.copy(), self.obstacle.copy(),
                      None if self.dipole is None else self.dipole.copy(),
                      np.random.Generator(np.random.Philox(0)),
                      self.timestep, self.le_displacement)
        lat.rng.bit_generator.state = self.rng.bit_generator.state
        return lat


def make_lattice(config: SimConfig, obstacle: np.ndarray | None = None) -> Lattice:
    """Build the initial state: equilibrium distributions at the configured
    densities, zero dipole, f = 0 on obstacle sites.

    Random densities are drawn for every site in component order before the
    obstacle mask is applied, so the same seed gives the same fluid state for
    any mask."""
    config.validate()
    n = config.n_sites
    ncomp = len(config.components)

    if obstacle is None:
        obstacle = np.zeros(n, dtype=np.uint8)
    else:
        obstacle = np.ascontiguousarray(obstacle, dtype=np.uint8)
        if obstacle.size != n:
            raise ConfigError(
                f"obstacle mask has {obstacle.size} sites, lattice has {n}")
        obstacle = obstacle.reshape(n)

    rng = np.random.Generator(np.random.Philox(config.init.seed))
    f = np.zeros((ncomp, stencil.Q, n))
    v = np.broadcast_to(np.asarray(config.init.velocity, dtype=np.float64), (n, 3))
    for c, spec in enumerate(config.components):
        rho0 = config.init.densities.get(spec.name, 0.0)
        if config.init.mode == "random":
            rho = rng.uniform(0.0, rho0, n)
        else:
            rho = np.full(n, rho0)
        f[c] = stencil.equilibrium(rho, v).T

    fluid = obstacle == 0
    f[:, :, ~fluid] = 0.0

    dipole = np.zeros((3, n)) if config.amphiphile_index() is not None else None
    return Lattice(config, f, obstacle, dipole, rng)
