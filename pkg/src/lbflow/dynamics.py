"""One lattice-Boltzmann timestep.

Update order: moments -> effective densities psi -> colour field and dipole
relaxation -> forces -> BGK collision around the relaxation-weighted common
velocity -> streaming (bulk periodic copy plus sparse fixups for the seam
rules and bounce-back, with the dipole transport gather alongside) -> dipole
renormalisation.

Forcing enters only as the velocity shift v = u' + tau F / rho inside the
collision equilibrium; u' = (sum_c rho_c u_c / tau_c) / (sum_c rho_c / tau_c)
over all components.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import numba

from . import kernels, stencil
from .model import ConfigError, SimConfig
from .state import Lattice, RHO_FLOOR

# |v| above which the low-Mach expansion is no longer trustworthy.
V_WARN = 0.1

_CXI = stencil.CX
_CYI = stencil.CY
_CZI = stencil.CZ
_CXF = stencil.CX.astype(np.float64)
_CYF = stencil.CY.astype(np.float64)
_CZF = stencil.CZ.astype(np.float64)
_W = stencil.W
_OPP = stencil.OPP
_THETA = stencil.THETA
_INV_C2 = stencil.INV_C2

_DUMMY_V = np.zeros((3, 1))
_DUMMY_S = np.zeros(1)
_DUMMY_P = np.zeros((stencil.Q, 3, 1))
_NO_SITES = np.zeros(0, dtype=np.int64)


def compute_psi(rho: np.ndarray, form: str) -> np.ndarray:
    """Effective density entering the interaction forces."""
    if form == "exp":
        return -np.expm1(-rho)
    if form == "linear":
        return rho.copy()
    raise ValueError(f"unknown psi_form {form!r}")


def dipole_relax(dipole, h, beta, d0, tau_d, out=None):
    """BGK relaxation of the dipole field toward d_eq = beta d0 h / 3,
    then clamping to |d| <= d0."""
    deq = (beta * d0 / 3.0) * h
    dt = np.subtract(dipole, (dipole - deq) / tau_d, out=out)
    norm = np.sqrt(np.sum(dt * dt, axis=0))
    over = norm > d0
    if np.any(over):
        dt[:, over] *= d0 / norm[over]
    return dt


class Stepper:
    """Owns the scratch buffers and drives lattice updates in place.

    The worker count selects the thread pool size for the site loops; any
    count yields bit-identical results (per-site independent writes only).

    Geometry-dependent streaming fixups (bounce-back pair list, rock site
    list) are cached against the lattice's obstacle array by identity; the
    mask must not be mutated in place mid-run.
    """

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        n = config.n_sites
        ncomp = len(config.components)
        nxy = config.nx * config.ny
        self.ncomp = ncomp
        self.amph = config.amphiphile_index()
        self._rho = np.zeros((ncomp, n))
        self._mom = np.zeros((ncomp, 3, n))
        self._uprime = np.zeros((3, n))
        self._force = np.zeros((ncomp, 3, n))
        # psi per component plus one row for the colour density sum_c q_c rho_c
        self._scal = np.zeros((ncomp + 1, n))
        self._svec = np.zeros((ncomp + 1, 3, n))
        self._fbuf = np.zeros((ncomp, stencil.Q, n))
        if self.amph is not None:
            self._p = np.zeros((3, n))
            self._htheta = np.zeros((3, n))
            self._h = np.zeros((3, n))
            self._dtilde = np.zeros((3, n))
            self._dipnum = np.zeros((3, n))
            self._gbar = np.zeros(n)
            # amph_v / amph_w stay zero unless their couplings are active;
            # assemble_forces always reads them for the amphiphile row.
            self._amph_a = np.zeros((3, n))
            self._amph_v = np.zeros((3, n))
            self._amph_w = np.zeros((3, n))
            self._ptop = np.zeros((stencil.Q, 3, nxy))
            self._pbot = np.zeros((stencil.Q, 3, nxy))
        else:
            self._htheta = _DUMMY_V
            self._dtilde = _DUMMY_V
            self._dipnum = _DUMMY_V
            self._amph_a = _DUMMY_V
            self._amph_v = _DUMMY_V
            self._amph_w = _DUMMY_V
            self._ptop = _DUMMY_P
            self._pbot = _DUMMY_P
        self._ftop = np.zeros((ncomp, stencil.Q, nxy))
        self._fbot = np.zeros((ncomp, stencil.Q, nxy))
        self._tau = np.array([c.tau for c in config.components])
        self._itau = 1.0 / self._tau
        self._noff = (_CXI + config.nx * (_CYI + config.ny * _CZI)).astype(np.int64)
        self._ordinary = [c for c in range(ncomp) if c != self.amph]
        self._geom_src = None
        self._bb_tgt = _NO_SITES
        self._bb_lnk = _NO_SITES
        self._obst_sites = _NO_SITES
        self._warned = False
        self._had_cs = False
        self.use_reference_advect = False
        self.set_workers(config.workers)

    def set_workers(self, workers: int):
        limit = numba.config.NUMBA_NUM_THREADS
        if workers > limit:
            warnings.warn(f"workers clamped to {limit} (thread pool size)")
            workers = limit
        self.config.workers = workers
        numba.set_num_threads(workers)

    # -- shear bookkeeping ---------------------------------------------------

    def shear_velocity(self, t: int) -> float:
        """Relative velocity of the periodic images across the z seam
        (the extreme planes move at +U and -U, so this is 2U)."""
        b = self.config.boundaries
        if b.z != "lees_edwards":
            return 0.0
        u = b.shear_u
        if b.shear_mode == "oscillatory":
            u = u * math.sin(2.0 * math.pi * t / b.shear_period)
        return 2.0 * u

    def _le_state(self, lattice: Lattice):
        """(active, displacement mod nx, relative velocity) for this step."""
        if self.config.boundaries.z != "lees_edwards":
            return False, 0.0, 0.0
        urel = self.shear_velocity(lattice.timestep)
        disp = lattice.le_displacement % self.config.nx
        active = urel != 0.0 or disp != 0.0
        return active, disp, urel

    # -- geometry-derived streaming fixups ------------------------------------

    def _ensure_geometry(self, lattice: Lattice):
        if self._geom_src is lattice.obstacle:
            return
        cfg = self.config
        obst3 = lattice.obstacle.reshape(cfg.nz, cfg.ny, cfg.nx)
        if cfg.boundaries.z == "lees_edwards" and (
                obst3[0].any() or obst3[-1].any()):
            raise ConfigError(
                "obstacles on the z-extreme planes are not supported with "
                "a sliding z boundary")
        if obst3.any():
            fluid = ~obst3
            tgts = []
            lnks = []
            for i in range(1, stencil.Q):
                src_rock = np.roll(
                    obst3, (int(_CZI[i]), int(_CYI[i]), int(_CXI[i])),
                    axis=(0, 1, 2))
                idx = np.flatnonzero(fluid & src_rock)
                if idx.size:
                    tgts.append(idx.astype(np.int64))
                    lnks.append(np.full(idx.size, i, dtype=np.int64))
            if tgts:
                self._bb_tgt = np.concatenate(tgts)
                self._bb_lnk = np.concatenate(lnks)
            else:
                self._bb_tgt = _NO_SITES
                self._bb_lnk = _NO_SITES
            self._obst_sites = np.flatnonzero(lattice.obstacle).astype(np.int64)
        else:
            self._bb_tgt = _NO_SITES
            self._bb_lnk = _NO_SITES
            self._obst_sites = _NO_SITES
        self._geom_src = lattice.obstacle

    # -- step stages (also exposed for the unit tests) -----------------------

    def fields(self, lattice: Lattice):
        """Moments and effective densities: rho (C,N), mom (C,3,N), psi (C,N)."""
        psi = self._scal[:self.ncomp]
        kernels.moments_psi(lattice.f, _CXF, _CYF, _CZF,
                            self.config.psi_form == "linear",
                            self._rho, self._mom, psi)
        return self._rho, self._mom, psi

    def _sc_rows(self) -> list[int]:
        """psi rows whose neighbour c-sums the ordinary-pair forces need."""
        names = self.config.component_names()
        rows = set()
        for a in self._ordinary:
            for b in self._ordinary:
                if self.config.couplings.g(names[a], names[b]) != 0.0:
                    rows.add(b)
        return sorted(rows)

    def _neighbour_pass(self, lattice, rho, rows, want_phi, le, disp):
        """One fused stencil sweep: c-weighted sums of the selected scalar
        rows into _svec, plus the colour field ingredients when want_phi."""
        cfg = self.config
        rows = list(rows)
        if want_phi:
            phi = self._scal[self.ncomp]
            phi[:] = 0.0
            for c, spec in enumerate(cfg.components):
                if spec.colour_charge != 0.0:
                    phi += spec.colour_charge * rho[c]
            rows = rows + [self.ncomp]
            np.multiply(rho[self.amph], lattice.dipole, out=self._p)
            p = self._p
        else:
            p = _DUMMY_V
        if not rows:
            return
        if len(rows) <= 3:
            pad_s = self._scal[rows[0]]
            pad_o = self._svec[rows[0]]
            s = [self._scal[r] for r in rows]
            o = [self._svec[r] for r in rows]
            while len(s) < 3:
                s.append(pad_s)
                o.append(pad_o)
            kernels.interaction_pass(
                s[0], s[1], s[2], len(rows), p, want_phi,
                cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, self._noff,
                _CXF, _CYF, _CZF, _THETA, le, disp,
                o[0], o[1], o[2], self._htheta)
        else:
            for r in rows:
                kernels.neighbour_vector_sum(
                    self._scal[r], cfg.nx, cfg.ny, cfg.nz,
                    _CXI, _CYI, _CZI, _CXF, _CYF, _CZF, le, disp,
                    self._svec[r])
            if want_phi:
                kernels.theta_neighbour_vec(
                    p, cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, _THETA,
                    le, disp, self._htheta)

    def colour_field(self, lattice: Lattice, rho):
        """h = h_colour + h_dipole at each site (amphiphile runs only)."""
        le, disp, _ = self._le_state(lattice)
        self._neighbour_pass(lattice, rho, [], True, le, disp)
        np.add(self._htheta, self._p, out=self._h)
        self._h += self._svec[self.ncomp]
        return self._h

    def forces(self, lattice: Lattice, rho, psi, dtilde):
        """Interaction + body forces, (C, 3, N). Runs its own stencil pass;
        step() shares one pass for this and the colour field."""
        le, disp, _ = self._le_state(lattice)
        self._neighbour_pass(lattice, rho, self._sc_rows(), False, le, disp)
        return self._assemble_forces(lattice, rho, psi, dtilde, le, disp)

    def _assemble_forces(self, lattice, rho, psi, dtilde, le, disp):
        cfg = self.config
        names = cfg.component_names()
        ncomp = self.ncomp
        s = self.amph

        gmat = np.zeros((ncomp, ncomp))
        for a in self._ordinary:
            for b in self._ordinary:
                gmat[a, b] = cfg.couplings.g(names[a], names[b])

        gvec = np.zeros(ncomp)
        gss = 0.0
        if s is not None:
            psis = psi[s]
            gbar = self._gbar
            gbar[:] = 0.0
            pairs = False
            for a in self._ordinary:
                g = cfg.couplings.g(names[a], names[s])
                gvec[a] = g
                if g != 0.0:
                    pairs = True
                    gbar += g * psi[a]
            gss = cfg.couplings.g(names[s], names[s])
            if pairs or gss != 0.0:
                kernels.amphiphile_pass(
                    dtilde, psis, gbar, pairs, gss != 0.0,
                    cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, self._noff,
                    _CXF, _CYF, _CZF, _THETA, _INV_C2, le, disp,
                    self._amph_a, self._amph_v, self._amph_w)
            if not pairs and self._had_cs:
                # colour couplings steered to zero: amph_v enters F[s]
                # unscaled, so the stale pass output must be cleared
                self._amph_v[:] = 0.0
            self._had_cs = pairs

        kernels.assemble_forces(
            self._scal, rho, self._svec, gmat,
            -1 if s is None else s, gvec, gss,
            self._amph_a, self._amph_v, self._amph_w,
            4.0 * stencil.D, cfg.forcing.g_accn, cfg.forcing.axis,
            self._force)
        return self._force

    def _advect(self, lattice: Lattice, le, disp, urel):
        cfg = self.config
        amph = self.amph
        recyc = cfg.boundaries.x == "recycling"
        invader = (cfg.component_names().index(cfg.boundaries.invader)
                   if recyc else -1)
        self._ensure_geometry(lattice)
        if le:
            kernels.le_transform_planes(
                lattice.f, cfg.nx, cfg.ny, cfg.nz, _W, _CXF, _CYF, _CZF,
                urel, RHO_FLOOR, -1 if amph is None else amph,
                self._dtilde, self._ftop, self._fbot, self._ptop, self._pbot)
        if self.use_reference_advect:
            kernels.advect_sites(
                lattice.f, self._fbuf, lattice.obstacle,
                cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, _OPP,
                le, disp, self._ftop, self._fbot,
                recyc, invader, -1 if amph is None else amph,
                self._dtilde, self._ptop, self._pbot, self._dipnum)
        else:
            kernels.advect_bulk(lattice.f, self._fbuf,
                                cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI)
            if le:
                kernels.fix_lees_edwards(
                    self._fbuf, self._ftop, self._fbot,
                    cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, disp)
            if recyc:
                kernels.fix_recycling(
                    lattice.f, self._fbuf, lattice.obstacle,
                    cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, invader)
            if self._bb_tgt.size:
                kernels.fix_bounce_back(lattice.f, self._fbuf,
                                        self._bb_tgt, self._bb_lnk, _OPP)
            if self._obst_sites.size:
                kernels.fix_obstacle_targets(self._fbuf, self._obst_sites)
            if amph is not None:
                kernels.dipole_advect_pass(
                    lattice.f[amph], self._dtilde, lattice.obstacle,
                    cfg.nx, cfg.ny, cfg.nz, _CXI, _CYI, _CZI, _OPP,
                    self._noff, le, disp, self._ptop, self._pbot,
                    recyc, self._dipnum)
        lattice.f, self._fbuf = self._fbuf, lattice.f

    # -- full step -------------------------------------------------------------

    def step(self, lattice: Lattice):
        cfg = self.config
        rho, mom, psi = self.fields(lattice)
        le, disp, urel = self._le_state(lattice)

        amph = self.amph
        self._neighbour_pass(lattice, rho, self._sc_rows(), amph is not None,
                             le, disp)
        if amph is not None:
            spec = cfg.components[amph]
            np.add(self._htheta, self._p, out=self._h)
            self._h += self._svec[self.ncomp]
            dipole_relax(lattice.dipole, self._h, spec.beta, spec.d0,
                         spec.tau_d, out=self._dtilde)

        self._assemble_forces(lattice, rho, psi, self._dtilde, le, disp)

        kernels.common_velocity(rho, mom, self._itau, RHO_FLOOR, self._uprime)
        maxv2 = kernels.collide(lattice.f, rho, self._uprime, self._force,
                                self._tau, lattice.obstacle,
                                _W, _CXF, _CYF, _CZF, RHO_FLOOR)
        if maxv2 > V_WARN * V_WARN and not self._warned:
            self._warned = True
            warnings.warn(
                f"advection speed {math.sqrt(maxv2):.3f} exceeds {V_WARN} "
                f"at step {lattice.timestep}; results may be unstable",
                RuntimeWarning, stacklevel=2)

        self._advect(lattice, le, disp, urel)

        if amph is not None:
            kernels.dipole_renorm(lattice.f[amph], self._dipnum,
                                  lattice.dipole)

        if cfg.boundaries.z == "lees_edwards":
            lattice.le_displacement += urel
        lattice.timestep += 1

    def run(self, lattice: Lattice, steps: int):
        for _ in range(steps):
            self.step(lattice)
