"""Throughput measurement: site updates per second and thread scaling."""

from __future__ import annotations

import time

from .dynamics import Stepper
from .model import ComponentSpec, CouplingMatrix, InitConfig, SimConfig
from .state import make_lattice


def bench_config(size: int, ncomp: int = 1, workers: int = 1) -> SimConfig:
    """Periodic box with ncomp components (1 plain, 2 immiscible,
    3 adds an amphiphile), random initial densities."""
    comps = [ComponentSpec("red", tau=1.0, colour_charge=1.0)]
    entries = {}
    if ncomp >= 2:
        comps.append(ComponentSpec("blue", tau=1.0, colour_charge=-1.0))
        entries[("red", "blue")] = 0.08
    if ncomp >= 3:
        comps.append(ComponentSpec("surf", tau=1.0, amphiphile=True,
                                   d0=1.0, tau_d=1.0, beta=10.0))
        entries[("red", "surf")] = -0.006
        entries[("blue", "surf")] = -0.006
        entries[("surf", "surf")] = -0.0045
    if ncomp > 3:
        raise ValueError("bench supports 1..3 components")
    dens = {c.name: 0.5 for c in comps}
    # uniform init: same arithmetic per site as a structured state, none of
    # the start-up velocity spikes a random near-vacuum field produces
    return SimConfig(nx=size, ny=size, nz=size, components=comps,
                     couplings=CouplingMatrix(entries),
                     init=InitConfig(mode="uniform", densities=dens, seed=7),
                     workers=workers)


def measure_rate(size: int, steps: int, ncomp: int = 1,
                 workers: int = 1, warmup: int = 2) -> float:
    """Site updates per second over `steps` steps, JIT warmup excluded."""
    config = bench_config(size, ncomp, workers)
    lattice = make_lattice(config)
    stepper = Stepper(config)
    stepper.run(lattice, warmup)
    t0 = time.perf_counter()
    stepper.run(lattice, steps)
    dt = time.perf_counter() - t0
    return steps * config.n_sites / dt


def measure_scaling(size: int, steps: int, worker_counts,
                    ncomp: int = 1) -> list[dict]:
    """Rate at each worker count plus parallel efficiency against the
    single-worker rate: eff(w) = rate(w) / (w * rate(1))."""
    rows = []
    base = None
    for w in worker_counts:
        rate = measure_rate(size, steps, ncomp, workers=w)
        if base is None:
            base = rate / w   # normalise in case 1 is not in the list
        rows.append({"workers": w, "rate": rate,
                     "efficiency": rate / (w * base)})
    return rows
