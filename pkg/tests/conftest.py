import numpy as np

from lbflow.model import (SimConfig, ComponentSpec, CouplingMatrix,
                          BoundaryConfig, ForcingConfig, InitConfig)

# keep the brute-force oracles affordable
SMALL = (4, 3, 5)


def binary_config(dims=SMALL, seed=11, g=0.08, **kw):
    comps = [ComponentSpec("red", tau=1.0, colour_charge=1.0),
             ComponentSpec("blue", tau=0.8, colour_charge=-1.0)]
    cm = CouplingMatrix()
    cm.set_g("red", "blue", g)
    cfg = SimConfig(nx=dims[0], ny=dims[1], nz=dims[2],
                    components=comps, couplings=cm,
                    init=InitConfig(mode="random",
                                    densities={"red": 0.5, "blue": 0.45},
                                    seed=seed), **kw)
    return cfg


def ternary_config(dims=SMALL, seed=11, **kw):
    comps = [ComponentSpec("red", tau=1.0, colour_charge=1.0),
             ComponentSpec("blue", tau=0.8, colour_charge=-1.0),
             ComponentSpec("surf", tau=1.1, amphiphile=True,
                           d0=1.0, tau_d=1.0, beta=10.0)]
    cm = CouplingMatrix()
    cm.set_g("red", "blue", 0.08)
    cm.set_g("red", "surf", -0.006)
    cm.set_g("blue", "surf", -0.006)
    cm.set_g("surf", "surf", -0.0045)
    cfg = SimConfig(nx=dims[0], ny=dims[1], nz=dims[2],
                    components=comps, couplings=cm,
                    init=InitConfig(
                        mode="random",
                        densities={"red": 0.5, "blue": 0.45, "surf": 0.2},
                        seed=seed), **kw)
    return cfg


def random_obstacle(cfg, frac=0.15, seed=5, clear_z_extremes=False):
    rng = np.random.default_rng(seed)
    obst = rng.random(cfg.n_sites) < frac
    if clear_z_extremes:
        o3 = obst.reshape(cfg.nz, cfg.ny, cfg.nx)
        o3[0] = False
        o3[-1] = False
    return obst
