"""Steerable multicomponent lattice-Boltzmann toolkit.

Binary immiscible and ternary amphiphilic mixtures on a D3Q19 lattice,
with Lees-Edwards shear, porous-media bounce-back, a recycling invasion
boundary, bit-exact checkpointing, and a live steering service.
"""

import os

# Thread pool size is fixed at import so worker counts above the physical
# core count stay available (results are bit-identical for any count).
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from . import stencil
from .model import (
    ComponentSpec,
    CouplingMatrix,
    BoundaryConfig,
    ForcingConfig,
    InitConfig,
    OutputConfig,
    SteeringConfig,
    SimConfig,
    ConfigError,
)
from .state import Lattice, make_lattice
from .dynamics import Stepper

__all__ = [
    "stencil",
    "ComponentSpec",
    "CouplingMatrix",
    "BoundaryConfig",
    "ForcingConfig",
    "InitConfig",
    "OutputConfig",
    "SteeringConfig",
    "SimConfig",
    "ConfigError",
    "Lattice",
    "make_lattice",
    "Stepper",
]

__version__ = "0.1.0"
