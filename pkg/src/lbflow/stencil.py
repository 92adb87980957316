"""D3Q19 velocity set and the traceless projectors used by dipole couplings.

Index order: rest link first, then the six face links, then the twelve edge
links, with opposite links adjacent (OPP[2k-1] = 2k). Site storage everywhere
in the package is flat x-fastest: n = x + nx*(y + ny*z).
"""

import numpy as np

D = 3  # spatial dimension
Q = 19  # links per site
CS2 = 1.0 / 3.0  # lattice speed of sound squared

C = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
        [1, 1, 0],
        [-1, -1, 0],
        [1, -1, 0],
        [-1, 1, 0],
        [1, 0, 1],
        [-1, 0, -1],
        [1, 0, -1],
        [-1, 0, 1],
        [0, 1, 1],
        [0, -1, -1],
        [0, 1, -1],
        [0, -1, 1],
    ],
    dtype=np.int64,
)

CX = np.ascontiguousarray(C[:, 0])
CY = np.ascontiguousarray(C[:, 1])
CZ = np.ascontiguousarray(C[:, 2])

W = np.array([1.0 / 3.0] + [1.0 / 18.0] * 6 + [1.0 / 36.0] * 12)

OPP = np.array(
    [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17],
    dtype=np.int64,
)

# |c_i|^2 per link and its inverse (0 kept as 0 for the rest link, which
# never enters the i != 0 sums that divide by it).
C2 = np.sum(C * C, axis=1).astype(np.float64)
INV_C2 = np.zeros(Q)
INV_C2[1:] = 1.0 / C2[1:]

# theta_i = I - D c_i c_i / |c_i|^2, the traceless projector per link;
# the rest link gets the identity.
THETA = np.empty((Q, D, D))
THETA[0] = np.eye(D)
for _i in range(1, Q):
    _c = C[_i].astype(np.float64)
    THETA[_i] = np.eye(D) - D * np.outer(_c, _c) / C2[_i]
del _i, _c

for _a in (C, CX, CY, CZ, W, OPP, C2, INV_C2, THETA):
    _a.setflags(write=False)
del _a


def equilibrium(rho, v):
    """Second-order equilibrium distribution N_i(rho, v).

    rho: (...,) densities; v: (..., 3) velocities. Returns (..., Q).
    """
    rho = np.asarray(rho, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cv = v @ C.T.astype(np.float64)  # (..., Q)
    vsq = np.sum(v * v, axis=-1)[..., None]
    return W * rho[..., None] * (1.0 + 3.0 * cv + 4.5 * cv * cv - 1.5 * vsq)
