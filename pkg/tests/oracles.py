"""Brute-force reference implementations for the update rules.

Everything here is written as plain site loops over (z, y, x) views, sharing
nothing with the production kernels except the stencil tables. Slow on
purpose; only run on tiny lattices. The unit tests treat these as ground
truth for the derived quantities (forces, fields, streaming, transport).
"""

import numpy as np

from lbflow import stencil

Q = stencil.Q
C = stencil.C  # (Q, 3) int, columns x,y,z
W = stencil.W
OPP = stencil.OPP
THETA = stencil.THETA
C2 = stencil.C2


def as3(field, dims):
    """(N,) -> (nz, ny, nx) view; dims = (nx, ny, nz)."""
    nx, ny, nz = dims
    return field.reshape(nz, ny, nx)


def equilibrium(rho, v):
    """N_i for scalars rho, v (3,): second-order low-Mach expansion."""
    out = np.empty(Q)
    v2 = float(np.dot(v, v))
    for i in range(Q):
        cv = float(C[i, 0] * v[0] + C[i, 1] * v[1] + C[i, 2] * v[2])
        out[i] = W[i] * rho * (1.0 + 3.0 * cv + 4.5 * cv * cv - 1.5 * v2)
    return out


def moments(f, dims):
    """Per-component density and momentum density from distributions."""
    ncomp = f.shape[0]
    nx, ny, nz = dims
    rho = np.zeros((ncomp, nz, ny, nx))
    mom = np.zeros((ncomp, 3, nz, ny, nx))
    for c in range(ncomp):
        f3 = f[c].reshape(Q, nz, ny, nx)
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    for i in range(Q):
                        v = f3[i, z, y, x]
                        rho[c, z, y, x] += v
                        for a in range(3):
                            mom[c, a, z, y, x] += v * C[i, a]
    return rho, mom


def psi_of(rho, form):
    if form == "exp":
        return 1.0 - np.exp(-rho)
    return rho.copy()


def _gather(field3, x, y, z, dims, le=False, disp=0.0, urel=0.0,
            f_for_boost=None):
    """Read a scalar field at unwrapped (x, y, z), periodic in x and y,
    z through the sliding seam when le is set. Scalar fields carry no
    velocity boost; the displacement offset still applies."""
    nx, ny, nz = dims
    y %= ny
    if 0 <= z < nz:
        return field3[z % nz, y, x % nx]
    if not le:
        return field3[z % nz, y, x % nx]
    if z < 0:
        zsrc = nz - 1
        xr = x + disp
    else:
        zsrc = 0
        xr = x - disp
    x0 = int(np.floor(xr)) % nx
    x1 = (x0 + 1) % nx
    fr = xr - np.floor(xr)
    return (1.0 - fr) * field3[zsrc, y, x0] + fr * field3[zsrc, y, x1]


def sc_force(rho, gmat, form, dims, le=False, disp=0.0):
    """Ordinary-pair lattice interaction force:
    F_a(x) = -psi_a(x) sum_b g_ab sum_{i!=0} psi_b(x + c_i) c_i.
    gmat is a dense (ncomp, ncomp) array over ordinary components only
    (amphiphile rows/columns zero)."""
    ncomp = rho.shape[0]
    nx, ny, nz = dims
    psi = psi_of(rho, form)
    F = np.zeros((ncomp, 3, nz, ny, nx))
    for a in range(ncomp):
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    acc = np.zeros(3)
                    for b in range(ncomp):
                        g = gmat[a, b]
                        if g == 0.0:
                            continue
                        for i in range(1, Q):
                            pb = _gather(psi[b], x + C[i, 0], y + C[i, 1],
                                         z + C[i, 2], dims, le, disp)
                            acc += g * pb * C[i]
                    F[a, :, z, y, x] = -psi[a, z, y, x] * acc
    return F


def colour_field(rho, charges, dims, le=False, disp=0.0):
    """h_c(x) = sum_{i!=0} phi(x + c_i) c_i with phi = sum_c q_c rho_c."""
    nx, ny, nz = dims
    phi = np.zeros((nz, ny, nx))
    for c, q in enumerate(charges):
        phi += q * rho[c]
    h = np.zeros((3, nz, ny, nx))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                for i in range(1, Q):
                    p = _gather(phi, x + C[i, 0], y + C[i, 1], z + C[i, 2],
                                dims, le, disp)
                    h[:, z, y, x] += p * C[i]
    return h


def dipole_field(rho_s, dipole, dims, le=False, disp=0.0):
    """h_s(x) = sum_{j!=0} theta_j . P(x + c_j) + P(x), P = rho_s d."""
    nx, ny, nz = dims
    P = rho_s[None] * dipole  # (3, nz, ny, nx)
    h = np.zeros((3, nz, ny, nx))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                acc = P[:, z, y, x].copy()
                for j in range(1, Q):
                    pv = np.array([
                        _gather(P[a], x + C[j, 0], y + C[j, 1], z + C[j, 2],
                                dims, le, disp) for a in range(3)])
                    acc += THETA[j] @ pv
                h[:, z, y, x] = acc
    return h


def dipole_relax(dipole, h, beta, d0, tau_d):
    """d~ = d - (d - beta d0 h / 3) / tau_d, clamped to |d~| <= d0."""
    deq = beta * d0 * h / 3.0
    dt = dipole - (dipole - deq) / tau_d
    n = np.sqrt((dt * dt).sum(axis=0))
    scale = np.where(n > d0, d0 / np.maximum(n, 1e-300), 1.0)
    return dt * scale


def amph_force_on_ordinary(psi_a, psis, dtilde, g, dims, le=False, disp=0.0):
    """F_a(x) = -2 g psi_a(x) sum_{i!=0} (theta_i . d~(x+c_i)) psis(x+c_i)."""
    nx, ny, nz = dims
    F = np.zeros((3, nz, ny, nx))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                acc = np.zeros(3)
                for i in range(1, Q):
                    dv = np.array([
                        _gather(dtilde[a], x + C[i, 0], y + C[i, 1],
                                z + C[i, 2], dims, le, disp) for a in range(3)])
                    ps = _gather(psis, x + C[i, 0], y + C[i, 1], z + C[i, 2],
                                 dims, le, disp)
                    acc += (THETA[i] @ dv) * ps
                F[:, z, y, x] = -2.0 * g * psi_a[z, y, x] * acc
    return F


def amph_force_on_s_from_ordinary(psis, dtilde, gbar, dims,
                                  le=False, disp=0.0):
    """F_s(x) = +2 psis(x) (sum_{i!=0} theta_i gbar(x+c_i)) . d~(x),
    gbar = sum_c g_cs psi_c."""
    nx, ny, nz = dims
    F = np.zeros((3, nz, ny, nx))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                M = np.zeros((3, 3))
                for i in range(1, Q):
                    gb = _gather(gbar, x + C[i, 0], y + C[i, 1], z + C[i, 2],
                                 dims, le, disp)
                    M += THETA[i] * gb
                F[:, z, y, x] = 2.0 * psis[z, y, x] * (M @ dtilde[:, z, y, x])
    return F


def amph_force_on_s_from_s(psis, dtilde, gss, dims, le=False, disp=0.0):
    """F_s(x) = -4 D gss psis(x) sum_{i!=0} (1/c_i^2) [(d'.theta_i.d) c_i
    + d'(d.c_i) + d(d'.c_i)] psis(x+c_i), d = d~(x), d' = d~(x+c_i)."""
    nx, ny, nz = dims
    D = 3
    F = np.zeros((3, nz, ny, nx))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                d = dtilde[:, z, y, x]
                acc = np.zeros(3)
                for i in range(1, Q):
                    dp = np.array([
                        _gather(dtilde[a], x + C[i, 0], y + C[i, 1],
                                z + C[i, 2], dims, le, disp) for a in range(3)])
                    ps = _gather(psis, x + C[i, 0], y + C[i, 1], z + C[i, 2],
                                 dims, le, disp)
                    ci = C[i].astype(float)
                    term = ((dp @ THETA[i] @ d) * ci
                            + dp * float(d @ ci) + d * float(dp @ ci))
                    acc += term * ps / C2[i]
                F[:, z, y, x] = -4.0 * D * gss * psis[z, y, x] * acc
    return F


def common_velocity(rho, mom, tau):
    """u' = (sum_c rho_c u_c / tau_c) / (sum_c rho_c / tau_c)."""
    num = np.zeros(mom.shape[1:])
    den = np.zeros(rho.shape[1:])
    for c in range(rho.shape[0]):
        num += mom[c] / tau[c]
        den += rho[c] / tau[c]
    out = np.zeros_like(num)
    good = den > 1e-10
    for a in range(3):
        out[a][good] = num[a][good] / den[good]
    return out


def collide(f, force, tau, obstacle, dims):
    """Post-collision distributions; returns a new array."""
    ncomp = f.shape[0]
    nx, ny, nz = dims
    rho, mom = moments(f, dims)
    up = common_velocity(rho, mom, tau)
    out = f.copy()
    ob3 = as3(obstacle, dims)
    for c in range(ncomp):
        f3 = out[c].reshape(Q, nz, ny, nx)
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    if ob3[z, y, x]:
                        continue
                    r = rho[c, z, y, x]
                    v = up[:, z, y, x].copy()
                    if r > 1e-10:
                        v += tau[c] * force[c, :, z, y, x] / r
                    neq = equilibrium(r, v)
                    for i in range(Q):
                        f3[i, z, y, x] += (neq[i] - f3[i, z, y, x]) / tau[c]
    return out


def le_plane(f, dims, zplane, dv):
    """Plane zplane of every component with velocity boosted by dv along x,
    as (ncomp, Q, ny, nx); the boost re-expands the equilibrium."""
    ncomp = f.shape[0]
    nx, ny, nz = dims
    out = np.zeros((ncomp, Q, ny, nx))
    for c in range(ncomp):
        f3 = f[c].reshape(Q, nz, ny, nx)
        for y in range(ny):
            for x in range(nx):
                fi = f3[:, zplane, y, x]
                r = fi.sum()
                if r > 1e-10:
                    u = (C.T.astype(float) @ fi) / r
                    us = u.copy()
                    us[0] += dv
                    out[c, :, y, x] = fi + equilibrium(r, us) - equilibrium(r, u)
                else:
                    out[c, :, y, x] = fi
    return out


def stream(f, obstacle, dims, le=False, disp=0.0, urel=0.0,
           recycling=False, invader=0, samph=-1, dtilde=None):
    """Streaming with the boundary rules; returns (fout, dipole_out).

    Mid-link bounce-back: a fluid target whose source site is rock keeps its
    own opposite-direction post-collision value. Recycling: mass crossing
    the x seam re-enters as pure invader. Sliding seam: crossings read the
    opposite extreme plane displaced by +-disp, velocity-boosted by -+urel,
    linearly interpolated. The dipole moves with the amphiphile mass and is
    renormalised by the arrived density.
    """
    ncomp = f.shape[0]
    nx, ny, nz = dims
    ob3 = as3(obstacle, dims)
    fout = np.zeros_like(f)
    f3 = f.reshape(ncomp, Q, nz, ny, nx)
    o3 = fout.reshape(ncomp, Q, nz, ny, nx)
    if le:
        top = le_plane(f, dims, nz - 1, -urel)
        bot = le_plane(f, dims, 0, +urel)
    dip_num = np.zeros((3, nz, ny, nx))
    dip_out = None
    d3 = dtilde if dtilde is not None else None
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if ob3[z, y, x]:
                    continue
                for i in range(Q):
                    sx = x - C[i, 0]
                    sy = (y - C[i, 1]) % ny
                    sz = z - C[i, 2]
                    if le and not (0 <= sz < nz):
                        if sz < 0:
                            plane = top
                            xr = sx + disp
                        else:
                            plane = bot
                            xr = sx - disp
                        x0 = int(np.floor(xr)) % nx
                        x1 = (x0 + 1) % nx
                        fr = xr - np.floor(xr)
                        for c in range(ncomp):
                            o3[c, i, z, y, x] = ((1.0 - fr) * plane[c, i, sy, x0]
                                                 + fr * plane[c, i, sy, x1])
                        if samph >= 0:
                            # seam reads interpolate the product f_s d~
                            for a in range(3):
                                pv0 = plane[samph, i, sy, x0] * d3[a, nz - 1 if sz < 0 else 0, sy, x0]
                                pv1 = plane[samph, i, sy, x1] * d3[a, nz - 1 if sz < 0 else 0, sy, x1]
                                dip_num[a, z, y, x] += (1.0 - fr) * pv0 + fr * pv1
                        continue
                    crossed = not (0 <= sx < nx)
                    sx %= nx
                    sz %= nz
                    if ob3[sz, sy, sx]:
                        for c in range(ncomp):
                            o3[c, i, z, y, x] = f3[c, OPP[i], z, y, x]
                        if samph >= 0:
                            for a in range(3):
                                dip_num[a, z, y, x] += (f3[samph, OPP[i], z, y, x]
                                                        * d3[a, z, y, x])
                    elif recycling and crossed:
                        tot = sum(f3[c, i, sz, sy, sx] for c in range(ncomp))
                        for c in range(ncomp):
                            o3[c, i, z, y, x] = tot if c == invader else 0.0
                    else:
                        for c in range(ncomp):
                            o3[c, i, z, y, x] = f3[c, i, sz, sy, sx]
                        if samph >= 0:
                            for a in range(3):
                                dip_num[a, z, y, x] += (f3[samph, i, sz, sy, sx]
                                                        * d3[a, sz, sy, sx])
    if samph >= 0:
        dip_out = np.zeros((3, nz, ny, nx))
        rs = o3[samph].sum(axis=0)
        good = rs > 0.0
        for a in range(3):
            dip_out[a][good] = dip_num[a][good] / rs[good]
    return fout, dip_out


def structure_factor(phi):
    """S(k) = |DFT(phi - <phi>)|^2 / V by direct summation, (nz, ny, nx)."""
    nz, ny, nx = phi.shape
    p = phi - phi.mean()
    S = np.zeros((nz, ny, nx))
    for kz in range(nz):
        for ky in range(ny):
            for kx in range(nx):
                acc = 0.0 + 0.0j
                for z in range(nz):
                    for y in range(ny):
                        for x in range(nx):
                            ph = -2.0j * np.pi * (kx * x / nx + ky * y / ny
                                                  + kz * z / nz)
                            acc += p[z, y, x] * np.exp(ph)
                S[kz, ky, kx] = abs(acc) ** 2 / (nx * ny * nz)
    return S


def flood_fill_periodic(mask):
    """Connected components of a boolean (nz, ny, nx) mask, 6-connected,
    periodic in all directions. Returns (labels, count); labels 0 = off."""
    nz, ny, nx = mask.shape
    labels = np.zeros(mask.shape, dtype=np.int64)
    count = 0
    for z0 in range(nz):
        for y0 in range(ny):
            for x0 in range(nx):
                if not mask[z0, y0, x0] or labels[z0, y0, x0]:
                    continue
                count += 1
                stack = [(z0, y0, x0)]
                labels[z0, y0, x0] = count
                while stack:
                    z, y, x = stack.pop()
                    for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                       (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                        w = ((z + dz) % nz, (y + dy) % ny, (x + dx) % nx)
                        if mask[w] and not labels[w]:
                            labels[w] = count
                            stack.append(w)
    return labels, count


def min_pore_width_brute(mask3):
    """Walk out from every pore voxel along each axis (periodic) and count
    the contiguous pore run; the narrowest run anywhere is the min width."""
    pore = ~np.asarray(mask3, dtype=bool)
    if not pore.any():
        return 0
    nz, ny, nx = pore.shape
    dims = (nz, ny, nx)
    best = max(dims)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not pore[z, y, x]:
                    continue
                for ax, n in enumerate(dims):
                    run = 1
                    p = [z, y, x]
                    while run < n:
                        p[ax] = (p[ax] + 1) % n
                        if not pore[tuple(p)]:
                            break
                        run += 1
                    p = [z, y, x]
                    back = p[ax]
                    steps = run
                    while steps < n:
                        back = (back - 1) % n
                        q = [z, y, x]
                        q[ax] = back
                        if not pore[tuple(q)]:
                            break
                        steps += 1
                    best = min(best, min(steps, n))
    return best


def best_assignment(prev, curr, dims, volume_ratio, max_distance):
    """Exhaustive matching between two region lists minimising total
    periodic centroid distance, subject to the same gates as the tracker.
    Returns (pairs sorted, total distance). Feasible only for tiny lists."""
    import itertools

    def dist(a, b):
        d = 0.0
        for i, n in enumerate(dims):
            dx = abs(a.centroid[i] - b.centroid[i])
            dx = min(dx, n - dx)
            d += dx * dx
        return d ** 0.5

    def ok(a, b):
        big = max(a.volume, b.volume)
        small = max(min(a.volume, b.volume), 1)
        return big / small <= volume_ratio and dist(a, b) <= max_distance

    ni, nj = len(prev), len(curr)
    best_pairs, best_score = [], (0, 0.0)
    for r in range(min(ni, nj), -1, -1):
        for isub in itertools.combinations(range(ni), r):
            for jperm in itertools.permutations(range(nj), r):
                if all(ok(prev[i], curr[j]) for i, j in zip(isub, jperm)):
                    tot = sum(dist(prev[i], curr[j])
                              for i, j in zip(isub, jperm))
                    if (r, -tot) > (best_score[0], -best_score[1]):
                        best_pairs = sorted(zip(isub, jperm))
                        best_score = (r, tot)
        if best_score[0] == r and r > 0:
            break
    return best_pairs, best_score[1]


def percolates_brute(pore3, ax3):
    """Covering-space BFS: walk the pore space tracking how many times the
    path wrapped around axis ax3; reaching a visited site with a different
    winding count means a periodic path exists along that axis."""
    import collections

    pore3 = np.asarray(pore3, dtype=bool)
    dims = pore3.shape
    visited = {}
    for start in zip(*np.nonzero(pore3)):
        if start in visited:
            continue
        visited[start] = 0
        queue = collections.deque([(start, 0)])
        while queue:
            (z, y, x), w = queue.popleft()
            for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                               (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                coord = [z + dz, y + dy, x + dx]
                dwind = 0
                for ax in range(3):
                    if coord[ax] < 0:
                        coord[ax] += dims[ax]
                        if ax == ax3:
                            dwind -= 1
                    elif coord[ax] >= dims[ax]:
                        coord[ax] -= dims[ax]
                        if ax == ax3:
                            dwind += 1
                t = tuple(coord)
                if not pore3[t]:
                    continue
                nw = w + dwind
                if t in visited:
                    if visited[t] != nw:
                        return True
                else:
                    visited[t] = nw
                    queue.append((t, nw))
    return False
