"""Numba kernels for the per-step update.

All kernels parallelise over sites (or z-slabs) with every write private to
its site, so results are bit-identical for any worker count. Reductions
(total mass, spectra) happen outside, in numpy. fastmath stays off:
checkpoint/restore and worker-count invariance are bit-exact contracts.

Neighbour addressing: periodic in x and y; in z either periodic or through
the Lees-Edwards seam, where a crossing read maps to the opposite plane
displaced by +disp (reads below the box) or -disp (above) and is linearly
interpolated between the two straddled columns. disp == 0 with fr == 0 takes
the direct-load path, so an idle shear boundary is bitwise periodic.

Streaming is split for speed: a bulk periodic copy per (component, link)
(advect_bulk) followed by sparse fixups for the seam rules and bounce-back,
plus a separate gather for the dipole transport numerator. advect_sites is
the one-kernel reference implementation of the same routing and must agree
bitwise; the test suite checks that.
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
from numba import njit, prange

from .stencil import Q

_KW = dict(cache=True, fastmath=False)


@njit(inline="always")
def _addr(x, y, z, nx, ny, nz, le_active, disp):
    """Flat indices (i0, i1) and interpolation fraction fr for a site read
    at unwrapped coordinates; value = (1-fr)*field[i0] + fr*field[i1]."""
    if y < 0:
        y += ny
    elif y >= ny:
        y -= ny
    sgn = 0.0
    if z < 0:
        z += nz
        sgn = 1.0
    elif z >= nz:
        z -= nz
        sgn = -1.0
    if sgn != 0.0 and le_active:
        xr = x + sgn * disp
        fx = np.floor(xr)
        x0 = int(fx) % nx
        fr = xr - fx
        x1 = x0 + 1
        if x1 >= nx:
            x1 -= nx
        base = nx * (y + ny * z)
        return x0 + base, x1 + base, fr
    if x < 0:
        x += nx
    elif x >= nx:
        x -= nx
    idx = x + nx * (y + ny * z)
    return idx, idx, 0.0


@njit(inline="always")
def _lerp(field, i0, i1, fr):
    if fr == 0.0:
        return field[i0]
    return (1.0 - fr) * field[i0] + fr * field[i1]


# ---------------------------------------------------------------------------
# moments, common velocity, collision
# ---------------------------------------------------------------------------


@njit(parallel=True, **_KW)
def moments_psi(f, cx, cy, cz, linear_psi, rho, mom, psi):
    """Density, momentum density and effective density in one pass.

    psi = 1 - exp(-rho), or rho itself when linear_psi is set.
    """
    ncomp, nq, nsite = f.shape
    for c in range(ncomp):
        fc = f[c]
        for n in prange(nsite):
            r = 0.0
            mx = 0.0
            my = 0.0
            mz = 0.0
            for i in range(nq):
                v = fc[i, n]
                r += v
                mx += v * cx[i]
                my += v * cy[i]
                mz += v * cz[i]
            rho[c, n] = r
            mom[c, 0, n] = mx
            mom[c, 1, n] = my
            mom[c, 2, n] = mz
            psi[c, n] = r if linear_psi else -np.expm1(-r)


@njit(parallel=True, **_KW)
def common_velocity(rho, mom, itau, rho_floor, out):
    """u' = (sum_c rho_c u_c / tau_c) / (sum_c rho_c / tau_c), zero where the
    weighted density falls below rho_floor."""
    ncomp = rho.shape[0]
    nsite = rho.shape[1]
    for n in prange(nsite):
        den = 0.0
        px = 0.0
        py = 0.0
        pz = 0.0
        for c in range(ncomp):
            it = itau[c]
            den += rho[c, n] * it
            px += mom[c, 0, n] * it
            py += mom[c, 1, n] * it
            pz += mom[c, 2, n] * it
        if den > rho_floor:
            out[0, n] = px / den
            out[1, n] = py / den
            out[2, n] = pz / den
        else:
            out[0, n] = 0.0
            out[1, n] = 0.0
            out[2, n] = 0.0


@njit(parallel=True, **_KW)
def collide(f, rho, uprime, force, tau, obstacle, w, cx, cy, cz, rho_floor):
    """BGK collision toward N_i(rho, v), v = u' + tau F / rho (the forcing
    shift is dropped below rho_floor). Obstacle sites are skipped. Returns
    the maximum |v|^2 seen, for the stability warning."""
    ncomp, nq, nsite = f.shape
    maxv2 = 0.0
    for c in range(ncomp):
        fc = f[c]
        tc = tau[c]
        invtau = 1.0 / tc
        for n in prange(nsite):
            if obstacle[n]:
                continue
            r = rho[c, n]
            vx = uprime[0, n]
            vy = uprime[1, n]
            vz = uprime[2, n]
            if r > rho_floor:
                vx += tc * force[c, 0, n] / r
                vy += tc * force[c, 1, n] / r
                vz += tc * force[c, 2, n] / r
            v2 = vx * vx + vy * vy + vz * vz
            maxv2 = max(maxv2, v2)
            for i in range(nq):
                cv = cx[i] * vx + cy[i] * vy + cz[i] * vz
                neq = w[i] * r * (1.0 + 3.0 * cv + 4.5 * cv * cv - 1.5 * v2)
                fc[i, n] += (neq - fc[i, n]) * invtau
    return maxv2


# ---------------------------------------------------------------------------
# fused interaction stencil passes
# ---------------------------------------------------------------------------


@njit(inline="always")
def _ipass_fast(n, noff, s0, s1, s2, nk, p0, p1, p2, has_p,
                cx, cy, cz, theta):
    a0x = a0y = a0z = 0.0
    a1x = a1y = a1z = 0.0
    a2x = a2y = a2z = 0.0
    tx = ty = tz = 0.0
    for i in range(1, Q):
        s = n + noff[i]
        v = s0[s]
        a0x += v * cx[i]
        a0y += v * cy[i]
        a0z += v * cz[i]
        if nk > 1:
            v = s1[s]
            a1x += v * cx[i]
            a1y += v * cy[i]
            a1z += v * cz[i]
        if nk > 2:
            v = s2[s]
            a2x += v * cx[i]
            a2y += v * cy[i]
            a2z += v * cz[i]
        if has_p:
            wx = p0[s]
            wy = p1[s]
            wz = p2[s]
            tx += theta[i, 0, 0] * wx + theta[i, 0, 1] * wy + theta[i, 0, 2] * wz
            ty += theta[i, 1, 0] * wx + theta[i, 1, 1] * wy + theta[i, 1, 2] * wz
            tz += theta[i, 2, 0] * wx + theta[i, 2, 1] * wy + theta[i, 2, 2] * wz
    return a0x, a0y, a0z, a1x, a1y, a1z, a2x, a2y, a2z, tx, ty, tz


@njit(inline="always")
def _ipass_slow(x, y, z, nx, ny, nz, cxi, cyi, czi, s0, s1, s2, nk,
                p0, p1, p2, has_p, cx, cy, cz, theta, le_active, disp):
    a0x = a0y = a0z = 0.0
    a1x = a1y = a1z = 0.0
    a2x = a2y = a2z = 0.0
    tx = ty = tz = 0.0
    for i in range(1, Q):
        i0, i1, fr = _addr(x + cxi[i], y + cyi[i], z + czi[i],
                           nx, ny, nz, le_active, disp)
        v = _lerp(s0, i0, i1, fr)
        a0x += v * cx[i]
        a0y += v * cy[i]
        a0z += v * cz[i]
        if nk > 1:
            v = _lerp(s1, i0, i1, fr)
            a1x += v * cx[i]
            a1y += v * cy[i]
            a1z += v * cz[i]
        if nk > 2:
            v = _lerp(s2, i0, i1, fr)
            a2x += v * cx[i]
            a2y += v * cy[i]
            a2z += v * cz[i]
        if has_p:
            wx = _lerp(p0, i0, i1, fr)
            wy = _lerp(p1, i0, i1, fr)
            wz = _lerp(p2, i0, i1, fr)
            tx += theta[i, 0, 0] * wx + theta[i, 0, 1] * wy + theta[i, 0, 2] * wz
            ty += theta[i, 1, 0] * wx + theta[i, 1, 1] * wy + theta[i, 1, 2] * wz
            tz += theta[i, 2, 0] * wx + theta[i, 2, 1] * wy + theta[i, 2, 2] * wz
    return a0x, a0y, a0z, a1x, a1y, a1z, a2x, a2y, a2z, tx, ty, tz


@njit(parallel=True, **_KW)
def interaction_pass(s0, s1, s2, nk, p, has_p, nx, ny, nz,
                     cxi, cyi, czi, noff, cx, cy, cz, theta,
                     le_active, disp, out0, out1, out2, out_theta):
    """c-weighted neighbour sums of up to three scalar fields plus the
    traceless-projected neighbour sum of a vector field, in one sweep:

    out_k[:, n]    = sum_{i != 0} s_k(x+c_i) c_i          (k < nk)
    out_theta[:, n] = sum_{i != 0} theta_i . p(x+c_i)      (if has_p)
    """
    p0 = p[0]
    p1 = p[1]
    p2 = p[2]
    for z in prange(nz):
        zin = 0 < z < nz - 1
        for y in range(ny):
            row = nx * (y + ny * z)
            inner = zin and 0 < y < ny - 1 and nx > 2
            for x in range(nx):
                n = row + x
                if inner and 0 < x < nx - 1:
                    (a0x, a0y, a0z, a1x, a1y, a1z, a2x, a2y, a2z,
                     tx, ty, tz) = _ipass_fast(
                        n, noff, s0, s1, s2, nk, p0, p1, p2, has_p,
                        cx, cy, cz, theta)
                else:
                    (a0x, a0y, a0z, a1x, a1y, a1z, a2x, a2y, a2z,
                     tx, ty, tz) = _ipass_slow(
                        x, y, z, nx, ny, nz, cxi, cyi, czi, s0, s1, s2, nk,
                        p0, p1, p2, has_p, cx, cy, cz, theta, le_active, disp)
                out0[0, n] = a0x
                out0[1, n] = a0y
                out0[2, n] = a0z
                if nk > 1:
                    out1[0, n] = a1x
                    out1[1, n] = a1y
                    out1[2, n] = a1z
                if nk > 2:
                    out2[0, n] = a2x
                    out2[1, n] = a2y
                    out2[2, n] = a2z
                if has_p:
                    out_theta[0, n] = tx
                    out_theta[1, n] = ty
                    out_theta[2, n] = tz


@njit(inline="always")
def _apass_link(s, ex, ey, ez, i, dx, dy, dz, gb, want_cs, want_ss,
                cx, cy, cz, theta, inv_c2,
                ax, ay, az, m00, m01, m02, m11, m12, m22, wx, wy, wz):
    tx = theta[i, 0, 0] * ex + theta[i, 0, 1] * ey + theta[i, 0, 2] * ez
    ty = theta[i, 1, 0] * ex + theta[i, 1, 1] * ey + theta[i, 1, 2] * ez
    tz = theta[i, 2, 0] * ex + theta[i, 2, 1] * ey + theta[i, 2, 2] * ez
    ax += tx * s
    ay += ty * s
    az += tz * s
    if want_cs:
        m00 += theta[i, 0, 0] * gb
        m01 += theta[i, 0, 1] * gb
        m02 += theta[i, 0, 2] * gb
        m11 += theta[i, 1, 1] * gb
        m12 += theta[i, 1, 2] * gb
        m22 += theta[i, 2, 2] * gb
    if want_ss:
        # theta symmetric: d'.theta_i.d = (theta_i.d').d
        dtd = tx * dx + ty * dy + tz * dz
        dci = dx * cx[i] + dy * cy[i] + dz * cz[i]
        eci = ex * cx[i] + ey * cy[i] + ez * cz[i]
        wgt = s * inv_c2[i]
        wx += wgt * (dtd * cx[i] + ex * dci + dx * eci)
        wy += wgt * (dtd * cy[i] + ey * dci + dy * eci)
        wz += wgt * (dtd * cz[i] + ez * dci + dz * eci)
    return ax, ay, az, m00, m01, m02, m11, m12, m22, wx, wy, wz


@njit(parallel=True, **_KW)
def amphiphile_pass(dt, psis, gbar, want_cs, want_ss,
                    nx, ny, nz, cxi, cyi, czi, noff, cx, cy, cz,
                    theta, inv_c2, le_active, disp, out_a, out_v, out_w):
    """The three dipole-coupling stencil sums in one sweep.

    out_a[:, n] = sum_{i!=0} (theta_i . d'(x+c_i)) psis(x+c_i)
    out_v[:, n] = (sum_{i!=0} theta_i gbar(x+c_i)) . d(x)
    out_w[:, n] = sum_{i!=0} (1/c_i^2)[(d'.theta_i.d) c_i + d'(d.c_i)
                                        + d(d'.c_i)] psis(x+c_i)
    with d = dt(x), d' = dt(x+c_i).
    """
    d0 = dt[0]
    d1 = dt[1]
    d2 = dt[2]
    for z in prange(nz):
        zin = 0 < z < nz - 1
        for y in range(ny):
            row = nx * (y + ny * z)
            inner = zin and 0 < y < ny - 1 and nx > 2
            for x in range(nx):
                n = row + x
                dx = d0[n]
                dy = d1[n]
                dz = d2[n]
                ax = ay = az = 0.0
                m00 = m01 = m02 = m11 = m12 = m22 = 0.0
                wx = wy = wz = 0.0
                if inner and 0 < x < nx - 1:
                    for i in range(1, Q):
                        s = n + noff[i]
                        (ax, ay, az, m00, m01, m02, m11, m12, m22,
                         wx, wy, wz) = _apass_link(
                            psis[s], d0[s], d1[s], d2[s], i, dx, dy, dz,
                            gbar[s], want_cs, want_ss, cx, cy, cz, theta,
                            inv_c2, ax, ay, az, m00, m01, m02, m11, m12,
                            m22, wx, wy, wz)
                else:
                    for i in range(1, Q):
                        i0, i1, fr = _addr(x + cxi[i], y + cyi[i],
                                           z + czi[i], nx, ny, nz,
                                           le_active, disp)
                        (ax, ay, az, m00, m01, m02, m11, m12, m22,
                         wx, wy, wz) = _apass_link(
                            _lerp(psis, i0, i1, fr), _lerp(d0, i0, i1, fr),
                            _lerp(d1, i0, i1, fr), _lerp(d2, i0, i1, fr),
                            i, dx, dy, dz, _lerp(gbar, i0, i1, fr),
                            want_cs, want_ss, cx, cy, cz, theta, inv_c2,
                            ax, ay, az, m00, m01, m02, m11, m12, m22,
                            wx, wy, wz)
                out_a[0, n] = ax
                out_a[1, n] = ay
                out_a[2, n] = az
                if want_cs:
                    out_v[0, n] = m00 * dx + m01 * dy + m02 * dz
                    out_v[1, n] = m01 * dx + m11 * dy + m12 * dz
                    out_v[2, n] = m02 * dx + m12 * dy + m22 * dz
                if want_ss:
                    out_w[0, n] = wx
                    out_w[1, n] = wy
                    out_w[2, n] = wz


@njit(parallel=True, **_KW)
def assemble_forces(psi, rho, svec, gmat, amph, gvec, gss, amph_a, amph_v,
                    amph_w, dfac, g_accn, axis, F):
    """Per-site force totals from the precomputed stencil sums.

    F[a] = -psi_a sum_b gmat[a,b] svec[b]          (ordinary pairs)
           - 2 gvec[a] psi_a amph_a                 (ordinary-amphiphile)
    F[s] = +2 psi_s amph_v - dfac gss psi_s amph_w  (s = amph row)
    plus g_accn rho_c along axis for every component.
    """
    ncomp = psi.shape[0] - 1
    nsite = psi.shape[1]
    for n in prange(nsite):
        for a in range(ncomp):
            fx = 0.0
            fy = 0.0
            fz = 0.0
            pa = psi[a, n]
            if a == amph:
                fx = 2.0 * pa * amph_v[0, n] - dfac * gss * pa * amph_w[0, n]
                fy = 2.0 * pa * amph_v[1, n] - dfac * gss * pa * amph_w[1, n]
                fz = 2.0 * pa * amph_v[2, n] - dfac * gss * pa * amph_w[2, n]
            else:
                for b in range(ncomp):
                    g = gmat[a, b]
                    if g != 0.0:
                        fx -= pa * g * svec[b, 0, n]
                        fy -= pa * g * svec[b, 1, n]
                        fz -= pa * g * svec[b, 2, n]
                ga = gvec[a]
                if ga != 0.0:
                    fx -= 2.0 * ga * pa * amph_a[0, n]
                    fy -= 2.0 * ga * pa * amph_a[1, n]
                    fz -= 2.0 * ga * pa * amph_a[2, n]
            if g_accn != 0.0:
                if axis == 0:
                    fx += g_accn * rho[a, n]
                elif axis == 1:
                    fy += g_accn * rho[a, n]
                else:
                    fz += g_accn * rho[a, n]
            F[a, 0, n] = fx
            F[a, 1, n] = fy
            F[a, 2, n] = fz


# ---------------------------------------------------------------------------
# Lees-Edwards seam planes
# ---------------------------------------------------------------------------


@njit(inline="always")
def _le_plane_site(f, n, p, dv, w, cx, cy, cz, rho_floor, samph, dt,
                   out, pout):
    ncomp = f.shape[0]
    nq = f.shape[1]
    for c in range(ncomp):
        r = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for i in range(nq):
            v = f[c, i, n]
            r += v
            mx += v * cx[i]
            my += v * cy[i]
            mz += v * cz[i]
        if r > rho_floor:
            ux = mx / r
            uy = my / r
            uz = mz / r
            sx = ux + dv
            u2 = ux * ux + uy * uy + uz * uz
            s2 = sx * sx + uy * uy + uz * uz
            for i in range(nq):
                cu = cx[i] * ux + cy[i] * uy + cz[i] * uz
                cs = cx[i] * sx + cy[i] * uy + cz[i] * uz
                out[c, i, p] = f[c, i, n] + w[i] * r * (
                    3.0 * (cs - cu)
                    + 4.5 * (cs * cs - cu * cu)
                    - 1.5 * (s2 - u2))
        else:
            for i in range(nq):
                out[c, i, p] = f[c, i, n]
    if samph >= 0:
        dx = dt[0, n]
        dy = dt[1, n]
        dz = dt[2, n]
        for i in range(nq):
            v = out[samph, i, p]
            pout[i, 0, p] = v * dx
            pout[i, 1, p] = v * dy
            pout[i, 2, p] = v * dz


@njit(parallel=True, **_KW)
def le_transform_planes(f, nx, ny, nz, w, cx, cy, cz, shift_vel, rho_floor,
                        samph, dt, ftop, fbot, ptop, pbot):
    """Boosted copies of the z-extreme planes for seam-crossing gathers.

    ftop: plane z = nz-1 with the local velocity shifted by -shift_vel along
    x (it is read as the image below the box); fbot: plane z = 0 shifted by
    +shift_vel. ptop/pbot carry the matching dipole transport products
    f_s,i * d for the amphiphile (untouched by the boost: orientations are
    frame-invariant)."""
    nxy = nx * ny
    base_top = nxy * (nz - 1)
    for p in prange(nxy):
        _le_plane_site(f, base_top + p, p, -shift_vel, w, cx, cy, cz,
                       rho_floor, samph, dt, ftop, ptop)
        _le_plane_site(f, p, p, shift_vel, w, cx, cy, cz,
                       rho_floor, samph, dt, fbot, pbot)


# ---------------------------------------------------------------------------
# streaming: bulk copy + sparse fixups (+ bitwise reference kernel)
# ---------------------------------------------------------------------------


@njit(parallel=True, **_KW)
def advect_bulk(f, fout, nx, ny, nz, cxi, cyi, czi):
    """Fully periodic gather fout[c,i,x] = f[c,i,x-c_i], row at a time."""
    ncomp, nq, nsite = f.shape
    for z in prange(nz):
        for c in range(ncomp):
            for i in range(nq):
                sz = z - czi[i]
                if sz < 0:
                    sz += nz
                elif sz >= nz:
                    sz -= nz
                ci = cxi[i]
                for y in range(ny):
                    sy = y - cyi[i]
                    if sy < 0:
                        sy += ny
                    elif sy >= ny:
                        sy -= ny
                    trow = nx * (y + ny * z)
                    srow = nx * (sy + ny * sz)
                    if ci == 0:
                        for x in range(nx):
                            fout[c, i, trow + x] = f[c, i, srow + x]
                    elif ci == 1:
                        fout[c, i, trow] = f[c, i, srow + nx - 1]
                        for x in range(1, nx):
                            fout[c, i, trow + x] = f[c, i, srow + x - 1]
                    else:
                        for x in range(nx - 1):
                            fout[c, i, trow + x] = f[c, i, srow + x + 1]
                        fout[c, i, trow + nx - 1] = f[c, i, srow]


@njit(inline="always")
def _le_gather(fout, plane, n, xr, sy, nx, i):
    fx = np.floor(xr)
    x0 = int(fx) % nx
    fr = xr - fx
    x1 = x0 + 1
    if x1 >= nx:
        x1 -= nx
    p0 = x0 + nx * sy
    p1 = x1 + nx * sy
    ncomp = fout.shape[0]
    if fr == 0.0:
        for c in range(ncomp):
            fout[c, i, n] = plane[c, i, p0]
    else:
        g0 = 1.0 - fr
        for c in range(ncomp):
            fout[c, i, n] = g0 * plane[c, i, p0] + fr * plane[c, i, p1]


@njit(parallel=True, **_KW)
def fix_lees_edwards(fout, ftop, fbot, nx, ny, nz, cxi, cyi, czi, disp):
    """Overwrite seam-crossing targets with interpolated plane gathers."""
    nxy = nx * ny
    base_top = nxy * (nz - 1)
    for p in prange(nxy):
        x = p % nx
        y = p // nx
        for i in range(1, Q):
            ci = czi[i]
            if ci == 0:
                continue
            sy = y - cyi[i]
            if sy < 0:
                sy += ny
            elif sy >= ny:
                sy -= ny
            if ci == 1:
                # target plane z=0 pulls from below the box
                _le_gather(fout, ftop, p, x - cxi[i] + disp, sy, nx, i)
            else:
                _le_gather(fout, fbot, base_top + p, x - cxi[i] - disp,
                           sy, nx, i)


@njit(parallel=True, **_KW)
def fix_recycling(f, fout, obstacle, nx, ny, nz, cxi, cyi, czi, invader):
    """Reassign mass that wrapped the x seam to the invader component.

    Runs before the bounce-back fixup; sources inside rock are left for it.
    """
    ncomp = f.shape[0]
    nyz = ny * nz
    for q in prange(nyz):
        y = q % ny
        z = q // ny
        for i in range(1, Q):
            ci = cxi[i]
            if ci == 0:
                continue
            sy = y - cyi[i]
            if sy < 0:
                sy += ny
            elif sy >= ny:
                sy -= ny
            sz = z - czi[i]
            if sz < 0:
                sz += nz
            elif sz >= nz:
                sz -= nz
            if ci == 1:
                n = nx * (y + ny * z)  # target x = 0, source x = nx-1
                s = (nx - 1) + nx * (sy + ny * sz)
            else:
                n = (nx - 1) + nx * (y + ny * z)
                s = nx * (sy + ny * sz)
            if obstacle[n] or obstacle[s]:
                continue
            tot = 0.0
            for c in range(ncomp):
                tot += f[c, i, s]
            for c in range(ncomp):
                fout[c, i, n] = tot if c == invader else 0.0


@njit(parallel=True, **_KW)
def fix_bounce_back(f, fout, tgt, lnk, opp):
    """fout[c, i, tgt] = f[c, opp_i, tgt] for every (target, link) whose
    source site is rock."""
    ncomp = f.shape[0]
    m = tgt.size
    for k in prange(m):
        n = tgt[k]
        i = lnk[k]
        io = opp[i]
        for c in range(ncomp):
            fout[c, i, n] = f[c, io, n]


@njit(parallel=True, **_KW)
def fix_obstacle_targets(fout, sites):
    ncomp, nq, nsite = fout.shape
    m = sites.size
    for k in prange(m):
        n = sites[k]
        for c in range(ncomp):
            for i in range(nq):
                fout[c, i, n] = 0.0


@njit(parallel=True, **_KW)
def dipole_advect_pass(fs, dt, obstacle, nx, ny, nz, cxi, cyi, czi, opp,
                       noff, le_active, disp, ptop, pbot, recyc, dipnum):
    """Transport numerator sum_i f~_s(x-c_i) d~(x-c_i) with the same routing
    as the distribution streaming: bounce-back pairs the target's own d~,
    seam crossings interpolate the plane products, recycled mass drops out.
    """
    d0 = dt[0]
    d1 = dt[1]
    d2 = dt[2]
    for z in prange(nz):
        zin = 0 < z < nz - 1
        for y in range(ny):
            row = nx * (y + ny * z)
            inner = zin and 0 < y < ny - 1 and nx > 2
            for x in range(nx):
                n = row + x
                if obstacle[n]:
                    dipnum[0, n] = 0.0
                    dipnum[1, n] = 0.0
                    dipnum[2, n] = 0.0
                    continue
                px = 0.0
                py = 0.0
                pz = 0.0
                if inner and 0 < x < nx - 1:
                    for i in range(Q):
                        s = n - noff[i]
                        if obstacle[s]:
                            v = fs[opp[i], n]
                            px += v * d0[n]
                            py += v * d1[n]
                            pz += v * d2[n]
                        else:
                            v = fs[i, s]
                            px += v * d0[s]
                            py += v * d1[s]
                            pz += v * d2[s]
                else:
                    for i in range(Q):
                        sx = x - cxi[i]
                        sy = y - cyi[i]
                        sz = z - czi[i]
                        if sy < 0:
                            sy += ny
                        elif sy >= ny:
                            sy -= ny
                        if le_active and (sz < 0 or sz >= nz):
                            if sz < 0:
                                xr = sx + disp
                                pplane = ptop
                            else:
                                xr = sx - disp
                                pplane = pbot
                            fx = np.floor(xr)
                            x0 = int(fx) % nx
                            fr = xr - fx
                            x1 = x0 + 1
                            if x1 >= nx:
                                x1 -= nx
                            p0 = x0 + nx * sy
                            p1 = x1 + nx * sy
                            if fr == 0.0:
                                px += pplane[i, 0, p0]
                                py += pplane[i, 1, p0]
                                pz += pplane[i, 2, p0]
                            else:
                                g0 = 1.0 - fr
                                px += g0 * pplane[i, 0, p0] + fr * pplane[i, 0, p1]
                                py += g0 * pplane[i, 1, p0] + fr * pplane[i, 1, p1]
                                pz += g0 * pplane[i, 2, p0] + fr * pplane[i, 2, p1]
                        else:
                            crossed_x = sx < 0 or sx >= nx
                            if sx < 0:
                                sx += nx
                            elif sx >= nx:
                                sx -= nx
                            if sz < 0:
                                sz += nz
                            elif sz >= nz:
                                sz -= nz
                            s = sx + nx * (sy + ny * sz)
                            if obstacle[s]:
                                v = fs[opp[i], n]
                                px += v * d0[n]
                                py += v * d1[n]
                                pz += v * d2[n]
                            elif recyc and crossed_x:
                                pass  # converted mass carries no dipole
                            else:
                                v = fs[i, s]
                                px += v * d0[s]
                                py += v * d1[s]
                                pz += v * d2[s]
                dipnum[0, n] = px
                dipnum[1, n] = py
                dipnum[2, n] = pz


@njit(parallel=True, **_KW)
def dipole_renorm(fs, dipnum, d):
    """d = dipnum / rho_s with rho_s summed from the streamed distributions;
    zero where no amphiphile mass arrived."""
    nq, nsite = fs.shape
    for n in prange(nsite):
        r = 0.0
        for i in range(nq):
            r += fs[i, n]
        if r > 0.0:
            inv = 1.0 / r
            d[0, n] = dipnum[0, n] * inv
            d[1, n] = dipnum[1, n] * inv
            d[2, n] = dipnum[2, n] * inv
        else:
            d[0, n] = 0.0
            d[1, n] = 0.0
            d[2, n] = 0.0


@njit(parallel=True, **_KW)
def advect_sites(f, fout, obstacle, nx, ny, nz, cxi, cyi, czi, opp,
                 le_active, disp, ftop, fbot,
                 recyc, invader, samph, dt, ptop, pbot, dipnum):
    """Reference streaming kernel: one gather per (site, link) handling all
    boundary rules inline. Must agree bitwise with advect_bulk + fixups +
    dipole_advect_pass; kept for cross-checking and small lattices."""
    ncomp, nq, nsite = f.shape
    for n in prange(nsite):
        if obstacle[n]:
            for c in range(ncomp):
                for i in range(nq):
                    fout[c, i, n] = 0.0
            if samph >= 0:
                dipnum[0, n] = 0.0
                dipnum[1, n] = 0.0
                dipnum[2, n] = 0.0
            continue
        x = n % nx
        t = n // nx
        y = t % ny
        z = t // ny
        px = 0.0
        py = 0.0
        pz = 0.0
        for i in range(nq):
            sx = x - cxi[i]
            sy = y - cyi[i]
            sz = z - czi[i]
            if sy < 0:
                sy += ny
            elif sy >= ny:
                sy -= ny
            if le_active and (sz < 0 or sz >= nz):
                if sz < 0:
                    xr = sx + disp
                    plane = ftop
                    pplane = ptop
                else:
                    xr = sx - disp
                    plane = fbot
                    pplane = pbot
                fx = np.floor(xr)
                x0 = int(fx) % nx
                fr = xr - fx
                x1 = x0 + 1
                if x1 >= nx:
                    x1 -= nx
                p0 = x0 + nx * sy
                p1 = x1 + nx * sy
                if fr == 0.0:
                    for c in range(ncomp):
                        fout[c, i, n] = plane[c, i, p0]
                    if samph >= 0:
                        px += pplane[i, 0, p0]
                        py += pplane[i, 1, p0]
                        pz += pplane[i, 2, p0]
                else:
                    g0 = 1.0 - fr
                    for c in range(ncomp):
                        fout[c, i, n] = g0 * plane[c, i, p0] + fr * plane[c, i, p1]
                    if samph >= 0:
                        px += g0 * pplane[i, 0, p0] + fr * pplane[i, 0, p1]
                        py += g0 * pplane[i, 1, p0] + fr * pplane[i, 1, p1]
                        pz += g0 * pplane[i, 2, p0] + fr * pplane[i, 2, p1]
            else:
                crossed_x = sx < 0 or sx >= nx
                if sx < 0:
                    sx += nx
                elif sx >= nx:
                    sx -= nx
                if sz < 0:
                    sz += nz
                elif sz >= nz:
                    sz -= nz
                s = sx + nx * (sy + ny * sz)
                if obstacle[s]:
                    io = opp[i]
                    for c in range(ncomp):
                        fout[c, i, n] = f[c, io, n]
                    if samph >= 0:
                        v = f[samph, io, n]
                        px += v * dt[0, n]
                        py += v * dt[1, n]
                        pz += v * dt[2, n]
                elif recyc and crossed_x:
                    tot = 0.0
                    for c in range(ncomp):
                        tot += f[c, i, s]
                    for c in range(ncomp):
                        fout[c, i, n] = tot if c == invader else 0.0
                else:
                    for c in range(ncomp):
                        fout[c, i, n] = f[c, i, s]
                    if samph >= 0:
                        v = f[samph, i, s]
                        px += v * dt[0, s]
                        py += v * dt[1, s]
                        pz += v * dt[2, s]
        if samph >= 0:
            dipnum[0, n] = px
            dipnum[1, n] = py
            dipnum[2, n] = pz


# ---------------------------------------------------------------------------
# single-purpose kernels (cross-checks for the fused passes)
# ---------------------------------------------------------------------------


@njit(parallel=True, **_KW)
def neighbour_vector_sum(field, nx, ny, nz, cxi, cyi, czi, cx, cy, cz,
                         le_active, disp, out):
    """out[:, n] = sum_{i != 0} field(x + c_i) c_i."""
    nsite = field.size
    for n in prange(nsite):
        x = n % nx
        t = n // nx
        y = t % ny
        z = t // ny
        ax = 0.0
        ay = 0.0
        az = 0.0
        for i in range(1, Q):
            i0, i1, fr = _addr(x + cxi[i], y + cyi[i], z + czi[i],
                               nx, ny, nz, le_active, disp)
            v = _lerp(field, i0, i1, fr)
            ax += v * cx[i]
            ay += v * cy[i]
            az += v * cz[i]
        out[0, n] = ax
        out[1, n] = ay
        out[2, n] = az


@njit(parallel=True, **_KW)
def theta_neighbour_vec(vec, nx, ny, nz, cxi, cyi, czi, theta,
                        le_active, disp, out):
    """out[:, n] = sum_{i != 0} theta_i . vec(x + c_i)."""
    nsite = vec.shape[1]
    v0 = vec[0]
    v1 = vec[1]
    v2 = vec[2]
    for n in prange(nsite):
        x = n % nx
        t = n // nx
        y = t % ny
        z = t // ny
        ax = 0.0
        ay = 0.0
        az = 0.0
        for i in range(1, Q):
            i0, i1, fr = _addr(x + cxi[i], y + cyi[i], z + czi[i],
                               nx, ny, nz, le_active, disp)
            wx = _lerp(v0, i0, i1, fr)
            wy = _lerp(v1, i0, i1, fr)
            wz = _lerp(v2, i0, i1, fr)
            ax += theta[i, 0, 0] * wx + theta[i, 0, 1] * wy + theta[i, 0, 2] * wz
            ay += theta[i, 1, 0] * wx + theta[i, 1, 1] * wy + theta[i, 1, 2] * wz
            az += theta[i, 2, 0] * wx + theta[i, 2, 1] * wy + theta[i, 2, 2] * wz
        out[0, n] = ax
        out[1, n] = ay
        out[2, n] = az
