"""Voxel geometry handling: greyscale ingestion, thresholding, synthetic
porous samples, and pore-space diagnostics.

Obstacle masks are boolean arrays in the package's flat x-fastest site order
(True = rock). Greyscale voxel data is unsigned 8- or 16-bit little-endian,
x-fastest, matching the GEO1 container in storage.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .model import ConfigError

# pores narrower than this many sites are badly resolved by the lattice
MIN_PORE_SITES = 5


class GeometryError(ConfigError):
    pass


def binarise(grey: np.ndarray, threshold: float, invert: bool = False) -> np.ndarray:
    """Rock mask from greyscale values: rock where grey >= threshold
    (flipped by invert)."""
    mask = np.asarray(grey) >= threshold
    return (~mask if invert else mask)


def ingest_voxels(raw: bytes, dims, threshold: float, sample_width: int = 1,
                  invert: bool = False, subsample=None):
    """Binarise a raw little-endian greyscale voxel block.

    dims = (nx, ny, nz); subsample, if given, is ((x0, x1), (y0, y1),
    (z0, z1)) cutting a box out of the full volume (the usual workflow for
    carving a cube from a larger tomogram). Returns (mask flat, porosity).
    """
    nx, ny, nz = dims
    if sample_width not in (1, 2):
        raise GeometryError(f"sample width must be 1 or 2 bytes, got {sample_width}")
    n = nx * ny * nz
    if len(raw) != n * sample_width:
        raise GeometryError(
            f"voxel payload is {len(raw)} bytes, expected {n * sample_width} "
            f"for dims {dims} at {sample_width} byte(s)/sample")
    dt = np.uint8 if sample_width == 1 else np.dtype("<u2")
    grey = np.frombuffer(raw, dtype=dt).reshape(nz, ny, nx)
    if subsample is not None:
        (x0, x1), (y0, y1), (z0, z1) = subsample
        grey = grey[z0:z1, y0:y1, x0:x1]
    mask = binarise(grey, threshold, invert)
    porosity = 1.0 - mask.mean()
    return np.ascontiguousarray(mask).reshape(-1), float(porosity)


def porosity(mask: np.ndarray) -> float:
    return float(1.0 - np.asarray(mask, dtype=bool).mean())


def check_flow_geometry(mask: np.ndarray, dims, axis: int = 0):
    """Sanity checks before running flow through a sample: some pore space
    must exist and it must percolate along the flow axis (periodically).
    Raises GeometryError otherwise."""
    nx, ny, nz = dims
    m3 = np.asarray(mask, dtype=bool).reshape(nz, ny, nx)
    pore = ~m3
    if not pore.any():
        raise GeometryError("no pore space (porosity 0)")
    ax3 = 2 - axis  # axis given in (x,y,z); arrays are (z,y,x)
    if not percolates(pore, ax3):
        raise GeometryError(f"pore space does not percolate along axis {axis}")


def percolates(pore3: np.ndarray, ax3: int) -> bool:
    """True when the pore space wraps around the box along array axis ax3,
    i.e. contains a path connecting a site to its own periodic image.

    A face-to-face spanning test is not enough under periodic boundaries
    (a slab pinned between two walls touches both faces through the other
    seams without conducting). Instead: label the open box, then union the
    labels across each seam while tracking the net number of ax3 box
    crossings; a union that closes a cycle with inconsistent crossing
    counts is a path with nonzero winding, which is exactly percolation."""
    pore3 = np.asarray(pore3, dtype=bool)
    lab, nlab = ndimage.label(pore3)
    if nlab == 0:
        return False
    parent = np.arange(nlab + 1)
    shift = np.zeros(nlab + 1, dtype=np.int64)   # crossings to parent

    def find(a):
        path = []
        while parent[a] != a:
            path.append(a)
            a = parent[a]
        for u in reversed(path):   # nearest the root first
            p = parent[u]
            if p != a:
                shift[u] += shift[p]
            parent[u] = a
        return a

    wound = False

    def union(a, b, d):
        """Record that a's lift sits d boxes beyond b's along ax3."""
        nonlocal wound
        ra, rb = find(a), find(b)
        va = 0 if a == ra else shift[a]
        vb = 0 if b == rb else shift[b]
        if ra == rb:
            if va - vb != d:
                wound = True
            return
        parent[ra] = rb
        shift[ra] = vb + d - va

    for seam in range(3):
        lo = np.take(lab, 0, axis=seam)
        hi = np.take(lab, -1, axis=seam)
        both = (lo > 0) & (hi > 0)
        d = 1 if seam == ax3 else 0
        # crossing hi -> lo advances one periodic image along the seam axis
        for a, b in zip(hi[both].ravel(), lo[both].ravel()):
            union(int(b), int(a), d)
            if wound:
                return True
    return wound


def label_periodic(mask3: np.ndarray):
    """6-connected labelling with periodic wrap on all axes.

    scipy labels the open box; labels of components touching opposite faces
    are then merged with a union-find pass over the three seam planes.
    """
    mask3 = np.asarray(mask3, dtype=bool)
    lab, nlab = ndimage.label(mask3)
    if nlab == 0:
        return lab.astype(np.int64), 0
    parent = np.arange(nlab + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for axis in range(3):
        lo = np.take(lab, 0, axis=axis)
        hi = np.take(lab, -1, axis=axis)
        both = (lo > 0) & (hi > 0)
        for a, b in zip(lo[both].ravel(), hi[both].ravel()):
            union(int(a), int(b))

    # compact the merged ids to 1..n
    roots = np.array([find(i) for i in range(nlab + 1)])
    keep = np.unique(roots[1:])
    remap = np.zeros(nlab + 1, dtype=np.int64)
    remap[keep] = np.arange(1, keep.size + 1)
    return remap[roots[lab]], int(keep.size)


def _run_lengths(pore2: np.ndarray) -> np.ndarray:
    """Length of the maximal contiguous True run through each position of
    each row, with periodic wrap. pore2 has shape (lines, n)."""
    lines, n = pore2.shape
    dbl = np.concatenate([pore2, pore2], axis=1)
    ar = np.arange(2 * n)
    # consecutive True count ending at i (0 where False)
    last_false = np.maximum.accumulate(np.where(~dbl, ar[None, :], -1), axis=1)
    c_end = ar[None, :] - last_false
    rev = dbl[:, ::-1]
    first_false = np.maximum.accumulate(np.where(~rev, ar[None, :], -1), axis=1)
    c_start = (ar[None, :] - first_false)[:, ::-1]
    run = c_end[:, n:] + c_start[:, :n] - 1
    return np.clip(run, 0, n)


def min_pore_width(mask3: np.ndarray) -> int:
    """Narrowest pore passage in sites: for every pore site take the
    shortest periodic pore run through it along the three axes (a 1-d
    distance transform per axis), then minimise over sites. An open box
    reports its full edge length; an isolated pore voxel reports 1."""
    pore = ~np.asarray(mask3, dtype=bool)
    if not pore.any():
        return 0
    nz, ny, nx = pore.shape
    width = np.full((nz, ny, nx), np.iinfo(np.int64).max)
    for ax in range(3):
        moved = np.moveaxis(pore, ax, -1)
        runs = _run_lengths(moved.reshape(-1, moved.shape[-1]))
        runs = np.moveaxis(runs.reshape(moved.shape), -1, ax)
        width = np.minimum(width, runs)
    return int(width[pore].min())


def resolution_check(mask3: np.ndarray) -> dict:
    """Report the narrowest resolved pore and warn when it is below
    MIN_PORE_SITES (under-resolved flow channels give unreliable
    permeabilities)."""
    w = min_pore_width(mask3)
    report = {"min_pore_width": w, "resolved": w >= MIN_PORE_SITES}
    if not report["resolved"]:
        warnings.warn(
            f"narrowest pore spans {w:.1f} sites; below {MIN_PORE_SITES} "
            "the channel flow is under-resolved", stacklevel=2)
    return report


# -- synthetic samples --------------------------------------------------------


def channel(dims, axis: int = 0, width: int | None = None) -> np.ndarray:
    """Solid walls on the two z-extreme planes (or the planes normal to the
    last non-flow axis), a plane channel for Poiseuille tests. Returns flat
    rock mask. width selects the open gap; default leaves one wall pair."""
    nx, ny, nz = dims
    m3 = np.zeros((nz, ny, nx), dtype=bool)
    gap = nz - 2 if width is None else width
    if gap >= nz or gap < 1:
        raise GeometryError(f"channel width {gap} does not fit in nz={nz}")
    lo = (nz - gap) // 2
    m3[:lo] = True
    m3[lo + gap:] = True
    if axis == 2:
        raise GeometryError("channel flow axis must be x or y (walls are z-planes)")
    return m3.reshape(-1)


def slit_array(dims, n_slits: int, slit_width: int, axis: int = 0) -> np.ndarray:
    """Parallel slits of given width separated by rock, for permeability
    sweeps with a controlled pore size."""
    nx, ny, nz = dims
    m3 = np.ones((nz, ny, nx), dtype=bool)
    period = nz // n_slits
    if slit_width >= period:
        raise GeometryError("slits overlap: slit_width must be < nz / n_slits")
    for k in range(n_slits):
        z0 = k * period + (period - slit_width) // 2
        m3[z0:z0 + slit_width] = False
    if axis == 2:
        raise GeometryError("slit flow axis must be x or y")
    return m3.reshape(-1)


def sphere_pack(dims, n_spheres: int, radius, seed: int = 0,
                axis: int = 0) -> np.ndarray:
    """Overlapping random spheres (periodic), re-drawn until the pore space
    percolates along the flow axis. Radius may be a (lo, hi) range."""
    nx, ny, nz = dims
    zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx),
                             indexing="ij")
    if np.isscalar(radius):
        rlo = rhi = float(radius)
    else:
        rlo, rhi = radius
    for attempt in range(20):
        rng = np.random.default_rng(seed + attempt)
        m3 = np.zeros((nz, ny, nx), dtype=bool)
        for _ in range(n_spheres):
            cx, cy, cz = rng.uniform(0, nx), rng.uniform(0, ny), rng.uniform(0, nz)
            r = rng.uniform(rlo, rhi)
            dx = np.minimum(np.abs(xx - cx), nx - np.abs(xx - cx))
            dy = np.minimum(np.abs(yy - cy), ny - np.abs(yy - cy))
            dz = np.minimum(np.abs(zz - cz), nz - np.abs(zz - cz))
            m3 |= dx * dx + dy * dy + dz * dz <= r * r
        try:
            check_flow_geometry(m3.reshape(-1), dims, axis=axis)
            return m3.reshape(-1)
        except GeometryError:
            continue
    raise GeometryError(
        f"could not draw a percolating sphere pack in 20 attempts "
        f"(n={n_spheres}, r={radius})")
