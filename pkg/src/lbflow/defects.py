"""Texture defect detection for slab projections of ordered mesophases.

Two detectors:

* regularity_detect: per-window periodicity score from the polar-resampled
  normalised autocorrelation (the Chetverikov-Hanbury feature). Windows
  whose score falls well below the median are flagged. Thorough but slow.
* mesh_detect: finds the pattern's intensity maxima, builds a Delaunay
  neighbour mesh over them and classifies mesh cells by edge-length
  regularity. Cheap, used for bulk scans.

Flagged 2-d masks from consecutive slabs stack back into a 3-d defect
volume; flood-fill labelling (periodic) cuts it into regions, and a greedy
nearest-centroid matcher tracks regions across output times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import Delaunay, cKDTree

from .geometry import label_periodic


@dataclass
class RegularityMap:
    positions: np.ndarray        # (n_windows, 2) upper-left corners (row, col)
    values: np.ndarray           # regularity score per window
    median: float
    threshold: float
    flags: np.ndarray            # True where (median - value) > threshold
    window: int
    step: int


@dataclass
class DefectRegion:
    label: int
    volume: int                  # site count
    centroid: np.ndarray         # (x, y, z), periodic circular mean
    voxels: np.ndarray = None    # (volume, 3) (x, y, z) site coordinates
    timestep: int = 0


@dataclass
class Track:
    ident: int
    steps: list = field(default_factory=list)   # [(timestep, DefectRegion)]

    @property
    def lifetime(self) -> int:
        return len(self.steps)

    def volumes(self):
        return [r.volume for _, r in self.steps]

    def displacements(self, dims):
        """Periodic centroid displacement between consecutive sightings."""
        out = []
        for (_, a), (_, b) in zip(self.steps, self.steps[1:]):
            out.append(periodic_distance(a.centroid, b.centroid, dims))
        return out


# -- regularity detector ---------------------------------------------------


def _window_regularity(w: np.ndarray, n_angles: int = 16) -> float:
    """Contrast of the first off-origin peak of the normalised
    autocorrelation, averaged over angular directions.

    Returns 0 for constant windows (no texture, no periodicity).
    """
    w = w - w.mean()
    norm = np.sum(w * w)
    if norm <= 0.0:
        return 0.0
    ft = np.fft.fft2(w)
    ac = np.fft.ifft2(ft.real ** 2 + ft.imag ** 2).real / norm
    n = w.shape[0]
    rmax = n // 2 - 1
    radii = np.arange(1, rmax + 1, dtype=np.float64)
    angles = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    contrasts = np.empty(n_angles)
    for ia, a in enumerate(angles):
        # bilinear sample of the (periodic) autocorrelation along the ray
        rr = radii * np.sin(a)
        cc = radii * np.cos(a)
        r0 = np.floor(rr).astype(int)
        c0 = np.floor(cc).astype(int)
        fr = rr - r0
        fc = cc - c0
        p = ((1 - fr) * (1 - fc) * ac[r0 % n, c0 % n]
             + (1 - fr) * fc * ac[r0 % n, (c0 + 1) % n]
             + fr * (1 - fc) * ac[(r0 + 1) % n, c0 % n]
             + fr * fc * ac[(r0 + 1) % n, (c0 + 1) % n])
        # walk out of the central peak to the first minimum, then to the
        # first maximum behind it; their difference is the peak contrast
        i = 0
        while i + 1 < p.size and p[i + 1] <= p[i]:
            i += 1
        j = i
        while j + 1 < p.size and p[j + 1] >= p[j]:
            j += 1
        contrasts[ia] = max(p[j] - p[i], 0.0) if j > i else 0.0
    return float(contrasts.mean())


def regularity_detect(image: np.ndarray, window: int = 32, step: int = 16,
                      threshold: float | None = None) -> RegularityMap:
    """Flag windows whose periodicity score drops below the field median.

    threshold defaults to 0.3 * median score. The score is built from the
    normalised autocorrelation, so rescaling the image intensity leaves
    values, median and flags unchanged.
    """
    image = np.asarray(image, dtype=np.float64)
    if window > min(image.shape):
        raise ValueError(f"window {window} exceeds image dims {image.shape}")
    pos = []
    vals = []
    for r in range(0, image.shape[0] - window + 1, step):
        for c in range(0, image.shape[1] - window + 1, step):
            pos.append((r, c))
            vals.append(_window_regularity(image[r:r + window, c:c + window]))
    values = np.asarray(vals)
    med = float(np.median(values))
    thr = 0.3 * med if threshold is None else threshold
    flags = (med - values) > thr
    return RegularityMap(np.asarray(pos), values, med, thr, flags,
                         window, step)


def regularity_mask(rmap: RegularityMap, shape) -> np.ndarray:
    """Paint flagged windows into a full-resolution boolean mask."""
    mask = np.zeros(shape, dtype=bool)
    for (r, c), bad in zip(rmap.positions, rmap.flags):
        if bad:
            mask[r:r + rmap.window, c:c + rmap.window] = True
    return mask


# -- mesh detector ----------------------------------------------------------


def estimate_spacing(image: np.ndarray) -> float:
    """Dominant pattern period in pixels, from the strongest non-dc mode
    of the 2-d power spectrum. Large images are cropped to 256^2: the
    period is a local property and the crop keeps the transform cheap."""
    im = np.asarray(image, dtype=np.float64)[:256, :256]
    im = im - im.mean()
    p = np.abs(np.fft.fft2(im)) ** 2
    p[0, 0] = 0.0
    idx = np.unravel_index(np.argmax(p), p.shape)
    fr = np.fft.fftfreq(p.shape[0])[idx[0]]
    fc = np.fft.fftfreq(p.shape[1])[idx[1]]
    f = np.hypot(fr, fc)
    if f == 0.0:
        return float(min(image.shape))
    return float(1.0 / f)


def mesh_detect(image: np.ndarray, spacing: float | None = None,
                length_tol: float = 0.35) -> np.ndarray:
    """Binary defect mask from mesh-cell regularity. Treats the image as
    periodic (slab projections wrap).

    Intensity maxima of the smoothed image form the pattern's lattice
    points. A Delaunay mesh over the points (tiled across the periodic
    seam) gives each point its natural neighbours; a point whose shortest
    mesh edges deviate from the global median spacing sits in a broken
    cell. Pixels far from any lattice point (holes in the dot pattern)
    are defects too.
    """
    image = np.asarray(image, dtype=np.float64)
    nr, nc = image.shape
    if spacing is None:
        spacing = estimate_spacing(image)
    spacing = float(min(max(spacing, 2.0), min(nr, nc) / 2))
    smooth = ndimage.gaussian_filter(image, sigma=spacing / 6.0, mode="wrap")
    foot = max(int(round(spacing * 0.6)), 3)
    mx = ndimage.maximum_filter(smooth, size=foot, mode="wrap")
    pts_mask = (smooth == mx) & (smooth > smooth.mean())
    pts = np.argwhere(pts_mask).astype(np.float64)
    mask = np.zeros(image.shape, dtype=bool)
    if len(pts) < 4:
        mask[:] = True
        return mask

    # periodic images of the point set within a margin of the box; the
    # untiled copy comes first so central points keep indices 0..P-1
    margin = 2.5 * spacing
    shifts = [(dr * nr, dc * nc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)
              if (dr, dc) != (0, 0)]
    ghost = np.concatenate([pts + np.array(s) for s in shifts])
    keep = ((ghost[:, 0] > -margin) & (ghost[:, 0] < nr + margin)
            & (ghost[:, 1] > -margin) & (ghost[:, 1] < nc + margin))
    tiled = np.concatenate([pts, ghost[keep]])

    # holes: pixels farther from every lattice point than a cell allows
    # (queried on a strided grid, then painted back at full resolution)
    tree = cKDTree(tiled)
    q = max(1, int(spacing // 4))
    gr, gc = np.mgrid[0:nr:q, 0:nc:q]
    grid = np.column_stack([gr.ravel(), gc.ravel()]).astype(np.float64)
    dist, _ = tree.query(grid, k=1)
    far = dist.reshape(gr.shape) > 0.9 * spacing
    mask |= np.kron(far, np.ones((q, q), dtype=bool))[:nr, :nc]

    # cell regularity: per central point, the three shortest incident mesh
    # edges should all sit near the lattice constant (three, not more: a
    # point bordering a hole keeps its intact sides and must not be blamed
    # for the hole, which the distance test already covers)
    tri = Delaunay(tiled)
    ii = tri.simplices.ravel()
    jj = np.roll(tri.simplices, -1, axis=1).ravel()
    lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
    keys = np.unique(lo.astype(np.int64) * len(tiled) + hi)
    edges = np.stack([keys // len(tiled), keys % len(tiled)], axis=1)
    lens = np.linalg.norm(tiled[edges[:, 0]] - tiled[edges[:, 1]], axis=1)
    ncent = len(pts)
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    both = np.concatenate([lens, lens])
    sel = ends < ncent
    ends, both = ends[sel], both[sel]
    order = np.lexsort((both, ends))
    ends, both = ends[order], both[order]
    starts = np.flatnonzero(np.r_[True, ends[1:] != ends[:-1]])
    counts = np.diff(np.r_[starts, ends.size])
    rank = np.arange(ends.size) - np.repeat(starts, counts)
    keep = rank < 3
    shortest = np.full((ncent, 3), np.inf)
    shortest[ends[keep], rank[keep]] = both[keep]
    finite = shortest[np.isfinite(shortest)]
    med = np.median(finite) if finite.size else spacing
    dev = np.abs(shortest - med) > length_tol * med
    incomplete = ~np.isfinite(shortest).all(axis=1)
    bad_pts = np.flatnonzero((~incomplete & dev.any(axis=1)) | incomplete)
    r = int(round(0.75 * spacing))
    span = np.arange(-r, r + 1)
    for p in pts[bad_pts]:
        rows = (int(p[0]) + span) % nr
        cols = (int(p[1]) + span) % nc
        mask[np.ix_(rows, cols)] = True
    return mask


# -- 3-d reconstruction, labelling, tracking --------------------------------


def reconstruct_defects(masks, dims, axis: int = 0, thickness: int = 1) -> np.ndarray:
    """Stack per-slab defect masks back into a 3-d boolean volume
    (flat x-fastest). Each mask fills its slab's full thickness."""
    nx, ny, nz = dims
    vol = np.zeros((nz, ny, nx), dtype=bool)
    ax3 = 2 - axis
    moved = np.moveaxis(vol, ax3, 0)
    n_along = moved.shape[0]
    lo = 0
    for m in masks:
        hi = min(lo + thickness, n_along)
        moved[lo:hi] = m[None, :, :]
        lo = hi
    return vol.reshape(-1)


def periodic_centroid(voxels: np.ndarray, dims) -> np.ndarray:
    """Circular-mean centroid (x, y, z) of voxel coordinates, correct for
    regions wrapping around the periodic box."""
    out = np.empty(3)
    for a, n in enumerate(dims):
        theta = voxels[:, a] * (2.0 * np.pi / n)
        ang = np.arctan2(np.sin(theta).mean(), np.cos(theta).mean())
        out[a] = (ang * n / (2.0 * np.pi)) % n
    return out


def periodic_distance(a, b, dims) -> float:
    d = 0.0
    for i, n in enumerate(dims):
        dx = abs(a[i] - b[i])
        dx = min(dx, n - dx)
        d += dx * dx
    return float(np.sqrt(d))


def flood_fill_regions(mask, dims, periodic: bool = True, timestep: int = 0,
                       min_volume: int = 1):
    """Split a defect mask into 6-connected regions. With periodic=True,
    regions touching opposite faces are one region."""
    nx, ny, nz = dims
    m3 = np.asarray(mask, dtype=bool).reshape(nz, ny, nx)
    if periodic:
        lab, n = label_periodic(m3)
    else:
        lab, n = ndimage.label(m3)
    regions = []
    for k in range(1, n + 1):
        zz, yy, xx = np.nonzero(lab == k)
        if xx.size < min_volume:
            continue
        vox = np.column_stack([xx, yy, zz])
        regions.append(DefectRegion(
            label=k, volume=int(xx.size),
            centroid=periodic_centroid(vox, dims),
            voxels=vox, timestep=timestep))
    return regions


def match_regions(prev, curr, dims, volume_ratio: float = 3.0,
                  max_distance: float | None = None):
    """Greedy nearest-centroid assignment between two region lists.

    Candidate pairs sorted by periodic centroid distance are accepted
    while both ends are unmatched, the distance is within max_distance
    (default: a quarter of the box diagonal) and the volumes are within
    volume_ratio of each other. Returns a list of (i_prev, i_curr).
    """
    if max_distance is None:
        max_distance = 0.25 * float(np.linalg.norm(dims))
    cand = []
    for i, a in enumerate(prev):
        for j, b in enumerate(curr):
            big = max(a.volume, b.volume)
            small = max(min(a.volume, b.volume), 1)
            if big / small > volume_ratio:
                continue
            d = periodic_distance(a.centroid, b.centroid, dims)
            if d <= max_distance:
                cand.append((d, i, j))
    cand.sort(key=lambda t: (t[0], t[1], t[2]))
    used_i, used_j, pairs = set(), set(), []
    for d, i, j in cand:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        pairs.append((i, j))
    return pairs


def track_defects(frames, dims, volume_ratio: float = 3.0,
                  max_distance: float | None = None):
    """Link region lists over time into tracks.

    frames: [(timestep, [DefectRegion, ...]), ...] in time order.
    Unmatched regions open new tracks; tracks with no match terminate.
    Returns (tracks, counts) with counts the region count per frame.
    """
    tracks = []
    open_tracks = {}   # index into current frame -> Track
    counts = []
    next_id = 0
    for fi, (t, regions) in enumerate(frames):
        counts.append((t, len(regions)))
        if fi == 0:
            prev_regions = regions
            for j, r in enumerate(regions):
                tr = Track(next_id, [(t, r)])
                next_id += 1
                tracks.append(tr)
                open_tracks[j] = tr
            continue
        pairs = match_regions(prev_regions, regions, dims,
                              volume_ratio, max_distance)
        new_open = {}
        matched_j = set()
        for i, j in pairs:
            tr = open_tracks.get(i)
            if tr is None:
                continue
            tr.steps.append((t, regions[j]))
            new_open[j] = tr
            matched_j.add(j)
        for j, r in enumerate(regions):
            if j not in matched_j:
                tr = Track(next_id, [(t, r)])
                next_id += 1
                tracks.append(tr)
                new_open[j] = tr
        open_tracks = new_open
        prev_regions = regions
    return tracks, counts


def write_regions_table(path, regions):
    """Tab-separated region list: one region per line, '#' header names
    the columns."""
    with open(path, "w") as fh:
        fh.write("# timestep\tlabel\tvolume\tcx\tcy\tcz\n")
        for r in regions:
            fh.write(f"{r.timestep}\t{r.label}\t{r.volume}"
                     f"\t{r.centroid[0]:.6g}\t{r.centroid[1]:.6g}"
                     f"\t{r.centroid[2]:.6g}\n")
    return path
