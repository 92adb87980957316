"""Spectral and real-space analysis of scalar lattice fields.

Fields come in flat x-fastest layout or as (nz, ny, nx) blocks; FFT arrays
keep numpy's fftn index order, so axis 0 is k_z, axis 1 is k_y, axis 2 is
k_x. Wavenumbers are 2*pi*n/L per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ConfigError


@dataclass
class Spectrum3:
    """Structure factor on the dual lattice. s has shape (nz, ny, nx) in
    fft index order; v is the site count; t the timestep it was taken at."""
    s: np.ndarray
    dims: tuple
    t: int = 0

    @property
    def v(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz


@dataclass
class SlabProjection:
    """One slab of a 3-d field collapsed by ray accumulation (plain sum
    along the slab axis)."""
    image: np.ndarray
    axis: int
    lo: int
    hi: int


def order_parameter(lattice) -> np.ndarray:
    """Colour order parameter phi = sum_c q_c rho_c. Needs at least two
    charged components, otherwise phi carries no interface information."""
    charged = [s for s in lattice.config.components if s.colour_charge != 0.0]
    if len(charged) < 2:
        raise ConfigError(
            "order parameter needs two colour-charged components, "
            f"got {len(charged)}")
    return lattice.order_parameter()


def fluctuation(field: np.ndarray) -> np.ndarray:
    """phi' = phi - <phi>; the mean carries no structure."""
    field = np.asarray(field, dtype=np.float64)
    return field - field.mean()


def structure_factor(field, dims, timestep: int = 0) -> Spectrum3:
    """S(k) = |FT(phi')|^2 / V on the full k grid (shape nz, ny, nx).

    The transform runs at the native size, no padding, so lattice modes map
    one-to-one onto k bins. S at k=0 is exactly zero (mean removed).
    Parseval: sum_k S(k) = sum_x phi'(x)^2.
    """
    nx, ny, nz = dims
    phi = np.asarray(field, dtype=np.float64).reshape(nz, ny, nx)
    ft = np.fft.fftn(fluctuation(phi))
    s = (ft.real ** 2 + ft.imag ** 2) / (nx * ny * nz)
    s[0, 0, 0] = 0.0
    return Spectrum3(s, (nx, ny, nz), timestep)


def wavenumbers(dims):
    """(kx, ky, kz) 1-d arrays of angular wavenumbers per axis."""
    nx, ny, nz = dims
    return (2.0 * np.pi * np.fft.fftfreq(nx),
            2.0 * np.pi * np.fft.fftfreq(ny),
            2.0 * np.pi * np.fft.fftfreq(nz))


def k_magnitude(dims) -> np.ndarray:
    kx, ky, kz = wavenumbers(dims)
    return np.sqrt(kx[None, None, :] ** 2 + ky[None, :, None] ** 2
                   + kz[:, None, None] ** 2)


def mean_wavenumber(spectrum, dims=None) -> float:
    """First moment k1 = sum k S / sum S, the inverse characteristic
    length of the structure. Decreases as domains coarsen."""
    if isinstance(spectrum, Spectrum3):
        s, dims = spectrum.s, spectrum.dims
    else:
        s = np.asarray(spectrum)
    k = k_magnitude(dims)
    tot = s.sum()
    if tot <= 0.0:
        return 0.0
    return float((k * s).sum() / tot)


def radial_spectrum(spectrum, dims=None, nbins: int | None = None):
    """Shell-averaged S(|k|). Returns (k bin centres, mean S per bin)."""
    if isinstance(spectrum, Spectrum3):
        s, dims = spectrum.s, spectrum.dims
    else:
        s = np.asarray(spectrum)
    k = k_magnitude(dims).reshape(-1)
    sv = s.reshape(-1)
    if nbins is None:
        nbins = max(dims) // 2
    edges = np.linspace(0.0, k.max() * (1 + 1e-12), nbins + 1)
    idx = np.digitize(k, edges) - 1
    sums = np.bincount(idx, weights=sv, minlength=nbins)[:nbins]
    counts = np.bincount(idx, minlength=nbins)[:nbins]
    centres = 0.5 * (edges[:-1] + edges[1:])
    with np.errstate(invalid="ignore"):
        prof = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return centres, prof


def x_summed_spectrum(spectrum):
    """Collapse S(k) along k_x: X(k_y, k_z) = sum_kx S.

    Structure aligned with the x direction shows up as discrete off-centre
    peaks in X. Returns (X with rows k_z and columns k_y, X_max) where
    X_max = max(X)/nx normalises by the site count along the summed axis.
    Accepts a Spectrum3 or a bare (nz, ny, nx) array.
    """
    s = spectrum.s if isinstance(spectrum, Spectrum3) else np.asarray(spectrum)
    nx = s.shape[2]
    x = s.sum(axis=2)
    return x, float(x.max() / nx)


def count_peaks_2d(x: np.ndarray, min_frac: float = 0.1) -> int:
    """Distinct local maxima of a periodic 2-d map, ignoring bins below
    min_frac of the global maximum."""
    from scipy import ndimage
    if x.max() <= 0.0:
        return 0
    mx = ndimage.maximum_filter(x, size=3, mode="wrap")
    peaks = (x == mx) & (x >= min_frac * x.max())
    # plateaus count once
    lab, n = ndimage.label(peaks)
    return int(n)


def project_slabs(field, dims, axis: int = 0, thickness: int = 1):
    """Cut a 3-d field into slabs of `thickness` sites along `axis`
    (0=x, 1=y, 2=z) and collapse each by summing along that axis.
    The final slab is thinner when the box size is not a multiple.
    Slab images keep the remaining axes in (z, y, x) order."""
    nx, ny, nz = dims
    f3 = np.asarray(field, dtype=np.float64).reshape(nz, ny, nx)
    ax3 = 2 - axis
    if thickness < 1:
        raise ConfigError(f"slab thickness must be >= 1, got {thickness}")
    n_along = f3.shape[ax3]
    moved = np.moveaxis(f3, ax3, 0)
    return [SlabProjection(moved[i:i + thickness].sum(axis=0), axis,
                           i, min(i + thickness, n_along))
            for i in range(0, n_along, thickness)]


def write_table(path, header: str, *columns):
    """Tab-separated numeric table with one leading '# ' header line that
    names the columns."""
    cols = [np.asarray(c).reshape(-1) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ConfigError("table columns differ in length")
    with open(path, "w") as fh:
        fh.write("# " + header + "\n")
        for i in range(n):
            fh.write("\t".join(repr(float(c[i])) for c in cols) + "\n")
    return path


def read_table(path):
    """Counterpart of write_table: returns (header, columns as 2-d array)."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ConfigError(f"{path}: missing '#' header line")
        rows = [[float(v) for v in line.split("\t")]
                for line in fh if line.strip()]
    return header[1:].strip(), np.asarray(rows, dtype=np.float64)
