import numpy as np
import pytest

import oracles
from lbflow import geometry
from lbflow.geometry import GeometryError


def test_binarise_threshold_and_invert():
    grey = np.array([0, 100, 128, 200, 255], dtype=np.uint8)
    assert geometry.binarise(grey, 128.0).tolist() == [False, False, True, True, True]
    assert geometry.binarise(grey, 128.0, invert=True).tolist() == \
        [True, True, False, False, False]


def test_ingest_all_zero_is_fully_porous():
    dims = (4, 3, 2)
    raw = bytes(4 * 3 * 2)
    mask, poro = geometry.ingest_voxels(raw, dims, threshold=1.0)
    assert poro == 1.0
    assert not mask.any()


def test_ingest_all_solid_porosity_zero():
    dims = (3, 3, 3)
    raw = bytes([255]) * 27
    mask, poro = geometry.ingest_voxels(raw, dims, threshold=1.0)
    assert poro == 0.0
    assert mask.all()
    with pytest.raises(GeometryError, match="no pore space"):
        geometry.check_flow_geometry(mask, dims)


def test_ingest_16bit_little_endian():
    dims = (2, 1, 1)
    # values 300 and 10, threshold 128: first is rock
    raw = (300).to_bytes(2, "little") + (10).to_bytes(2, "little")
    mask, poro = geometry.ingest_voxels(raw, dims, 128.0, sample_width=2)
    assert mask.tolist() == [True, False]
    assert poro == 0.5


def test_ingest_wrong_payload_size():
    with pytest.raises(GeometryError, match="payload"):
        geometry.ingest_voxels(bytes(7), (2, 2, 2), 1.0)


def test_ingest_subsample_cuts_box():
    nx, ny, nz = 6, 5, 4
    grey = np.zeros((nz, ny, nx), dtype=np.uint8)
    grey[1:3, 1:4, 2:5] = 255
    mask, poro = geometry.ingest_voxels(
        grey.tobytes(), (nx, ny, nz), 128.0,
        subsample=((2, 5), (1, 4), (1, 3)))
    assert mask.shape == (3 * 3 * 2,)
    assert mask.all()
    assert poro == 0.0


def test_porosity_counts_voxels_exactly():
    rng = np.random.default_rng(3)
    mask = rng.random(5 * 6 * 7) < 0.3
    n_rock = int(np.count_nonzero(mask))
    assert geometry.porosity(mask) == 1.0 - n_rock / mask.size


def test_percolation_blocked_by_solid_plane():
    dims = (6, 4, 4)
    m3 = np.zeros((4, 4, 6), dtype=bool)
    m3[:, :, 0] = True   # solid yz-plane kills flow along x
    with pytest.raises(GeometryError, match="percolate"):
        geometry.check_flow_geometry(m3.reshape(-1), dims, axis=0)
    # but y remains open
    geometry.check_flow_geometry(m3.reshape(-1), dims, axis=1)


def test_percolation_blocked_by_interior_wall():
    # the pore slab still touches both x faces through the seam, so a
    # face-spanning test would wrongly pass; the winding test must not
    dims = (6, 5, 4)
    m3 = np.zeros((4, 5, 6), dtype=bool)
    m3[:, :, 2] = True
    with pytest.raises(GeometryError, match="percolate"):
        geometry.check_flow_geometry(m3.reshape(-1), dims, axis=0)
    geometry.check_flow_geometry(m3.reshape(-1), dims, axis=1)
    geometry.check_flow_geometry(m3.reshape(-1), dims, axis=2)


def test_percolation_single_tube():
    pore = np.zeros((4, 5, 6), dtype=bool)
    pore[1, 2, :] = True
    assert geometry.percolates(pore, 2)        # along x
    assert not geometry.percolates(pore, 1)    # not along y
    assert not geometry.percolates(pore, 0)    # not along z


def test_percolation_winding_helix():
    # a path that only closes after combining an x wrap with a y wrap
    pore = np.zeros((3, 4, 4), dtype=bool)
    for x in range(4):
        pore[0, x % 4, x] = True
        pore[0, (x + 1) % 4, x] = True
    assert geometry.percolates(pore, 2)


def test_percolates_matches_winding_oracle():
    rng = np.random.default_rng(5)
    for _ in range(40):
        pore = rng.random((4, 4, 4)) < rng.uniform(0.2, 0.8)
        for ax in range(3):
            assert geometry.percolates(pore, ax) == \
                oracles.percolates_brute(pore, ax)


def test_label_periodic_corner_blocks_merge():
    m3 = np.zeros((8, 8, 8), dtype=bool)
    for z in (0, 6):
        for y in (0, 6):
            for x in (0, 6):
                m3[z:z + 2, y:y + 2, x:x + 2] = True
    lab, n = geometry.label_periodic(m3)
    assert n == 1
    assert lab[m3].min() == lab[m3].max() == 1


def test_label_periodic_disjoint_blocks():
    m3 = np.zeros((8, 8, 8), dtype=bool)
    m3[1:3, 1:3, 1:3] = True
    m3[5:7, 5:7, 5:7] = True
    lab, n = geometry.label_periodic(m3)
    assert n == 2


@pytest.mark.parametrize("seed", range(6))
def test_label_periodic_matches_bfs_oracle(seed):
    rng = np.random.default_rng(seed)
    m3 = rng.random((5, 4, 6)) < 0.35
    lab, n = geometry.label_periodic(m3)
    olab, on = oracles.flood_fill_periodic(m3)
    assert n == on
    # same partition: labels agree up to renaming
    if n:
        pairs = set(zip(lab[m3].ravel().tolist(), olab[m3].ravel().tolist()))
        assert len(pairs) == n
        assert len({a for a, _ in pairs}) == n
        assert len({b for _, b in pairs}) == n


def test_min_pore_width_open_box():
    m3 = np.zeros((32, 32, 32), dtype=bool)
    assert geometry.min_pore_width(m3) == 32


def test_min_pore_width_slit():
    mask = geometry.slit_array((16, 8, 16), n_slits=2, slit_width=3)
    assert geometry.min_pore_width(mask.reshape(16, 8, 16)) == 3


def test_resolution_check_warns_below_five_sites():
    mask = geometry.slit_array((16, 8, 16), n_slits=2, slit_width=3)
    with pytest.warns(UserWarning, match="under-resolved"):
        rep = geometry.resolution_check(mask.reshape(16, 8, 16))
    assert rep["min_pore_width"] == 3
    assert not rep["resolved"]


def test_resolution_check_quiet_when_resolved():
    import warnings
    mask = geometry.slit_array((16, 12, 24), n_slits=2, slit_width=6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = geometry.resolution_check(mask.reshape(24, 12, 16))
    assert rep["resolved"]


@pytest.mark.parametrize("seed", range(5))
def test_min_pore_width_matches_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    m3 = rng.random((6, 7, 5)) < 0.4
    if (~m3).any():
        assert geometry.min_pore_width(m3) == oracles.min_pore_width_brute(m3)


def test_channel_walls_on_z_extremes():
    mask = geometry.channel((8, 4, 10))
    m3 = mask.reshape(10, 4, 8)
    assert m3[0].all() and m3[-1].all()
    assert not m3[1:-1].any()


def test_sphere_pack_percolates_and_reports_porosity():
    dims = (16, 16, 16)
    mask = geometry.sphere_pack(dims, n_spheres=12, radius=(2.0, 4.0), seed=7)
    geometry.check_flow_geometry(mask, dims, axis=0)
    poro = geometry.porosity(mask)
    assert 0.05 < poro < 1.0
    # counting oracle
    assert poro == 1.0 - np.count_nonzero(mask) / mask.size
