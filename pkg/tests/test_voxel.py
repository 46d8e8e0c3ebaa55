import numpy as np
import pytest

from hexcube import shapes
from hexcube.errors import NonWatertight, TopologyError
from hexcube.meshio import TriMesh
from hexcube.voxel import BinaryVolume, downsample, signed_distance, voxelize


def _inside_box(points, lo, hi):
    return np.all((points >= lo) & (points <= hi), axis=1)


def test_unit_cube_count_matches_brute_force():
    vol = voxelize(shapes.box(4), 0.1)
    idx = np.argwhere(np.ones(vol.dims, bool))
    centres = vol.origin + idx * vol.spacing
    brute = _inside_box(centres, 0.0, 1.0).reshape(vol.dims)
    assert brute.sum() == 1000
    assert 900 <= vol.count() <= 1100
    assert np.array_equal(vol.occupancy, brute)


def test_sphere_volume_consistency():
    mesh = shapes.icosphere(4)
    h = 0.05
    vol = voxelize(mesh, h)
    rel = abs(vol.volume() - mesh.volume()) / mesh.volume()
    assert rel <= 3 * h / 2.0


def test_ball_sdf_centre_and_interface():
    R, h = 1.0, 0.05
    vol = voxelize(shapes.icosphere(4, radius=R), h)
    sdf = signed_distance(vol)
    centres = vol.origin + np.indices(vol.dims).reshape(3, -1).T * h
    r = np.linalg.norm(centres, axis=1)
    centre = np.unravel_index(np.argmin(r), vol.dims)
    # the voxel nearest the centre is r.min() away from it
    assert sdf.values[centre] == pytest.approx(-(R - r.min()), abs=h)
    # voxels with a face neighbour on the other side sit next to the interface
    occ = vol.occupancy
    edge = np.zeros_like(occ)
    for ax in range(3):
        edge |= occ != np.roll(occ, 1, axis=ax)
    assert np.all(np.abs(sdf.values[edge]) <= h + 1e-12)
    assert np.all(sdf.values[occ] < 0) and np.all(sdf.values[~occ] > 0)


def test_two_pieces_are_rejected():
    a = shapes.icosphere(2)
    b = TriMesh(a.vertices + [3.0, 0.0, 0.0], a.triangles + a.n_vertices)
    both = TriMesh(np.vstack([a.vertices, b.vertices]), np.vstack([a.triangles, b.triangles]))
    with pytest.raises(TopologyError):
        voxelize(both, 0.1)


def test_open_surface_is_not_watertight():
    s = shapes.icosphere(3)
    keep = s.centroids()[:, 0] < 0.5  # a hole facing the +x rays
    with pytest.raises(NonWatertight):
        voxelize(TriMesh(s.vertices, s.triangles[keep]), 0.05)


def test_downsample_majority_and_origin():
    occ = np.zeros((8, 8, 8), bool)
    occ[2:6, 2:6, 2:6] = True
    coarse = downsample(BinaryVolume(occ, np.zeros(3), 1.0), 2)
    assert coarse.dims == (4, 4, 4)
    assert coarse.spacing == 2.0
    assert np.array_equal(np.argwhere(coarse.occupancy).min(axis=0), [1, 1, 1])
    assert coarse.count() == 8
    # the coarse voxel (0,0,0) covers fine voxels 0 and 1, centred at 0.5
    assert np.allclose(coarse.origin, 0.5)
