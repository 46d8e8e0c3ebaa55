import numpy as np
import pytest

from hexcube import shapes
from hexcube.meshio import TriMesh
from hexcube.shells import (SEPARATION, _energy_from_sums, chan_vese_energy, choose_seed,
                            cube_volume_fractions, evolve_chan_vese, extract_shells,
                            region_sdf, shell_separation, smooth_delta, smooth_heaviside)
from hexcube.voxel import BinaryVolume, voxelize


def test_heaviside_values():
    eps = 1.5
    assert smooth_heaviside(-2 * eps, eps) == 1.0
    assert smooth_heaviside(2 * eps, eps) == 0.0
    assert smooth_heaviside(0.0, eps) == pytest.approx(0.5)
    x = np.linspace(-eps, eps, 101)
    assert np.all(np.diff(smooth_heaviside(x, eps)) <= 0)


def test_delta_is_minus_heaviside_derivative():
    eps, d = 1.5, 1e-6
    x = np.linspace(-1.4, 1.4, 29)
    fd = -(smooth_heaviside(x + d, eps) - smooth_heaviside(x - d, eps)) / (2 * d)
    assert np.allclose(smooth_delta(x, eps), fd, atol=1e-6)
    # unit mass
    t = np.linspace(-eps, eps, 20001)
    assert np.trapezoid(smooth_delta(t, eps), t) == pytest.approx(1.0, abs=1e-6)


def test_energy_closed_form_matches_direct_sum():
    rng = np.random.default_rng(1)
    beta = rng.random((6, 7, 5)) < 0.4
    phi = rng.normal(scale=2.0, size=beta.shape)
    H = smooth_heaviside(phi, 1.5)
    b = beta.astype(float)
    c1 = (H * b).sum() / H.sum()
    c2 = ((1 - H) * b).sum() / (1 - H).sum()
    direct = (H * (b - c1) ** 2).sum() + ((1 - H) * (b - c2) ** 2).sum()
    assert chan_vese_energy(phi, b, 1.5) == pytest.approx(direct, rel=1e-12)
    assert _energy_from_sums(H.sum(), (H * b).sum(), b.size, b.sum()) == \
        pytest.approx(direct, rel=1e-12)


def test_cube_volume_fractions():
    # shell k of a (2N)^3 lattice spans 2(N-k)+1 of the 2N-1 cells per side
    assert np.allclose(cube_volume_fractions(2), [1.0, 1.0 / 27.0])
    assert np.allclose(cube_volume_fractions(3), [1.0, 27.0 / 125.0, 1.0 / 125.0])


def test_seed_is_deep_and_central():
    occ = np.zeros((21, 21, 21), bool)
    occ[2:19, 2:19, 2:19] = True
    seed, depth = choose_seed(occ)
    assert seed == (10, 10, 10)
    assert depth == 9.0


@pytest.fixture(scope="module")
def ball_trace():
    vol = voxelize(shapes.icosphere(3), 2.0 / 24)
    return evolve_chan_vese(vol)


def test_evolution_matches_occupancy(ball_trace):
    tr = ball_trace
    occ = tr.volume.occupancy
    assert tr.reached_volumes[-1] == occ.sum()
    assert np.all(np.isfinite(tr.arrival.values[occ]))
    final_phi = tr.snapshots[-1][1].values
    assert np.array_equal(final_phi < 0, occ)


def test_energy_decreases_between_reinitializations(ball_trace):
    e = ball_trace.energies
    cuts = [0] + list(ball_trace.reinit_steps) + [len(e) - 1]
    for a, b in zip(cuts[:-1], cuts[1:]):
        seg = e[a + 1:b + 1] if a else e[a:b + 1]
        assert np.all(np.diff(seg) <= 1e-9 * max(seg.max(), 1.0))
    assert e[-1] < e[0]


def _volume(mesh: TriMesh) -> float:
    return mesh.volume()


def test_shells_are_nested_spheres_with_matched_volumes():
    vol = voxelize(shapes.ellipsoid((2.0, 1.0, 1.0), level=4), 4.0 / 48)
    tr = evolve_chan_vese(vol)
    N = 3
    shells = extract_shells(tr, N)
    assert len(shells) == N
    for s in shells:
        assert s.euler_characteristic() == 2
    for outer, inner in zip(shells[:-1], shells[1:]):
        region = region_sdf(voxelize(outer, vol.spacing / 2).occupancy,
                            voxelize(outer, vol.spacing / 2).origin, vol.spacing / 2)
        assert shell_separation(inner, region) >= SEPARATION
    frac = np.array([_volume(s) for s in shells]) / _volume(shells[0])
    target = cube_volume_fractions(N)
    assert np.allclose(frac, target, rtol=0.25, atol=0.02)


def test_box_shells_follow_the_box():
    occ = np.zeros((40, 40, 40), bool)
    occ[4:36, 4:36, 4:36] = True
    tr = evolve_chan_vese(BinaryVolume(occ, np.zeros(3), 1.0))
    shells = extract_shells(tr, 2)
    inner = shells[1].vertices
    # an inner shell of a cube is itself close to a cube: its bounding box
    # is filled well beyond the 52% of an inscribed ball
    side = np.ptp(inner, axis=0)
    assert shells[1].volume() / np.prod(side) > 0.8
    assert np.ptp(side) / side.mean() < 0.05
