import numpy as np
import pytest

from hexcube.assembly import VolumetricMap
from hexcube.errors import IncompatibleRHS, InvertedCell
from hexcube.lattice import build_cube_shells
from hexcube.quality import volume_variance
from hexcube.volume_flow import (cell_laplacian, divergence_matrices, gradient_matrices,
                                 integrate_volume_flow, jacobian_field, moser_velocity,
                                 solve_divergence_potential, volume_correct)


def _stencil(m, h):
    """7-point Neumann Laplacian assembled cell by cell."""
    L = np.zeros((m ** 3, m ** 3))
    idx = lambda i, j, k: (i * m + j) * m + k  # noqa: E731
    for i in range(m):
        for j in range(m):
            for k in range(m):
                c = idx(i, j, k)
                for d in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    a, b, e = i + d[0], j + d[1], k + d[2]
                    if 0 <= a < m and 0 <= b < m and 0 <= e < m:
                        L[c, idx(a, b, e)] += 1.0 / h ** 2
                        L[c, c] -= 1.0 / h ** 2
    return L


def test_div_grad_is_the_seven_point_stencil():
    m, h = 4, 0.25
    G = gradient_matrices(m, h)
    Dv = divergence_matrices(m, h)
    composed = sum((d @ g).toarray() for d, g in zip(Dv, G))
    assert np.array_equal(composed, _stencil(m, h))
    assert np.array_equal(cell_laplacian(m, h).toarray(), _stencil(m, h))


def test_poisson_residual_and_gradient():
    m = 7
    h = 1.0 / m
    c = (np.arange(m) + 0.5) * h
    x = np.meshgrid(c, c, c, indexing="ij")[0]
    rhs = np.cos(np.pi * x)  # zero mean on the cell grid
    field = solve_divergence_potential(rhs.ravel() - rhs.mean(), h)
    L = cell_laplacian(m, h)
    r = rhs.ravel() - rhs.mean()
    assert np.linalg.norm(L @ field.p.ravel() - r) / np.linalg.norm(r) <= 1e-8
    # continuum solution -cos(pi x)/pi^2 has gradient sin(pi x)/pi
    gx = field.faces[0][1:-1, 3, 3]
    assert np.allclose(gx, np.sin(np.pi * np.arange(1, m) * h) / np.pi, rtol=0.05)


def test_incompatible_rhs():
    with pytest.raises(IncompatibleRHS):
        solve_divergence_potential(np.full(27, 0.01))


def test_moser_velocity_examples():
    v = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(moser_velocity(v, np.array([2.0]), 0.0), -v / 2.0)
    assert np.allclose(moser_velocity(v, np.array([2.0]), 1.0), -v)
    assert np.allclose(moser_velocity(v, np.array([3.0]), 0.5), -v / 2.0)


def _warped(N, a=0.08):
    cube = build_cube_shells(N)
    x = cube.nodes
    # a smooth warp that keeps the cube boundary in place
    s = np.prod(np.sin(np.pi * x), axis=1)
    return cube, VolumetricMap(cube, x + a * s[:, None] * np.array([1.0, 0.6, -0.4]))


def test_jacobian_field_mean_one():
    _, vmap = _warped(3)
    J = jacobian_field(vmap)
    assert J.mean() == pytest.approx(1.0, abs=1e-14)
    assert J.std() > 0.01


def test_inverted_cell_is_reported():
    cube = build_cube_shells(2)
    images = cube.nodes.copy()
    images[:, 0] *= -1.0  # mirror: every cell inverted
    with pytest.raises(InvertedCell):
        jacobian_field(VolumetricMap(cube, images))


def test_flow_reduces_variance_and_keeps_boundary():
    cube, vmap = _warped(4)
    out, info = integrate_volume_flow(vmap, steps=20)
    boundary = cube.node_shell == 1
    assert np.array_equal(out.images[boundary], vmap.images[boundary])
    assert info.variance_after < 0.2 * info.variance_before
    assert np.all(out.hex_mesh().volumes() > 0)
    assert out.hex_mesh().volumes().sum() == pytest.approx(vmap.hex_mesh().volumes().sum(),
                                                            rel=1e-12)


def test_restarts_never_increase_variance():
    _, vmap = _warped(4, a=0.12)
    v0 = volume_variance(vmap.hex_mesh())
    out, info = volume_correct(vmap, steps=20, restarts=4)
    assert info.variance_before == pytest.approx(v0)
    assert volume_variance(out.hex_mesh()) == pytest.approx(info.variance_after)
    assert info.variance_after <= v0


def test_uniform_map_is_left_alone():
    cube = build_cube_shells(3)
    out, info = integrate_volume_flow(VolumetricMap(cube, cube.nodes.copy()))
    assert np.array_equal(out.images, cube.nodes)
    assert info.steps == 0
