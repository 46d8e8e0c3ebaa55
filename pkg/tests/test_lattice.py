import numpy as np
import pytest

from hexcube.hexmesh import HexMesh, corner_jacobians, hex_volumes, hex_volumes_divergence
from hexcube.lattice import build_cube_shells, lattice_hexes, lattice_nodes, node_index


@pytest.mark.parametrize("N", [1, 2, 3, 6])
def test_counts(N):
    cube = build_cube_shells(N)
    n = 2 * N
    assert len(cube.nodes) == n ** 3
    assert len(cube.hexes) == (n - 1) ** 3
    assert len(cube.shells) == N


def test_shell_sizes_and_partition():
    # shell k has m = 2N - 2(k-1) nodes per side: m^3 - (m-2)^3 surface nodes
    N = 4
    cube = build_cube_shells(N)
    seen = np.zeros(len(cube.nodes), int)
    for k, shell in enumerate(cube.shells, start=1):
        m = 2 * N - 2 * (k - 1)
        assert len(shell.node_ids) == m ** 3 - max(m - 2, 0) ** 3
        assert shell.mesh.euler_characteristic() == 2
        assert np.all(cube.node_shell[shell.node_ids] == k)
        assert np.allclose(shell.mesh.vertices, cube.nodes[shell.node_ids])
        seen[shell.node_ids] += 1
    assert np.all(seen == 1)


def test_node_numbering():
    n = 4
    nodes = lattice_nodes(n)
    h = 1.0 / (n - 1)
    assert np.allclose(nodes[node_index(1, 2, 3, n)], [h, 2 * h, 3 * h])


def test_unit_cube_cell_in_vtk_order():
    # bottom face counter-clockwise seen from +z, then the top face
    hexes = lattice_hexes(2)
    nodes = lattice_nodes(2)
    expected = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], float)
    assert np.array_equal(nodes[hexes[0]], expected)
    assert np.allclose(corner_jacobians(nodes[hexes][None, 0]), 1.0)


def test_lattice_volumes_sum_to_one():
    mesh = HexMesh(lattice_nodes(5), lattice_hexes(5))
    vol = mesh.volumes()
    assert np.allclose(vol, (1 / 4) ** 3, rtol=1e-14)
    assert vol.sum() == pytest.approx(1.0, rel=1e-14)


def test_affine_hex_volume_is_determinant():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    A *= np.sign(np.linalg.det(A))
    unit = lattice_nodes(2)[lattice_hexes(2)[0]]
    corners = (unit @ A.T)[None]
    assert hex_volumes(corners)[0] == pytest.approx(np.linalg.det(A), rel=1e-12)
    assert hex_volumes_divergence(corners)[0] == pytest.approx(np.linalg.det(A), rel=1e-12)


def test_refined_shell_keeps_coarse_vertices():
    shell = build_cube_shells(3).shells[0]
    fine, idx = shell.refined(4)
    assert np.allclose(fine.vertices[idx], shell.mesh.vertices)
    assert fine.euler_characteristic() == 2
    assert shell.quads_per_side * 4 == int(round(np.ptp(fine.vertices[:, 0]) / (shell.spacing / 4)))
