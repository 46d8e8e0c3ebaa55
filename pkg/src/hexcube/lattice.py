"""The structured cube complex: a (2N)^3 node lattice on [0, 1]^3 and its N
nested cubical shells obtained by peeling one node layer at a time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hexmesh import HexMesh
from .meshio import TriMesh


def node_index(i, j, k, n):
    return (np.asarray(i) * n + np.asarray(j)) * n + np.asarray(k)


def lattice_hexes(n: int) -> np.ndarray:
    """Connectivity of the (n-1)^3 cells of an n^3 node lattice, VTK order."""
    c = np.arange(n - 1)
    i, j, k = (a.ravel() for a in np.meshgrid(c, c, c, indexing="ij"))
    return np.stack([
        node_index(i, j, k, n), node_index(i + 1, j, k, n),
        node_index(i + 1, j + 1, k, n), node_index(i, j + 1, k, n),
        node_index(i, j, k + 1, n), node_index(i + 1, j, k + 1, n),
        node_index(i + 1, j + 1, k + 1, n), node_index(i, j + 1, k + 1, n),
    ], axis=1)


def lattice_nodes(n: int) -> np.ndarray:
    c = np.linspace(0.0, 1.0, n)
    g = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def cube_surface(m: int):
    """Boundary of an m^3 node block as a closed triangle mesh.

    Returns integer-coordinate vertices (lexicographic order) and outward
    oriented triangles.  Each quad is split along the diagonal whose sorted
    vertex pair is lexicographically smaller.
    """
    if m < 2:
        raise ValueError("a cube surface needs at least two nodes per side")
    c = np.arange(m)
    g = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    on = np.any((g == 0) | (g == m - 1), axis=1)
    verts = g[on]
    local = -np.ones(m ** 3, np.int64)
    local[np.flatnonzero(on)] = np.arange(len(verts))
    lid = lambda p: local[(p[..., 0] * m + p[..., 1]) * m + p[..., 2]]  # noqa: E731

    tris = []
    q = np.arange(m - 1)
    a, b = (x.ravel() for x in np.meshgrid(q, q, indexing="ij"))
    for axis in range(3):
        u, v = [d for d in range(3) if d != axis]
        for side, sign in ((0, -1.0), (m - 1, 1.0)):
            corners = np.zeros((len(a), 4, 3), np.int64)
            corners[:, :, axis] = side
            corners[:, 0, u], corners[:, 0, v] = a, b
            corners[:, 1, u], corners[:, 1, v] = a + 1, b
            corners[:, 2, u], corners[:, 2, v] = a + 1, b + 1
            corners[:, 3, u], corners[:, 3, v] = a, b + 1
            ids = lid(corners)
            # (u, v, axis) right-handed => quad normal is +axis
            right_handed = (u, v, axis) in ((0, 1, 2), (1, 2, 0), (2, 0, 1))
            if (sign > 0) != right_handed:
                ids = ids[:, ::-1]
            d02 = np.sort(ids[:, [0, 2]], axis=1)
            d13 = np.sort(ids[:, [1, 3]], axis=1)
            use02 = (d02[:, 0] < d13[:, 0]) | ((d02[:, 0] == d13[:, 0]) & (d02[:, 1] < d13[:, 1]))
            t1 = np.where(use02[:, None], ids[:, [0, 1, 2]], ids[:, [0, 1, 3]])
            t2 = np.where(use02[:, None], ids[:, [0, 2, 3]], ids[:, [1, 2, 3]])
            tris.append(t1)
            tris.append(t2)
    return verts.astype(np.float64), np.concatenate(tris)


@dataclass(frozen=True, eq=False)
class CubeShell:
    index: int  # 1 = outer boundary, N = innermost
    mesh: TriMesh  # vertices in [0, 1]^3
    node_ids: np.ndarray  # lattice node id of every mesh vertex
    offset: int  # lattice layer of the shell's minimum corner
    spacing: float

    @property
    def quads_per_side(self) -> int:
        return int(round(np.ptp(self.mesh.vertices[:, 0]) / self.spacing))

    def refined(self, factor: int):
        """The same cube surface with every quad split ``factor`` times per
        direction.  Returns the fine mesh and, for each coarse vertex, its
        index in the fine mesh."""
        factor = max(int(factor), 1)
        m = self.quads_per_side
        verts, tris = cube_surface(m * factor + 1)
        fine = TriMesh(verts * (self.spacing / factor) + self.offset * self.spacing, tris)
        coarse = np.rint((self.mesh.vertices - self.offset * self.spacing) / self.spacing)
        coarse = (coarse * factor).astype(np.int64)
        side = m * factor + 1
        lookup = -np.ones(side ** 3, np.int64)
        vi = verts.astype(np.int64)
        lookup[(vi[:, 0] * side + vi[:, 1]) * side + vi[:, 2]] = np.arange(len(verts))
        idx = lookup[(coarse[:, 0] * side + coarse[:, 1]) * side + coarse[:, 2]]
        return fine, idx


@dataclass(frozen=True, eq=False)
class CubeComplex:
    N: int
    nodes: np.ndarray
    hexes: np.ndarray
    node_shell: np.ndarray  # shell index 1..N per node
    hex_layer: np.ndarray  # 1..N, layer between shells k and k+1 (N = core)
    shells: tuple

    @property
    def n(self) -> int:
        return 2 * self.N

    @property
    def spacing(self) -> float:
        return 1.0 / (2 * self.N - 1)

    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_shell == 1)

    def hex_mesh(self, nodes=None) -> HexMesh:
        return HexMesh(self.nodes if nodes is None else nodes, self.hexes,
                       {"shell": self.hex_layer.copy()})


def build_cube_shells(N: int) -> CubeComplex:
    if int(N) != N or N < 1:
        raise ValueError(f"resolution N must be a positive integer, got {N!r}")
    N = int(N)
    n = 2 * N
    nodes = lattice_nodes(n)
    hexes = lattice_hexes(n)
    g = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"),
                 -1).reshape(-1, 3)
    node_shell = np.minimum(g, n - 1 - g).min(axis=1) + 1
    hc = g.reshape(n, n, n, 3)[:-1, :-1, :-1].reshape(-1, 3)
    hex_layer = np.minimum(hc, n - 2 - hc).min(axis=1) + 1

    h = 1.0 / (n - 1)
    shells = []
    for k in range(1, N + 1):
        m = n - 2 * (k - 1)
        verts, tris = cube_surface(m)
        lat = verts.astype(np.int64) + (k - 1)
        ids = node_index(lat[:, 0], lat[:, 1], lat[:, 2], n)
        shells.append(CubeShell(k, TriMesh(lat * h, tris), ids, k - 1, h))
    return CubeComplex(N, nodes, hexes, node_shell, hex_layer, tuple(shells))
