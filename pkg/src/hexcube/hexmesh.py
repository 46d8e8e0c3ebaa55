"""Hexahedral mesh container and per-element volume formulas.

Corner ordering follows VTK_HEXAHEDRON: corners 0-3 trace the bottom face
counter-clockwise seen from above, 4-7 the top face in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# outward-oriented faces in VTK corner numbering
HEX_FACES = np.array([
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
])

# for every corner, its three edge-neighbours ordered so that the frame is
# right-handed on an undistorted element
CORNER_NEIGHBOURS = np.array([
    [1, 3, 4],
    [2, 0, 5],
    [3, 1, 6],
    [0, 2, 7],
    [7, 5, 0],
    [4, 6, 1],
    [5, 7, 2],
    [6, 4, 3],
])


@dataclass(eq=False)
class HexMesh:
    nodes: np.ndarray  # (n, 3)
    hexes: np.ndarray  # (m, 8) VTK ordering
    cell_data: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.hexes = np.asarray(self.hexes, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_hexes(self) -> int:
        return len(self.hexes)

    def corners(self) -> np.ndarray:
        return self.nodes[self.hexes]

    def volumes(self) -> np.ndarray:
        return hex_volumes(self.corners())

    def with_nodes(self, nodes) -> "HexMesh":
        return HexMesh(np.array(nodes, dtype=np.float64), self.hexes, dict(self.cell_data))


def hex_volumes(corners: np.ndarray) -> np.ndarray:
    """Exact trilinear volumes from the 24-tetrahedron split.

    Each face is fanned into four triangles around its centroid and every
    triangle is joined to the element centroid.  ``corners`` has shape
    (m, 8, 3).
    """
    corners = np.asarray(corners, dtype=np.float64)
    centre = corners.mean(axis=1)
    vol = np.zeros(len(corners))
    for face in HEX_FACES:
        q = corners[:, face]
        fc = q.mean(axis=1)
        for i in range(4):
            a = q[:, i] - centre
            b = q[:, (i + 1) % 4] - centre
            c = fc - centre
            vol += np.einsum("ij,ij->i", c, np.cross(a, b))
    return vol / 6.0


_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def hex_volumes_divergence(corners: np.ndarray) -> np.ndarray:
    """Volume as one third of the flux of the position field through the
    six bilinear faces, integrated with a 2x2 Gauss rule (exact here)."""
    corners = np.asarray(corners, dtype=np.float64)
    vol = np.zeros(len(corners))
    for face in HEX_FACES:
        p0, p1, p2, p3 = (corners[:, j] for j in face)
        for u in _GAUSS:
            for v in _GAUSS:
                x = (1 - u) * (1 - v) * p0 + u * (1 - v) * p1 + u * v * p2 + (1 - u) * v * p3
                xu = (1 - v) * (p1 - p0) + v * (p2 - p3)
                xv = (1 - u) * (p3 - p0) + u * (p2 - p1)
                vol += 0.25 * np.einsum("ij,ij->i", x, np.cross(xu, xv))
    return vol / 3.0


def corner_jacobians(corners: np.ndarray, scaled: bool = True) -> np.ndarray:
    """Determinant of the three edge vectors at each corner, shape (m, 8).

    With ``scaled`` the edges are normalized first, giving values in [-1, 1].
    Zero-length edges give 0.
    """
    corners = np.asarray(corners, dtype=np.float64)
    base = corners[:, :, None, :]
    nb = corners[:, CORNER_NEIGHBOURS]  # (m, 8, 3, 3)
    e = nb - base
    if scaled:
        n = np.linalg.norm(e, axis=-1, keepdims=True)
        e = np.divide(e, n, out=np.zeros_like(e), where=n > 0)
    return np.linalg.det(e)
