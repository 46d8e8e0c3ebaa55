"""Synthetic closed surfaces used for testing and demos."""

from __future__ import annotations

import numpy as np

from .meshio import TriMesh


def octahedron(radius=1.0) -> TriMesh:
    v = radius * np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
                          dtype=float)
    t = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                  [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return TriMesh(v, t)


def icosahedron() -> TriMesh:
    g = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
                  [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
                  [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1]], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    t = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return TriMesh(v, t)


def subdivide(mesh: TriMesh, project=True) -> TriMesh:
    """1-to-4 midpoint subdivision; optionally projects onto the unit sphere."""
    tri = mesh.triangles
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    verts = np.vstack([mesh.vertices, mid])
    if project:
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    nf = len(tri)
    m = mesh.n_vertices + inv.reshape(3, nf).T  # midpoints of (01, 12, 20)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    new = np.concatenate([
        np.stack([a, m[:, 0], m[:, 2]], 1),
        np.stack([m[:, 0], b, m[:, 1]], 1),
        np.stack([m[:, 2], m[:, 1], c], 1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], 1),
    ])
    return TriMesh(verts, new)


def icosphere(level=3, radius=1.0) -> TriMesh:
    mesh = icosahedron()
    for _ in range(level):
        mesh = subdivide(mesh)
    return TriMesh(mesh.vertices * radius, mesh.triangles)


def ellipsoid(axes=(2.0, 1.0, 1.0), level=4) -> TriMesh:
    s = icosphere(level)
    return TriMesh(s.vertices * np.asarray(axes, dtype=float), s.triangles)


def peanut(radius=1.0, offset=0.7, level=4) -> TriMesh:
    """Union of two balls centred at (+-offset, 0, 0), as a star-shaped
    surface about the origin.  Requires offset < radius."""
    s = icosphere(level)
    u = s.vertices
    r = np.zeros(len(u))
    for cx in (-offset, offset):
        p = np.array([cx, 0.0, 0.0])
        up = u @ p
        r = np.maximum(r, up + np.sqrt(up * up - p @ p + radius * radius))
    return TriMesh(u * r[:, None], s.triangles)


def box(n=4, size=(1.0, 1.0, 1.0)) -> TriMesh:
    """Closed triangulated box surface with ``n`` quads along every edge."""
    from .lattice import cube_surface

    verts, tris = cube_surface(n + 1)
    verts = verts / n * np.asarray(size, dtype=float)
    return TriMesh(verts, tris)


def torus(R=1.0, r=0.4, nu=24, nv=12) -> TriMesh:
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    u = 2 * np.pi * i.ravel() / nu
    v = 2 * np.pi * j.ravel() / nv
    verts = np.stack([(R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u),
                      r * np.sin(v)], 1)
    idx = lambda a, b: (a % nu) * nv + (b % nv)  # noqa: E731
    tris = []
    for a in range(nu):
        for b in range(nv):
            p, q, s_, t = idx(a, b), idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1)
            tris += [[p, q, s_], [p, s_, t]]
    return TriMesh(verts, np.array(tris))
