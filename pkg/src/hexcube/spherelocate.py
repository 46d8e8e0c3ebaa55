"""Point location on a spherical triangulation.

A query direction q lies in triangle (a, b, c) when the ray through q hits
the flat chord triangle, i.e. when all three coefficients of
q = la*a + lb*b + lc*c are non-negative.  Normalized coefficients serve as
barycentric weights.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import LocationFailure

EPS = 1e-12


def triangle_neighbours(triangles: np.ndarray) -> np.ndarray:
    """opp[t, i] is the triangle sharing the edge opposite corner i of t."""
    nf = len(triangles)
    # edge opposite corner i joins corners (i+1, i+2)
    e = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]])
    key = np.sort(e, axis=1)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    pairs = order.reshape(-1, 2)
    opp = -np.ones(3 * nf, np.int64)
    opp[pairs[:, 0]] = pairs[:, 1] % nf
    opp[pairs[:, 1]] = pairs[:, 0] % nf
    return opp.reshape(3, nf).T


def ray_coefficients(q, a, b, c):
    """Unnormalized coefficients (la, lb, lc) of q in the basis (a, b, c)."""
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    la = np.einsum("ij,ij->i", q, np.cross(b, c))
    lb = np.einsum("ij,ij->i", a, np.cross(q, c))
    lc = np.einsum("ij,ij->i", a, np.cross(b, q))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.stack([la, lb, lc], axis=1) / det[:, None]


class SphereLocator:
    """Locates unit vectors in a fixed spherical triangulation."""

    def __init__(self, positions: np.ndarray, triangles: np.ndarray):
        self.positions = np.asarray(positions, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.neighbours = triangle_neighbours(self.triangles)
        c = self.positions[self.triangles].mean(axis=1)
        self.centres = c / np.linalg.norm(c, axis=1, keepdims=True)
        self._tree = cKDTree(self.centres)

    def coefficients(self, q, tri):
        p = self.positions[self.triangles[tri]]
        return ray_coefficients(q, p[:, 0], p[:, 1], p[:, 2])

    def seed(self, q):
        """Start triangles: the one whose centre is nearest each query."""
        q = np.asarray(q, dtype=float)
        n = np.linalg.norm(q, axis=1, keepdims=True)
        return self._tree.query(q / np.where(n > 0, n, 1.0))[1].astype(np.int64)

    def walk(self, q, start, max_steps=None):
        """Greedy walk; returns (triangle ids, normalized weights, found mask)."""
        q = np.asarray(q, dtype=float)
        tri = np.array(start, dtype=np.int64, copy=True)
        if max_steps is None:
            max_steps = 4 * int(np.sqrt(len(self.triangles))) + 20
        active = np.arange(len(q))
        lam = np.zeros((len(q), 3))
        found = np.zeros(len(q), bool)
        for _ in range(max_steps):
            if len(active) == 0:
                break
            l = self.coefficients(q[active], tri[active])
            ok = np.all(l >= -EPS, axis=1) & (l.sum(axis=1) > 0)
            done = active[ok]
            lam[done] = l[ok]
            found[done] = True
            mv = ~ok
            if not mv.any():
                active = active[:0]
                break
            worst = np.argmin(np.where(np.isfinite(l[mv]), l[mv], np.inf), axis=1)
            tri[active[mv]] = self.neighbours[tri[active[mv]], worst]
            active = active[mv]
        w = lam / np.where(found, lam.sum(axis=1), 1.0)[:, None]
        return tri, w, found

    def brute_force(self, q):
        """Scan every triangle; picks the lowest-index containing triangle."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        p = self.positions[self.triangles]
        tri = -np.ones(len(q), np.int64)
        w = np.zeros((len(q), 3))
        for i, qi in enumerate(q):
            l = ray_coefficients(np.broadcast_to(qi, (len(p), 3)), p[:, 0], p[:, 1], p[:, 2])
            ok = np.all(l >= -EPS, axis=1) & (l.sum(axis=1) > 0)
            hits = np.flatnonzero(ok)
            if len(hits) == 0:
                # numerically outside everything: take the least violated triangle
                hits = [int(np.argmax(np.min(np.nan_to_num(l, nan=-np.inf), axis=1)))]
            t = int(hits[0])
            tri[i] = t
            lt = np.clip(l[t], 0.0, None)
            w[i] = lt / lt.sum() if lt.sum() > 0 else np.full(3, 1 / 3)
        return tri, w

    def locate(self, q, start=None):
        """Containing triangle and barycentric weights for every query."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if start is None:
            start = self.seed(q)
        tri, w, found = self.walk(q, start)
        if not found.all():
            miss = np.flatnonzero(~found)
            tri[miss], w[miss] = self.brute_force(q[miss])
        if np.any(tri < 0):
            raise LocationFailure("query outside the spherical triangulation")
        return tri, w
