"""Conformal maps of closed genus-zero triangle meshes onto the unit sphere.

A triangle is punctured, the cotangent Dirichlet system with a dipole
source at the puncture is solved for planar coordinates, and the plane is
lifted to the sphere by inverse stereographic projection.  The puncture
ends up around the north pole.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import NumericalDegeneracy, SolverFailure
from .meshio import TriMesh

log = logging.getLogger(__name__)

MAX_COT = 1e8
RESIDUAL_TOL = 1e-8
# edge rings around the puncture re-solved in the antipodal chart
PUNCTURE_RINGS = 3


@dataclass(frozen=True, eq=False)
class CotangentSystem:
    D: sp.csr_matrix
    a: np.ndarray
    b: np.ndarray
    puncture: tuple  # vertex ids (A, B, C)
    triangle: int


@dataclass(frozen=True, eq=False)
class SphereMap:
    source: TriMesh
    positions: np.ndarray  # (V, 3) unit vectors
    puncture: int  # triangle id

    def spherical_areas(self) -> np.ndarray:
        return spherical_triangle_areas(self.positions, self.source.triangles)

    def flipped(self) -> np.ndarray:
        """Ids of triangles whose orientation disagrees with the total."""
        s = self.spherical_areas()
        return np.flatnonzero(np.sign(s) != np.sign(s.sum()))

    def is_injective(self) -> bool:
        return len(self.flipped()) == 0

    def puncture_centroid(self) -> np.ndarray:
        return self.source.vertices[self.source.triangles[self.puncture]].mean(axis=0)


def spherical_triangle_areas(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Signed solid angles of triangles with unit-vector corners."""
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) \
        + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def select_puncture_triangle(mesh: TriMesh, hint=None) -> int:
    """Nearest triangle centroid to ``hint``; without a hint, the triangle
    with the highest centroid. Ties go to the lowest index."""
    cen = mesh.centroids()
    if hint is None:
        return int(np.argmax(cen[:, 2]))
    d = np.sum((cen - np.asarray(hint, dtype=float)) ** 2, axis=1)
    return int(np.argmin(d))


def cotangent_matrix(vertices: np.ndarray, triangles: np.ndarray) -> sp.csr_matrix:
    """Symmetric cotangent stiffness matrix with zero row sums.

    Off-diagonal entries are -1/2 (cot R + cot S) for the angles opposite
    each edge.
    """
    nv = len(vertices)
    i0, i1, i2 = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    rows, cols, vals = [], [], []
    for a, b, c in ((i0, i1, i2), (i1, i2, i0), (i2, i0, i1)):
        u = vertices[a] - vertices[c]
        v = vertices[b] - vertices[c]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dot = np.einsum("ij,ij->i", u, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = dot / cross
        bad = ~np.isfinite(cot) | (np.abs(cot) > MAX_COT)
        if bad.any():
            raise NumericalDegeneracy(
                f"{int(bad.sum())} near-zero angles (|cot| > {MAX_COT:g})",
                triangles=np.flatnonzero(bad)[:10].tolist())
        rows += [a, b]
        cols += [b, a]
        vals += [-0.5 * cot, -0.5 * cot]
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(nv, nv)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def build_cotangent_system(mesh: TriMesh, puncture: int) -> CotangentSystem:
    if mesh.n_vertices <= 4:
        raise NumericalDegeneracy("conformal map needs more than four vertices")
    V = mesh.vertices
    A, B, C = (int(x) for x in mesh.triangles[puncture])
    D = cotangent_matrix(V, mesh.triangles)

    ab = V[B] - V[A]
    theta = float(ab @ (V[C] - V[A]) / (ab @ ab))
    E = V[A] + theta * ab
    len_ab = float(np.linalg.norm(ab))
    len_ce = float(np.linalg.norm(V[C] - E))
    a = np.zeros(mesh.n_vertices)
    a[A] = -1.0 / len_ab
    a[B] = 1.0 / len_ab
    # balanced dipole: entries sum to zero so Dy = b is consistent
    b = np.zeros(mesh.n_vertices)
    b[A] = (theta - 1.0) / len_ce
    b[B] = -theta / len_ce
    b[C] = 1.0 / len_ce
    return CotangentSystem(D, a, b, (A, B, C), int(puncture))


def solve_planar_coordinates(system: CotangentSystem):
    """Solve Dx = a, Dy = b with vertex C pinned to zero.

    Returns (x, y).  Raises SolverFailure when either relative residual on the
    full system exceeds 1e-8.
    """
    D = system.D
    n = D.shape[0]
    C = system.puncture[2]
    free = np.ones(n, bool)
    free[C] = False
    x = np.zeros(n)
    y = np.zeros(n)
    if np.any(system.a) or np.any(system.b):
        Df = D[free][:, free].tocsc()
        try:
            solve = sla.factorized(Df)
        except RuntimeError as exc:  # singular factor
            raise SolverFailure(f"cotangent system is singular: {exc}") from exc
        x[free] = solve(system.a[free])
        y[free] = solve(system.b[free])
    for name, sol, rhs in (("x", x, system.a), ("y", y, system.b)):
        r = planar_residual(D, sol, rhs)
        if not np.isfinite(r) or r > RESIDUAL_TOL:
            raise SolverFailure(f"planar solve residual for {name} is {r:.3g}")
    return x, y


def planar_residual(D, sol, rhs) -> float:
    nr = float(np.linalg.norm(rhs))
    res = float(np.linalg.norm(D @ sol - rhs))
    return res / nr if nr > 0 else res


def inverse_stereographic(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    p = np.stack([2 * x / (1 + r2), 2 * y / (1 + r2), 2 * r2 / (1 + r2) - 1], axis=-1)
    # exact renormalization removes the last-ulp drift of the formula
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def normalize_planar(mesh: TriMesh, x, y, puncture: int):
    """Fix the translation, scale and rotation left free by the solve.

    The source-area-weighted mean goes to the origin, the area-weighted
    median radius becomes 1 (half the area lands on each hemisphere), and
    the plane is rotated so the image best matches the source's own
    orientation seen from the puncture side.
    """
    w = mesh.vertex_areas()
    z = np.asarray(x) + 1j * np.asarray(y)
    z = z - np.sum(w * z) / w.sum()
    r = np.abs(z)
    order = np.argsort(r, kind="stable")
    cw = np.cumsum(w[order])
    med = r[order][np.searchsorted(cw, 0.5 * cw[-1])]
    if med > 0:
        z = z / med

    V = mesh.vertices
    centre = np.sum(w[:, None] * V, axis=0) / w.sum()
    axis = V[mesh.triangles[puncture]].mean(axis=0) - centre
    axis /= np.linalg.norm(axis)
    ref = np.eye(3)[int(np.argmin(np.abs(axis)))] if abs(axis[0]) > 0.9 else np.eye(3)[0]
    e1 = ref - (ref @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    s = (V - centre) @ e1 + 1j * ((V - centre) @ e2)
    rot = np.sum(w * s * np.conj(z))
    if abs(rot) > 0:
        z = z * (rot / abs(rot))
    return z.real, z.imag


def _ring_region(triangles, seeds, rings, n):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    adj = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    adj = ((adj + adj.T) > 0).astype(np.int8)
    inside = np.zeros(n, bool)
    inside[list(seeds)] = True
    for _ in range(rings):
        inside |= (adj @ inside.astype(np.int8)) > 0
    border = ((adj @ inside.astype(np.int8)) > 0) & ~inside
    return np.flatnonzero(inside), np.flatnonzero(border)


def repair_puncture(smap: SphereMap, rings: int = PUNCTURE_RINGS) -> SphereMap:
    """Re-solve the vertices near the puncture as a discrete harmonic map in
    the stereographic chart from the south pole, where the puncture
    neighbourhood is bounded.  The far-field of the planar solve distorts
    the triangles next to the puncture; this restores their shape.  The
    repair is dropped if it would add flipped triangles."""
    if rings <= 0:
        return smap
    mesh = smap.source
    tri = mesh.triangles
    region, border = _ring_region(tri, tri[smap.puncture], rings, mesh.n_vertices)
    if len(border) == 0 or len(region) + len(border) >= mesh.n_vertices:
        return smap
    p = smap.positions
    w = (p[:, 0] + 1j * p[:, 1]) / (1.0 + p[:, 2])
    D = cotangent_matrix(mesh.vertices, tri)
    Drr = D[region][:, region].tocsc()
    rhs = -(D[region][:, border] @ w[border])
    try:
        wr = sla.spsolve(Drr, rhs.real) + 1j * sla.spsolve(Drr, rhs.imag)
    except RuntimeError:
        return smap
    if not np.all(np.isfinite(wr)):
        return smap
    r2 = np.abs(wr) ** 2
    q = p.copy()
    q[region] = np.stack([2 * wr.real, 2 * wr.imag, 1.0 - r2], axis=1) / (1.0 + r2)[:, None]
    q[region] /= np.linalg.norm(q[region], axis=1, keepdims=True)
    out = SphereMap(mesh, q, smap.puncture)
    return out if len(out.flipped()) <= len(smap.flipped()) else smap


def conformal_to_sphere(mesh: TriMesh, hint=None, normalize=True,
                        repair: int = PUNCTURE_RINGS) -> SphereMap:
    puncture = select_puncture_triangle(mesh, hint)
    system = build_cotangent_system(mesh, puncture)
    x, y = solve_planar_coordinates(system)
    if normalize:
        x, y = normalize_planar(mesh, x, y, puncture)
    smap = repair_puncture(SphereMap(mesh, inverse_stereographic(x, y), puncture), repair)
    flips = smap.flipped()
    if len(flips):
        log.warning("conformal map has %d flipped spherical triangles", len(flips))
    return smap
