"""Moser flow on the sphere turning a conformal sphere map into an
area-preserving one.

Given the area density mu of a sphere map (source area per unit sphere
area), solve  Lap(Theta) = 1 - mu  on the sphere, then push every mapped
vertex along  Y_t = -grad(Theta) / ((1 - t) mu + t)  for t in [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .conformal import SphereMap, cotangent_matrix, spherical_triangle_areas
from .errors import DegenerateImage, FlipDetected, IncompatibleRHS, SolverFailure
from .meshio import TriMesh
from .spherelocate import SphereLocator

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True, eq=False)
class SphereDensity:
    per_triangle: np.ndarray
    per_vertex: np.ndarray
    sphere_areas: np.ndarray  # spherical triangle areas of the reference map
    reference: SphereMap

    def variance(self) -> float:
        return float(np.var(self.per_triangle))

    def weighted_mean(self) -> float:
        return float(np.sum(self.per_triangle * self.sphere_areas) / np.sum(self.sphere_areas))


def compute_area_density(source: TriMesh, smap: SphereMap) -> SphereDensity:
    sph = spherical_triangle_areas(smap.positions, source.triangles)
    if np.any(sph < 1e-14):
        bad = np.flatnonzero(sph < 1e-14)
        raise DegenerateImage(f"{len(bad)} spherical triangles with area < 1e-14",
                              triangles=bad[:10].tolist())
    src = source.face_areas()
    mu = src / sph
    mu *= FOUR_PI / np.sum(src)
    return SphereDensity(mu, _vertex_average(source.triangles, mu, sph, source.n_vertices),
                         sph, smap)


def _vertex_average(tri, values, weights, n):
    num = np.bincount(tri.ravel(), np.repeat(values * weights, 3), minlength=n)
    den = np.bincount(tri.ravel(), np.repeat(weights, 3), minlength=n)
    return num / den


def sphere_laplacian(smap: SphereMap) -> sp.csr_matrix:
    """Cotangent Laplacian (negative semi-definite) of the spherical
    triangulation, built on the chord triangles."""
    return -cotangent_matrix(smap.positions, smap.source.triangles)


def poisson_rhs(density: SphereDensity) -> np.ndarray:
    """Lumped M(1 - mu), with one third of each triangle's sphere area per corner."""
    tri = density.reference.source.triangles
    per = density.sphere_areas * (1.0 - density.per_triangle) / 3.0
    return np.bincount(tri.ravel(), np.repeat(per, 3), minlength=len(density.per_vertex))


def solve_sphere_poisson(smap: SphereMap, density: SphereDensity) -> np.ndarray:
    """Theta with Lap(Theta) = M(1 - mu), zero mean over vertex areas."""
    mismatch = 1.0 - density.weighted_mean()
    if abs(mismatch) > 1e-6:
        raise IncompatibleRHS(f"density mean differs from 1 by {mismatch:.3g}")
    n = len(density.per_vertex)
    rhs = poisson_rhs(density)
    if not np.any(np.abs(rhs) > 1e-15):
        return np.zeros(n)
    L = sphere_laplacian(smap)
    # pin vertex 0, then restore the zero mean
    theta = np.zeros(n)
    Lf = L[1:, 1:].tocsc()
    theta[1:] = sla.spsolve(Lf, rhs[1:])
    m = np.bincount(smap.source.triangles.ravel(), np.repeat(density.sphere_areas / 3.0, 3),
                    minlength=n)
    theta -= np.sum(m * theta) / np.sum(m)
    res = np.linalg.norm(L @ theta - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or res > 1e-8:
        raise SolverFailure(f"sphere Poisson residual {res:.3g}")
    return theta


def sphere_gradient(positions: np.ndarray, triangles: np.ndarray, theta: np.ndarray):
    """Per-triangle gradient of the piecewise-linear interpolant of theta on
    the chord triangles, plus its area-weighted vertex average projected to
    the tangent plane.  Returns (per_triangle, per_vertex)."""
    p = positions[triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area2 = np.linalg.norm(n, axis=1)
    nhat = n / area2[:, None]
    g = np.zeros((len(triangles), 3))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]  # edge opposite corner i
        g += theta[triangles[:, i], None] * np.cross(nhat, e)
    g /= area2[:, None]
    w = 0.5 * area2
    gv = np.zeros((len(positions), 3))
    for d in range(3):
        gv[:, d] = np.bincount(triangles.ravel(), np.repeat(g[:, d] * w, 3),
                               minlength=len(positions))
    wv = np.bincount(triangles.ravel(), np.repeat(w, 3), minlength=len(positions))
    gv /= wv[:, None]
    gv -= np.einsum("ij,ij->i", gv, positions)[:, None] * positions
    return g, gv


def moser_sphere_field(grad_at, mu_at, t):
    """Y_t = -grad(Theta) / ((1 - t) mu + t)."""
    return -grad_at / ((1.0 - t) * mu_at + t)[:, None]


class _SphereField:
    """grad(Theta) and mu on the reference sphere map, interpolated linearly
    at arbitrary unit vectors."""

    def __init__(self, smap, theta, density):
        self.tri = smap.source.triangles
        self.locator = SphereLocator(smap.positions, self.tri)
        _, self.grad_v = sphere_gradient(smap.positions, self.tri, theta)
        self.mu_v = density.per_vertex
        self.cache = None

    def __call__(self, q):
        start = self.cache if self.cache is not None else self.locator.seed(q)
        tri, w = self.locator.locate(q, start)
        self.cache = tri
        idx = self.tri[tri]
        g = np.einsum("ij,ijk->ik", w, self.grad_v[idx])
        mu = np.einsum("ij,ij->i", w, self.mu_v[idx])
        g -= np.einsum("ij,ij->i", g, q)[:, None] * q
        return g, mu


def integrate_area_flow(smap: SphereMap, theta: np.ndarray, density: SphereDensity,
                        steps: int = 20, retries: int = 3, area_log: list = None) -> SphereMap:
    """Advect the mapped vertices along the Moser field with explicit Euler.

    Positions are reprojected to the sphere after each step.  When a step
    flips a spherical triangle the whole integration restarts with half the
    time step, at most ``retries`` times.  ``area_log``, if given, receives
    the total spherical area after every accepted step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not np.any(theta):
        return SphereMap(smap.source, smap.positions.copy(), smap.puncture)
    field = _SphereField(smap, theta, density)
    tri = smap.source.triangles
    n_steps = int(steps)
    for attempt in range(retries + 1):
        p = smap.positions.copy()
        field.cache = None
        ok = True
        dt = 1.0 / n_steps
        for s in range(n_steps):
            t = s * dt
            g, mu = field(p)
            p = p + dt * moser_sphere_field(g, mu, t)
            p /= np.linalg.norm(p, axis=1, keepdims=True)
            areas = spherical_triangle_areas(p, tri)
            if np.any(areas <= 0) or abs(areas.sum() - FOUR_PI) > 1e-6:
                ok = False
                break
            if area_log is not None:
                area_log.append(float(areas.sum()))
        if ok:
            return SphereMap(smap.source, p, smap.puncture)
        log.info("area flow flipped a triangle with %d steps; retrying", n_steps)
        n_steps *= 2
    raise FlipDetected(f"area flow lost injectivity after {retries} retries")


def area_correct(smap: SphereMap, steps: int = 20, passes: int = 1) -> SphereMap:
    """Density, Poisson solve and flow, repeated ``passes`` times."""
    out = smap
    for _ in range(passes):
        density = compute_area_density(out.source, out)
        theta = solve_sphere_poisson(out, density)
        out = integrate_area_flow(out, theta, density, steps)
    return out
