"""Moser flow on the unit cube equalizing the Jacobian of a volumetric map.

With J the per-cell Jacobian of the map f (mean 1), solve the Neumann
problem  Lap(p) = 1 - J  on the cube cells, set v = grad(p) and
X_t = -v / ((1 - t) J + t).  The flow g_t of X_t satisfies det(Dg_1) = J,
so f o g_1^-1 has uniform Jacobian.  Integrating X_t backwards from t = 1
to t = 0, starting at the lattice nodes, yields g_1^-1 at the nodes
directly; f is then resampled there by trilinear interpolation.

The potential lives on cell centres and its gradient on cell faces, so the
discrete divergence of the gradient is exactly the 7-point Laplacian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy import ndimage

from .assembly import VolumetricMap
from .errors import FlipDetected, IncompatibleRHS, InvertedCell, SolverFailure
from .hexmesh import corner_jacobians, hex_volumes
from .quality import volume_variance

log = logging.getLogger(__name__)


def jacobian_field(vmap: VolumetricMap, density_model=None) -> np.ndarray:
    """Per-cell image volume over cube cell volume, optionally weighted by
    a pulled-back model density, normalized to mean 1."""
    vol = vmap.hex_mesh().volumes()
    bad = np.flatnonzero(~(vol > 0))
    if len(bad):
        raise InvertedCell(f"{len(bad)} cells with non-positive volume",
                           cells=bad[:20].tolist())
    jac = vol / vmap.cube.spacing ** 3
    if density_model is not None:
        jac = jac * np.asarray(density_model, dtype=float)
    return jac / jac.mean()


def _axis_diff(m: int) -> sp.csr_matrix:
    """(m+1) x m: interior face value = right cell - left cell; boundary rows 0."""
    d = sp.lil_matrix((m + 1, m))
    for i in range(1, m):
        d[i, i - 1] = -1.0
        d[i, i] = 1.0
    return d.tocsr()


def gradient_matrices(m: int, h: float):
    """Face gradients of a cell field on an m^3 cell grid, one matrix per
    axis; boundary faces carry zero flux."""
    I = sp.identity(m, format="csr")
    D = _axis_diff(m) / h
    return (sp.kron(sp.kron(D, I), I).tocsr(),
            sp.kron(sp.kron(I, D), I).tocsr(),
            sp.kron(sp.kron(I, I), D).tocsr())


def divergence_matrices(m: int, h: float):
    """Cell divergence of the three face fields (negative transposes of the
    gradients)."""
    return tuple((-G.T).tocsr() for G in gradient_matrices(m, h))


def cell_laplacian(m: int, h: float) -> sp.csr_matrix:
    """7-point Neumann Laplacian on an m^3 cell grid."""
    G = gradient_matrices(m, h)
    Dv = divergence_matrices(m, h)
    return sum(d @ g for d, g in zip(Dv, G)).tocsr()


@dataclass(eq=False)
class PotentialField:
    p: np.ndarray  # (m, m, m) cell potential
    faces: tuple  # face gradients, shapes (m+1,m,m), (m,m+1,m), (m,m,m+1)
    h: float

    @property
    def m(self) -> int:
        return self.p.shape[0]

    def at(self, points) -> np.ndarray:
        """grad(p) at points of [0, 1]^3, interpolating each component on
        its staggered face grid."""
        x = np.asarray(points, dtype=float) / self.h
        out = np.empty_like(x)
        for d in range(3):
            c = x - 0.5
            c[:, d] = x[:, d]
            out[:, d] = ndimage.map_coordinates(self.faces[d], c.T, order=1, mode="nearest")
        return out

    def at_nodes(self) -> np.ndarray:
        """grad(p) at lattice nodes with every component zeroed on the boundary."""
        n = self.m + 1
        c = np.arange(n) * self.h
        g = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
        v = self.at(g)
        idx = np.arange(n)
        ii, jj, kk = np.meshgrid(idx, idx, idx, indexing="ij")
        bnd = (np.minimum.reduce([ii, jj, kk, n - 1 - ii, n - 1 - jj, n - 1 - kk]) == 0)
        v[bnd.ravel()] = 0.0
        return v


def solve_divergence_potential(rhs: np.ndarray, h: float = None) -> PotentialField:
    """Potential p with Lap(p) = rhs (Neumann), returned with its face gradient."""
    rhs = np.asarray(rhs, dtype=float)
    m = int(round(len(rhs.ravel()) ** (1.0 / 3.0)))
    if m ** 3 != rhs.size:
        raise ValueError("right-hand side must live on a cubic cell grid")
    if h is None:
        h = 1.0 / m
    r = rhs.ravel()
    scale = max(np.abs(r).max(), 1.0)
    if abs(r.mean()) > 1e-9 * scale:
        raise IncompatibleRHS(f"right-hand side has mean {r.mean():.3g}")
    r = r - r.mean()
    L = cell_laplacian(m, h)
    p = np.zeros(m ** 3)
    if np.any(r):
        p[1:] = sla.spsolve(L[1:, 1:].tocsc(), r[1:])
        p -= p.mean()
        nr = np.linalg.norm(r)
        res = np.linalg.norm(L @ p - r) / nr
        if not np.isfinite(res) or res > 1e-8:
            raise SolverFailure(f"cell Poisson residual {res:.3g}")
    G = gradient_matrices(m, h)
    shapes = ((m + 1, m, m), (m, m + 1, m), (m, m, m + 1))
    faces = tuple((g @ p).reshape(s) for g, s in zip(G, shapes))
    return PotentialField(p.reshape(m, m, m), faces, h)


def moser_velocity(v: np.ndarray, jac: np.ndarray, t: float) -> np.ndarray:
    """X_t = -v / ((1 - t) J + t), pointwise."""
    return -np.asarray(v) / ((1.0 - t) * np.asarray(jac) + t)[:, None]


def cell_to_points(cell_values: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    """Trilinear interpolation of a cell-centred field, clamped at the
    boundary; at lattice nodes this is the average of the incident cells."""
    c = np.asarray(points, dtype=float) / h - 0.5
    return ndimage.map_coordinates(cell_values, c.T, order=1, mode="nearest")


def resample_map(images: np.ndarray, n: int, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of the node images at cube points."""
    h = 1.0 / (n - 1)
    g = images.reshape(n, n, n, 3)
    c = np.asarray(points, dtype=float) / h
    return np.stack([ndimage.map_coordinates(g[..., d], c.T, order=1, mode="nearest")
                     for d in range(3)], axis=1)


@dataclass
class FlowInfo:
    variance_before: float
    variance_after: float
    steps: int
    retries: int
    restarts: int = 0
    flagged: bool = False  # flips could not be avoided; best iterate returned


def _inverse_positions(field, jac, n, boundary, steps):
    h = 1.0 / (n - 1)
    c = np.arange(n) * h
    y = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    free = ~boundary
    dt = 1.0 / steps
    for s in range(steps):
        t = 1.0 - s * dt
        yf = y[free]
        X = moser_velocity(field.at(yf), cell_to_points(jac, yf, h), t)
        y[free] = np.clip(yf - dt * X, 0.0, 1.0)
    return y


def _n_inverted(corners) -> int:
    return int(np.sum(corner_jacobians(corners, scaled=False).min(axis=1) <= 0))


def integrate_volume_flow(vmap: VolumetricMap, steps: int = 20, retries: int = 3):
    """One Moser pass.  Returns (new map, FlowInfo)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cube = vmap.cube
    n, h = cube.n, cube.spacing
    m = n - 1
    jac = jacobian_field(vmap).reshape(m, m, m)
    var0 = volume_variance(vmap.hex_mesh())
    if np.allclose(jac, 1.0, rtol=0, atol=1e-14):
        return vmap.with_images(vmap.images.copy()), FlowInfo(var0, var0, 0, 0)
    field = solve_divergence_potential((1.0 - jac).ravel(), h)
    boundary = cube.node_shell == 1
    base_inv = _n_inverted(vmap.hex_mesh().corners())
    n_steps = int(steps)
    for attempt in range(retries + 1):
        y = _inverse_positions(field, jac, n, boundary, n_steps)
        y_ok = np.all(hex_volumes(y[cube.hexes]) > 0)
        images = resample_map(vmap.images, n, y)
        images[boundary] = vmap.images[boundary]
        out = vmap.with_images(images)
        if y_ok and _n_inverted(out.hex_mesh().corners()) <= base_inv:
            var1 = volume_variance(out.hex_mesh())
            return out, FlowInfo(var0, var1, n_steps, attempt)
        log.info("volume flow inverted cells with %d substeps; retrying", n_steps)
        n_steps *= 2
    raise FlipDetected(f"volume flow inverted cells after {retries} retries")


def volume_correct(vmap: VolumetricMap, steps: int = 20, restarts: int = 8,
                   retries: int = 3, target: float = 0.0):
    """Repeated flow passes; a pass is kept only if it lowers the variance."""
    var0 = volume_variance(vmap.hex_mesh())
    best, best_var = vmap, var0
    info = FlowInfo(var0, var0, steps, 0)
    for r in range(restarts):
        if best_var <= target:
            break
        try:
            cand, step_info = integrate_volume_flow(best, steps, retries)
        except FlipDetected:
            info.flagged = True
            break
        if step_info.variance_after >= best_var:
            break
        best, best_var = cand, step_info.variance_after
        info.restarts = r + 1
        info.retries = max(info.retries, step_info.retries)
        info.steps = step_info.steps
    info.variance_after = best_var
    return best, info
