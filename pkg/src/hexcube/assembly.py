"""Initial volumetric map: each cube shell node is sent through its cube
shell's sphere map and then back through the inverse of the matching model
shell's sphere map."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .conformal import SphereMap
from .errors import BijectivityFailure, ShellCountMismatch
from .hexmesh import HexMesh
from .lattice import CubeComplex
from .spherelocate import SphereLocator


@dataclass(eq=False)
class VolumetricMap:
    cube: CubeComplex
    images: np.ndarray  # (n_nodes, 3) model-space image of every cube node

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self._jac = None

    def hex_mesh(self) -> HexMesh:
        return self.cube.hex_mesh(self.images)

    def with_images(self, images) -> "VolumetricMap":
        return VolumetricMap(self.cube, images)

    def cell_jacobians(self) -> np.ndarray:
        """Image hex volume over cube cell volume (cached)."""
        if self._jac is None:
            self._jac = self.hex_mesh().volumes() / self.cube.spacing ** 3
        return self._jac

    def to_json(self, path) -> None:
        pairs = [{"cube_node_index": int(i), "image_xyz": [float(x) for x in p]}
                 for i, p in enumerate(self.images)]
        with open(path, "w") as fh:
            json.dump(pairs, fh)


def interpolate_inverse(shell_map: SphereMap, queries, locator: SphereLocator = None):
    """Source-surface points whose sphere images are ``queries``."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    tri = shell_map.source.triangles
    if locator is None:
        locator = SphereLocator(shell_map.positions, tri)
    t, w = locator.locate(q)
    idx = tri[t]
    out = np.einsum("ij,ijk->ik", w, shell_map.source.vertices[idx])
    # queries that hit a mapped vertex reproduce its source position exactly
    hit = np.isclose(w, 1.0, rtol=0.0, atol=1e-14)
    rows, cols = np.nonzero(hit)
    out[rows] = shell_map.source.vertices[idx[rows, cols]]
    return out


def assemble_initial_map(cube: CubeComplex, model_maps, cube_node_spheres) -> VolumetricMap:
    """``cube_node_spheres[k]`` holds the sphere position of every vertex of
    cube shell k+1, in that shell's vertex order."""
    if len(model_maps) != cube.N or len(cube_node_spheres) != cube.N:
        raise ShellCountMismatch(f"expected {cube.N} shell maps, got {len(model_maps)} "
                                 f"model and {len(cube_node_spheres)} cube maps")
    images = np.full((len(cube.nodes), 3), np.nan)
    for shell, mmap, sph in zip(cube.shells, model_maps, cube_node_spheres):
        images[shell.node_ids] = interpolate_inverse(mmap, sph)
    if np.isnan(images).any():
        # nodes not on any shell: blend from the innermost shell
        images = _fill_core(cube, images)
    _check_distinct(images)
    return VolumetricMap(cube, images)


def _fill_core(cube, images):
    n = cube.n
    g = images.reshape(n, n, n, 3)
    miss = np.isnan(g[..., 0])
    idx = np.argwhere(miss)
    lo, hi = idx.min(axis=0) - 1, idx.max(axis=0) + 1
    for i, j, k in idx:
        u = (np.array([i, j, k]) - lo) / (hi - lo)
        acc = np.zeros(3)
        for c in range(8):
            bits = [(c >> b) & 1 for b in range(3)]
            corner = tuple(hi[d] if bits[d] else lo[d] for d in range(3))
            w = np.prod([u[d] if bits[d] else 1 - u[d] for d in range(3)])
            acc += w * g[corner]
        g[i, j, k] = acc
    return g.reshape(-1, 3)


def _check_distinct(images, tol=1e-9):
    key = np.round(images / tol).astype(np.int64)
    _, counts = np.unique(key, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise BijectivityFailure(f"{int(np.sum(counts > 1))} node images coincide")


def lattice_side(n_nodes: int) -> int:
    n = int(round(n_nodes ** (1.0 / 3.0)))
    if n ** 3 != n_nodes:
        raise ValueError(f"{n_nodes} nodes do not form a cubic lattice")
    return n


def laplacian_smooth(mesh: HexMesh, iterations: int = 10, fix_boundary: bool = True,
                     layers: str = "interior") -> HexMesh:
    """Jacobi averaging over the six lattice neighbours.

    ``layers='interior'`` moves only nodes off the outer shell; ``'all'``
    also moves outer-shell nodes unless ``fix_boundary`` holds them.
    """
    if layers not in ("interior", "all"):
        raise ValueError(f"unknown smoothing layers {layers!r}")
    if iterations <= 0:
        return mesh.with_nodes(mesh.nodes)
    n = lattice_side(mesh.n_nodes)
    g = mesh.nodes.reshape(n, n, n, 3).copy()
    c = np.arange(n)
    ii, jj, kk = np.meshgrid(c, c, c, indexing="ij")
    on_boundary = (np.minimum.reduce([ii, jj, kk, n - 1 - ii, n - 1 - jj, n - 1 - kk]) == 0)
    movable = ~on_boundary if (layers == "interior" or fix_boundary) else np.ones_like(on_boundary)
    count = np.zeros((n, n, n, 1))
    for axis in range(3):
        for s in (slice(1, None), slice(None, -1)):
            idx = [slice(None)] * 3
            idx[axis] = s
            count[tuple(idx)] += 1
    for _ in range(iterations):
        acc = np.zeros_like(g)
        for axis in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            acc[tuple(lo)] += g[tuple(hi)]
            acc[tuple(hi)] += g[tuple(lo)]
        g = np.where(movable[..., None], acc / count, g)
    return mesh.with_nodes(g.reshape(-1, 3))
