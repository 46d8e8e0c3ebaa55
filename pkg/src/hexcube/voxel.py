"""Voxel occupancy and signed distance grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyVolume, NonWatertight, ResolutionTooHigh, TopologyError
from .meshio import TriMesh

MAX_DIM = 512
# irrational sub-voxel offsets keep the +x rays off mesh vertices and edges
_JITTER = np.array([np.sqrt(2.0) * 1e-7, np.sqrt(3.0) * 1e-7])


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    values: np.ndarray  # (nx, ny, nz)
    origin: np.ndarray  # position of voxel (0, 0, 0) centre
    spacing: float

    @property
    def dims(self):
        return self.values.shape

    def centres(self, idx) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) * self.spacing

    def sample(self, points, order=1, cval=None) -> np.ndarray:
        """Trilinear (order 1) interpolation at world points."""
        idx = (np.asarray(points, dtype=float) - self.origin) / self.spacing
        if cval is None:
            cval = float(self.values.max())
        return ndimage.map_coordinates(self.values, idx.T, order=order, mode="constant",
                                       cval=cval)


@dataclass(frozen=True, eq=False)
class BinaryVolume:
    occupancy: np.ndarray  # bool (nx, ny, nz)
    origin: np.ndarray
    spacing: float

    @property
    def dims(self):
        return self.occupancy.shape

    def count(self) -> int:
        return int(self.occupancy.sum())

    def volume(self) -> float:
        return self.count() * self.spacing ** 3


def voxel_grid_for(lo, hi, spacing, pad=3):
    """Origin and dims of a grid whose voxel faces start at ``lo - pad*spacing``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    start = lo - pad * spacing
    dims = np.ceil((hi - start) / spacing).astype(int) + pad
    return start + 0.5 * spacing, dims


def voxelize(mesh: TriMesh, spacing: float, pad: int = 3) -> BinaryVolume:
    """Occupancy of voxel centres by +x ray parity against the surface."""
    if mesh.n_triangles == 0:
        raise EmptyVolume("mesh has no triangles")
    spacing = float(spacing)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    origin, dims = voxel_grid_for(lo, hi, spacing, pad)
    if np.any(dims > MAX_DIM):
        raise ResolutionTooHigh(f"voxel grid {tuple(dims)} exceeds {MAX_DIM}^3")
    nx, ny, nz = (int(d) for d in dims)

    p = mesh.vertices[mesh.triangles]
    # ray (y, z) coordinates in voxel-index units, jittered
    yz = (p[:, :, 1:] - origin[1:]) / spacing - _JITTER
    jlo = np.clip(np.ceil(yz[:, :, 0].min(axis=1)), 0, ny).astype(int)
    jhi = np.clip(np.floor(yz[:, :, 0].max(axis=1)), -1, ny - 1).astype(int)
    klo = np.clip(np.ceil(yz[:, :, 1].min(axis=1)), 0, nz).astype(int)
    khi = np.clip(np.floor(yz[:, :, 1].max(axis=1)), -1, nz - 1).astype(int)
    nj = np.maximum(jhi - jlo + 1, 0)
    nk = np.maximum(khi - klo + 1, 0)
    counts = nj * nk
    tri_id = np.repeat(np.arange(len(p)), counts)
    if len(tri_id) == 0:
        raise EmptyVolume("surface is thinner than one voxel everywhere")
    local = np.arange(len(tri_id)) - np.repeat(np.cumsum(counts) - counts, counts)
    j = jlo[tri_id] + local // nk[tri_id]
    k = klo[tri_id] + local % nk[tri_id]

    a, b, c = yz[tri_id, 0], yz[tri_id, 1], yz[tri_id, 2]
    q = np.stack([j, k], axis=1).astype(float)
    d = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    # triangles seen edge-on from the rays have d == 0 and are skipped
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = ((q[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
              - (c[:, 0] - a[:, 0]) * (q[:, 1] - a[:, 1])) / d
        w2 = ((b[:, 0] - a[:, 0]) * (q[:, 1] - a[:, 1])
              - (q[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])) / d
        w0 = 1.0 - w1 - w2
        hit = (w0 >= 0) & (w1 >= 0) & (w2 >= 0) & np.isfinite(d) & (d != 0)
    px = p[tri_id[hit], :, 0]
    xs = w0[hit] * px[:, 0] + w1[hit] * px[:, 1] + w2[hit] * px[:, 2]
    u = (xs - origin[0]) / spacing  # continuous voxel index of the crossing
    jh, kh = j[hit], k[hit]

    per_row = np.bincount(jh * nz + kh, minlength=ny * nz)
    if np.any(per_row % 2):
        raise NonWatertight(f"{int(np.sum(per_row % 2))} rays cross the surface an odd "
                            "number of times")
    toggle = np.zeros((ny, nz, nx + 1), np.int32)
    first = np.clip(np.ceil(u).astype(int), 0, nx)
    np.add.at(toggle, (jh, kh, first), 1)
    inside = (np.cumsum(toggle, axis=2)[:, :, :nx] % 2).astype(bool)
    occ = np.ascontiguousarray(inside.transpose(2, 0, 1))
    if not occ.any():
        raise EmptyVolume("no voxel centre lies inside the surface")
    _, ncomp = ndimage.label(occ)
    if ncomp != 1:
        raise TopologyError(f"occupied voxels form {ncomp} separate pieces")
    return BinaryVolume(occ, origin, spacing)


def signed_distance(vol: BinaryVolume) -> ScalarGrid:
    """Signed distance to the voxel boundary, negative inside.

    Distances come from the exact Euclidean distance transform between voxel
    centres, shifted by half a voxel so the zero crossing sits on the faces
    separating inside from outside voxels.
    """
    occ = vol.occupancy
    if not occ.any():
        raise EmptyVolume("empty occupancy")
    h = vol.spacing
    if occ.all():
        raise EmptyVolume("occupancy fills the whole grid; no interface")
    d_out = ndimage.distance_transform_edt(~occ, sampling=h)  # outside voxels: to inside
    d_in = ndimage.distance_transform_edt(occ, sampling=h)  # inside voxels: to outside
    phi = np.where(occ, -(d_in - 0.5 * h), d_out - 0.5 * h)
    return ScalarGrid(phi, vol.origin, h)


def sdf_of_mask(mask: np.ndarray, origin, spacing) -> ScalarGrid:
    return signed_distance(BinaryVolume(mask, np.asarray(origin, dtype=float), spacing))


def downsample(vol: BinaryVolume, factor: int = 2) -> BinaryVolume:
    """Coarser occupancy: a block is inside when at least half of it is."""
    if factor <= 1:
        return vol
    occ = vol.occupancy
    pad = [(0, (-d) % factor) for d in occ.shape]
    occ = np.pad(occ, pad).astype(np.float32)
    nx, ny, nz = (d // factor for d in occ.shape)
    frac = occ.reshape(nx, factor, ny, factor, nz, factor).mean(axis=(1, 3, 5))
    coarse = frac >= 0.5
    lab, n = ndimage.label(coarse)
    if n > 1:
        sizes = ndimage.sum(coarse, lab, range(1, n + 1))
        coarse = lab == (1 + int(np.argmax(sizes)))
    origin = vol.origin + 0.5 * (factor - 1) * vol.spacing
    return BinaryVolume(coarse, origin, vol.spacing * factor)
