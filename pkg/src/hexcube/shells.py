"""Nested surface shells inside a voxelized solid.

A two-phase piecewise-constant (Chan-Vese) level set is grown from a small
ball deep inside the solid until its zero level set matches the solid.  The
step at which each voxel is first swept by the front gives an arrival time
field T.  Dividing T by the arrival time at the point where the voxel's
growth path leaves the solid gives a normalized time tau in [0, 1]; the
inner shells are level sets of tau, so they are nested by construction and
follow the shape of the boundary.  The outermost shell is the solid's own
boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph
from skimage import measure

from .errors import EmptyInterface, NoConvergence, ShellCountMismatch, TopologyError
from .meshio import TriMesh, check_topology
from .voxel import BinaryVolume, ScalarGrid

log = logging.getLogger(__name__)

SEPARATION = 0.25  # minimum gap between consecutive shells, in voxels
CLIP = 4.0  # level set values are kept within +-CLIP voxels
CROP_MARGIN = 6
# smallest force magnitude the step normalization divides by
FORCE_FLOOR = 1e-3
# Gaussian width (voxels) that removes voxel-scale bumps from tau
TAU_SMOOTHING = 1.0
# Gaussian width (voxels) applied to the occupancy before the outer shell
# is contoured
OUTER_SMOOTHING = 0.5


@dataclass(eq=False)
class EvolutionTrace:
    snapshots: list  # [(step, ScalarGrid)] of phi, in world units
    energies: np.ndarray  # energy after every step (index 0 = initial)
    reinit_steps: list  # steps after which phi was reinitialized
    arrival: ScalarGrid  # step at which the front reached each voxel
    final: ScalarGrid
    volume: BinaryVolume
    steps: int
    reached_volumes: np.ndarray = field(default=None)  # enclosed voxels after each step


def smooth_heaviside(phi, eps):
    """1 inside (phi < -eps), 0 outside (phi > eps), a sine ramp between."""
    phi = np.asarray(phi, dtype=float)
    x = np.clip(phi / eps, -1.0, 1.0)
    ramp = 0.5 * (1.0 - x - np.sin(np.pi * x) / np.pi)
    return np.where(x <= -1.0, 1.0, np.where(x >= 1.0, 0.0, ramp))


def smooth_delta(phi, eps):
    """Minus the derivative of smooth_heaviside."""
    phi = np.asarray(phi, dtype=float)
    out = (1.0 + np.cos(np.pi * phi / eps)) / (2.0 * eps)
    return np.where(np.abs(phi) < eps, out, 0.0)


def chan_vese_energy(phi, beta, eps, n=None, nb=None) -> float:
    """Two-phase fitting energy with the region means at their optimum.

    ``n`` and ``nb`` give the full grid size and occupied count when ``phi``
    and ``beta`` cover only a crop outside of which phi > eps.
    """
    H = smooth_heaviside(phi, eps)
    n = beta.size if n is None else n
    nb = float(beta.sum()) if nb is None else nb
    return _energy_from_sums(H.sum(), (H * beta).sum(), n, nb)


def _energy_from_sums(s1, s1b, n, nb):
    # sum_in H (b - c1)^2 + sum (1 - H)(b - c2)^2 with b binary and c optimal
    s0, s0b = n - s1, nb - s1b
    e = 0.0
    if s1 > 0:
        e += s1b - s1b * s1b / s1
    if s0 > 0:
        e += s0b - s0b * s0b / s0
    return float(e)


def _mask_sdf(mask):
    """Voxel-unit signed distance to the faces of a boolean mask."""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    d_out = ndimage.distance_transform_edt(~mask)
    d_in = ndimage.distance_transform_edt(mask)
    return np.where(mask, 0.5 - d_in, d_out - 0.5)


def deepest_point(beta: np.ndarray):
    depth = ndimage.distance_transform_edt(beta)
    return np.unravel_index(int(np.argmax(depth)), beta.shape), float(depth.max())


def choose_seed(beta: np.ndarray):
    """Seed voxel: among voxels at least half as deep as the deepest one,
    the one nearest the solid's centroid.  Returns (index, depth)."""
    depth = ndimage.distance_transform_edt(beta)
    deep = np.argwhere(depth >= 0.5 * depth.max())
    centroid = np.argwhere(beta).mean(axis=0)
    d2 = np.sum((deep - centroid) ** 2, axis=1)
    best = tuple(int(x) for x in deep[int(np.argmin(d2))])
    return best, float(depth[best])


def evolve_chan_vese(vol: BinaryVolume, eps: float = 1.5, dt: float = 1.0,
                     reinit_every: int = 5, seed_radius: float = 1.5,
                     max_steps: int = 20000, patience: int = 50,
                     save_every: int = 0, seed=None) -> EvolutionTrace:
    """Grow the level set from a small ball at ``seed`` (default: see
    choose_seed) until it matches the occupancy.  ``eps`` and all internal
    distances are in voxels."""
    beta = vol.occupancy
    nb = int(beta.sum())
    if nb == 0:
        raise EmptyInterface("empty occupancy")
    centre, depth = choose_seed(beta) if seed is None else (tuple(seed), 0.0)
    if seed is not None:
        depth = float(ndimage.distance_transform_edt(beta)[centre])
    if depth < 1.0:
        raise EmptyInterface("solid is thinner than one voxel")
    r0 = min(float(seed_radius), 0.5 * depth)
    idx = np.indices(beta.shape, dtype=float)
    phi0 = np.sqrt(sum((idx[d] - centre[d]) ** 2 for d in range(3))) - r0
    del idx
    # only values within the band matter; clipping lets reinitialization
    # work on a crop around the front
    phi = np.clip(phi0, -CLIP, CLIP)
    betaf = beta.astype(float)
    n = beta.size

    arrival = np.full(beta.shape, np.inf)
    arrival[phi < 0] = 0.0
    snapshots = [(0, ScalarGrid(phi * vol.spacing, vol.origin, vol.spacing))]
    H = smooth_heaviside(phi, eps)
    energy = _energy_from_sums(H.sum(), (H * betaf).sum(), n, nb)
    energies = [energy]
    reached = [int((phi < 0).sum())]
    stall, step = 0, 0
    reinits = []

    while step < max_steps:
        band = np.flatnonzero(np.abs(phi.ravel()) < eps)
        out_band = np.ones(n, bool)
        out_band[band] = False
        flat = phi.ravel()
        inner = out_band & (flat < 0)
        s1_fixed = float(inner.sum())
        s1b_fixed = float(betaf.ravel()[inner].sum())
        bb = betaf.ravel()[band]
        for _ in range(reinit_every):
            pb = flat[band]
            hb = smooth_heaviside(pb, eps)
            s1, s1b = s1_fixed + hb.sum(), s1b_fixed + (hb * bb).sum()
            c1 = s1b / s1 if s1 > 0 else 0.0
            c2 = (nb - s1b) / (n - s1) if n > s1 else 0.0
            force = (bb - c1) ** 2 - (bb - c2) ** 2
            # the force scale shrinks with the region means' contrast; the
            # step is normalized so the front moves at a steady rate
            tau = dt / max(float(np.abs(force).max()), FORCE_FLOOR)
            for _ in range(8):
                new = pb + tau * smooth_delta(pb, eps) * force
                hn = smooth_heaviside(new, eps)
                e_new = _energy_from_sums(s1_fixed + hn.sum(), s1b_fixed + (hn * bb).sum(),
                                          n, nb)
                if e_new <= energy + 1e-12 * max(energy, 1.0):
                    break
                tau *= 0.5
            else:
                new, e_new = pb, energy
            step += 1
            crossed = (pb >= 0) & (new < 0)
            if crossed.any():
                frac = pb[crossed] / (pb[crossed] - new[crossed])
                arrival.ravel()[band[crossed]] = step - 1 + frac
            flat[band] = new
            energies.append(e_new)
            reached.append(int((flat < 0).sum()))
            if e_new < energy - 1e-9 * max(energy, 1.0):
                stall = 0
            else:
                stall += 1
            energy = e_new
            if save_every and step % save_every == 0:
                snapshots.append((step, ScalarGrid(phi * vol.spacing, vol.origin,
                                                   vol.spacing)))
        inside = phi < 0
        mismatch = int(np.count_nonzero(inside != beta))
        if mismatch == 0:
            break
        if stall >= patience:
            raise NoConvergence(f"energy stalled with {mismatch} voxels mismatched",
                                step=step)
        # reinitialize to the signed distance of the current interior, keeping
        # sub-voxel values next to the interface.  The zero level set is
        # unchanged but the band weights are not, so the energy is re-evaluated.
        lo = np.maximum(np.argwhere(inside).min(axis=0) - CROP_MARGIN, 0)
        hi = np.minimum(np.argwhere(inside).max(axis=0) + CROP_MARGIN + 1, beta.shape)
        box = tuple(slice(a, b) for a, b in zip(lo, hi))
        cand = np.clip(_mask_sdf(inside[box]), -CLIP, CLIP)
        near = np.abs(cand) < 1.0
        cand[near] = np.clip(phi[box][near], -1.0, 1.0)
        phi[box] = cand
        energy = chan_vese_energy(phi[box], betaf[box], eps, betaf.size, nb)
        reinits.append(step)
    else:
        raise NoConvergence(f"no match after {max_steps} steps", step=step)

    # sub-voxel times inside the seed, so the innermost level sets stay smooth
    early = (arrival > 0) & (arrival <= 4 * reinit_every)
    speed = 1.0
    if early.any():
        speed = max(float(np.median(phi0[early] / arrival[early])), 1e-3)
    seed = phi0 < 0
    arrival[seed] = phi0[seed] / speed
    final = ScalarGrid(_mask_sdf(beta) * vol.spacing, vol.origin, vol.spacing)
    snapshots.append((step, ScalarGrid(phi * vol.spacing, vol.origin, vol.spacing)))
    log.info("level set matched the solid after %d steps", step)
    return EvolutionTrace(snapshots, np.asarray(energies), reinits, ScalarGrid(arrival, vol.origin, 1.0),
                          final, vol, step, np.asarray(reached))


def cube_volume_fractions(N: int) -> np.ndarray:
    """Fraction of the unit cube enclosed by each of the N lattice shells."""
    k = np.arange(1, N + 1)
    return ((2 * (N - k) + 1) / (2 * N - 1)) ** 3


def normalized_arrival(trace: EvolutionTrace, step: float = 1.0, tol: float = 1e-4,
                       max_iter: int = None) -> np.ndarray:
    """tau = T / E where E is the arrival time at the end of each voxel's
    growth path.

    E is constant along the characteristics of T (the direction of grad T),
    so it is found by repeatedly pulling values from one step downstream,
    starting from E = T.  Outside the solid tau is set to 2.
    """
    inside = trace.volume.occupancy
    T = trace.arrival.values
    Tin = np.where(inside, T, np.nan)
    # extend T outward with the nearest inside value so gradients at the
    # boundary stay defined
    _, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
    Text = T[tuple(idx)]
    Text = np.where(np.isfinite(Text), Text, np.nanmax(Tin))
    g = np.stack(np.gradient(ndimage.gaussian_filter(Text, 1.0)))
    gn = np.sqrt(np.sum(g * g, axis=0))
    g = g / np.maximum(gn, 1e-12)
    pts = np.argwhere(inside).T.astype(float)
    where = tuple(pts.astype(int))
    tgt = pts + step * g[(slice(None),) + where]
    Tpos = np.maximum(Text, 0.0)
    E = Tpos.copy()
    scale = max(float(np.nanmax(Tin)), 1e-12)
    if max_iter is None:
        max_iter = 4 * max(inside.shape)
    for _ in range(max_iter):
        pulled = ndimage.map_coordinates(E, tgt, order=1, mode="nearest")
        new = np.maximum(pulled, Tpos[where])
        change = np.max(np.abs(new - E[where]))
        E[where] = new
        if change < tol * scale:
            break
    tau = np.full(T.shape, 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau[where] = np.where(E[where] > 0, T[where] / E[where], 0.0)
    # the seed ball has negative times; keep them below every positive tau
    return np.clip(tau, -1.0, 2.0)


def shell_times(trace: EvolutionTrace, N: int, schedule: str = "volume",
                field=None) -> np.ndarray:
    """Levels for shells 2..N: arrival times for the step schedule, values
    of ``field`` (default the normalized arrival) for the volume schedule."""
    if schedule == "step":
        L = trace.steps
        return np.array([L - (k - 1) * L / N for k in range(2, N + 1)], dtype=float)
    if schedule != "volume":
        raise ValueError(f"unknown shell schedule {schedule!r}")
    if field is None:
        field = normalized_arrival(trace)
    t = np.sort(field[trace.volume.occupancy])
    fr = cube_volume_fractions(N)[1:]
    pos = np.clip(fr * len(t), 1, len(t) - 1)
    lo = np.floor(pos).astype(int)
    w = pos - lo
    return (1 - w) * t[lo - 1] + w * t[lo]


def _surface(field, level, origin, spacing, pad_value, gap):
    # grid values within ``gap`` of the level would put surface vertices on
    # grid corners and create zero-area triangles; nudge them off the level
    field = np.where(np.abs(field - level) < gap,
                     np.where(field < level, level - gap, level + gap), field)
    pad = np.pad(field, 1, constant_values=pad_value)
    try:
        v, f, _, _ = measure.marching_cubes(pad, level=level, allow_degenerate=False)
    except (ValueError, RuntimeError) as exc:
        raise EmptyInterface(f"no surface at level {level:.4g}: {exc}") from exc
    v = (v - 1.0) * spacing + origin
    return _clean(v, f)


def _clean(v, f):
    """Drop zero-area triangles, merge coincident vertices and keep the
    largest connected piece."""
    f = np.asarray(f, dtype=np.int64)
    key = np.round(v, 10)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    f = inv.ravel()[f]
    v = v[first]
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[ok]
    tri_sorted = np.sort(f, axis=1)
    _, keep = np.unique(tri_sorted, axis=0, return_index=True)
    f = f[np.sort(keep)]
    nv = len(v)
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    g = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv))
    ncomp, lab = csgraph.connected_components(g, directed=False)
    if ncomp > 1:
        used = np.zeros(nv, bool)
        used[f.ravel()] = True
        sizes = np.bincount(lab[used], minlength=ncomp)
        big = int(np.argmax(sizes))
        f = f[lab[f[:, 0]] == big]
    used = np.unique(f)
    remap = -np.ones(nv, np.int64)
    remap[used] = np.arange(len(used))
    return v[used], remap[f]


def relax_surface(mesh: TriMesh, iterations: int = 3, weight: float = 0.5) -> TriMesh:
    """Tangential Laplacian relaxation; improves triangle shape while moving
    vertices only within their tangent planes."""
    v = mesh.vertices.copy()
    f = mesh.triangles
    nv = len(v)
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv)).tocsr()
    A = ((A + A.T) > 0).astype(float)
    deg = np.asarray(A.sum(axis=1)).ravel()
    for _ in range(iterations):
        n = _vertex_normals(v, f)
        d = A @ v / deg[:, None] - v
        d -= np.einsum("ij,ij->i", d, n)[:, None] * n
        v = v + weight * d
    return TriMesh(v, f)


def _vertex_normals(v, f):
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    n = np.zeros_like(v)
    for i in range(3):
        np.add.at(n, f[:, i], fn)
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)


def _enforce_separation(mesh: TriMesh, region: ScalarGrid) -> TriMesh:
    """Move vertices that come within SEPARATION voxels of the enclosing
    region's boundary back inside it.  ``region`` holds the signed distance
    of the enclosing region, in voxels."""
    v = mesh.vertices.copy()
    grad = [ScalarGrid(g, region.origin, region.spacing) for g in np.gradient(region.values)]
    for _ in range(4):
        s = region.sample(v)
        bad = s > -SEPARATION
        if not bad.any():
            break
        g = np.stack([gi.sample(v[bad], cval=0.0) for gi in grad], axis=1)
        gn = np.linalg.norm(g, axis=1, keepdims=True)
        g = np.where(gn > 1e-12, g / np.maximum(gn, 1e-12), 0.0)
        v[bad] -= (s[bad] + SEPARATION + 0.05)[:, None] * region.spacing * g
    return TriMesh(v, mesh.triangles)


def region_sdf(mask, origin, spacing) -> ScalarGrid:
    return ScalarGrid(_mask_sdf(mask), np.asarray(origin, dtype=float), spacing)


def shell_separation(inner: TriMesh, region: ScalarGrid) -> float:
    """Smallest depth (voxels) of the inner shell's vertices below the
    boundary of the enclosing region."""
    return float(-region.sample(inner.vertices).max())


def outer_surface(vol: BinaryVolume, relax: int = 3, sigma: float = None) -> TriMesh:
    """The solid's boundary from the lightly smoothed occupancy."""
    sigma = OUTER_SMOOTHING if sigma is None else sigma
    occ = vol.occupancy.astype(float)
    if sigma > 0:
        occ = ndimage.gaussian_filter(occ, sigma)
    v, f = _surface(occ, 0.5, vol.origin, vol.spacing, 0.0, 1e-3)
    return _finish(TriMesh(v, f[:, ::-1]), relax)


def extract_shells(trace: EvolutionTrace, N: int, schedule: str = "volume",
                   relax: int = 3, outer: BinaryVolume = None) -> list:
    """N nested closed genus-zero surfaces, outermost first (world units).

    ``outer`` is the occupancy the outermost shell is taken from; it
    defaults to the evolution grid and may be a finer grid of the same solid.
    """
    if N < 1:
        raise ShellCountMismatch(f"need at least one shell, got {N}")
    vol = trace.volume
    outer = vol if outer is None else outer
    origin, h = vol.origin, vol.spacing
    shells = [outer_surface(outer, relax)]
    regions = [region_sdf(outer.occupancy, outer.origin, outer.spacing)]
    if N == 1:
        return shells
    if schedule == "step":
        T = trace.arrival.values
        big = np.nanmax(np.where(np.isfinite(T), T, -np.inf)) + 10.0
        field = np.where(np.isfinite(T) & vol.occupancy, T, big)
        gap = 1e-2
    else:
        field = ndimage.gaussian_filter(normalized_arrival(trace), TAU_SMOOTHING)
        big, gap = 2.0, 1e-5
    times = shell_times(trace, N, schedule, None if schedule == "step" else field)
    if np.any(np.diff(times) >= 0):
        raise ShellCountMismatch("shell levels are not strictly decreasing; the solid is "
                                 "too small for the requested resolution")
    for t in times:
        v, f = _surface(field, t, origin, h, big, gap)
        mesh = _finish(TriMesh(v, f[:, ::-1]), relax)
        mesh = _enforce_separation(mesh, regions[-1])
        shells.append(check_topology(mesh))
        regions.append(region_sdf(field < t, origin, h))
    if len(shells) != N:
        raise ShellCountMismatch(f"extracted {len(shells)} shells, expected {N}")
    return shells


def _finish(mesh: TriMesh, relax: int) -> TriMesh:
    mesh = check_topology(mesh)
    if relax:
        mesh = check_topology(relax_surface(mesh, relax))
    if mesh.euler_characteristic() != 2:
        raise TopologyError("extracted shell is not a sphere")
    return mesh
