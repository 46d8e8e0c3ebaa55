"""Element quality of hexahedral meshes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroMeanVolume
from .hexmesh import HexMesh, corner_jacobians

N_BINS = 32
# ranges considered acceptable for each metric
JACOBIAN_RANGE = (0.5, 1.0)
ASPECT_RANGE = (1.0, 4.0)
TAPER_RANGE = (0.0, 0.4)


@dataclass(eq=False)
class QualityReport:
    nodes: int
    hexahedra: int
    volume_variance: float
    concave_fraction: float
    min_scaled_jacobian: np.ndarray
    aspect_ratio: np.ndarray
    taper: np.ndarray
    histograms: dict = field(default_factory=dict)
    wall_time_sec: float = 0.0

    def good_fraction(self) -> float:
        """Share of elements with all three metrics in their acceptable ranges."""
        return float(np.mean(acceptable(self.min_scaled_jacobian, self.aspect_ratio,
                                        self.taper)))

    def to_dict(self) -> dict:
        return {
            "nodes": int(self.nodes),
            "hexahedra": int(self.hexahedra),
            "volume_variance": float(self.volume_variance),
            "concave_fraction": float(self.concave_fraction),
            "good_fraction": self.good_fraction(),
            "min_scaled_jacobian": _summary(self.min_scaled_jacobian),
            "aspect_ratio": _summary(self.aspect_ratio),
            "taper": _summary(self.taper),
            "min_jacobian_histogram": self.histograms.get("min_scaled_jacobian"),
            "aspect_ratio_histogram": self.histograms.get("aspect_ratio"),
            "taper_histogram": self.histograms.get("taper"),
            "wall_time_sec": float(self.wall_time_sec),
        }


def _summary(a):
    a = np.asarray(a, dtype=float)
    return {"min": float(a.min()), "max": float(a.max()), "mean": float(a.mean())}


def acceptable(jac, aspect, taper) -> np.ndarray:
    return ((jac >= JACOBIAN_RANGE[0]) & (jac <= JACOBIAN_RANGE[1])
            & (aspect >= ASPECT_RANGE[0]) & (aspect <= ASPECT_RANGE[1])
            & (taper >= TAPER_RANGE[0]) & (taper <= TAPER_RANGE[1]))


def principal_axes(corners: np.ndarray) -> np.ndarray:
    """X_1, X_2, X_3: the mean of the four parallel edge vectors per
    direction, shape (m, 3, 3)."""
    c = corners
    x1 = ((c[:, 1] - c[:, 0]) + (c[:, 2] - c[:, 3]) + (c[:, 5] - c[:, 4])
          + (c[:, 6] - c[:, 7])) / 4.0
    x2 = ((c[:, 3] - c[:, 0]) + (c[:, 2] - c[:, 1]) + (c[:, 7] - c[:, 4])
          + (c[:, 6] - c[:, 5])) / 4.0
    x3 = ((c[:, 4] - c[:, 0]) + (c[:, 5] - c[:, 1]) + (c[:, 6] - c[:, 2])
          + (c[:, 7] - c[:, 3])) / 4.0
    return np.stack([x1, x2, x3], axis=1)


def mixed_differences(corners: np.ndarray) -> np.ndarray:
    """X_12, X_13, X_23: mixed second differences of the corners, (m, 3, 3)."""
    c = corners
    x12 = ((c[:, 0] - c[:, 1] + c[:, 2] - c[:, 3])
           + (c[:, 4] - c[:, 5] + c[:, 6] - c[:, 7])) / 2.0
    x13 = ((c[:, 0] - c[:, 1] - c[:, 4] + c[:, 5])
           + (c[:, 3] - c[:, 2] - c[:, 7] + c[:, 6])) / 2.0
    x23 = ((c[:, 0] - c[:, 3] - c[:, 4] + c[:, 7])
           + (c[:, 1] - c[:, 2] - c[:, 5] + c[:, 6])) / 2.0
    return np.stack([x12, x13, x23], axis=1)


def min_scaled_jacobian(corners: np.ndarray) -> np.ndarray:
    return corner_jacobians(corners, scaled=True).min(axis=1)


def aspect_ratio(corners: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(principal_axes(corners), axis=2)
    lo = n.min(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(lo > 0, n.max(axis=1) / np.where(lo > 0, lo, 1.0), np.inf)


def taper(corners: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(principal_axes(corners), axis=2)
    m = np.linalg.norm(mixed_differences(corners), axis=2)
    pairs = ((0, 1), (0, 2), (1, 2))
    out = np.zeros(len(corners))
    for p, (i, j) in enumerate(pairs):
        lo = np.minimum(n[:, i], n[:, j])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(lo > 0, m[:, p] / np.where(lo > 0, lo, 1.0), np.inf)
        out = np.maximum(out, r)
    return out


def volume_variance(mesh_or_volumes) -> float:
    """Population variance of the volumes after scaling their mean to 1."""
    vol = mesh_or_volumes.volumes() if isinstance(mesh_or_volumes, HexMesh) \
        else np.asarray(mesh_or_volumes, dtype=float)
    if not np.all(np.isfinite(vol)):
        raise ValueError("volumes must be finite")
    mean = vol.mean()
    if not abs(mean) > 0:
        raise ZeroMeanVolume("mean element volume is zero")
    return float(np.var(vol / mean))


def histogram(values, lo=None, hi=None, bins=N_BINS) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if lo is None:
        lo = float(v.min()) if len(v) else 0.0
    if hi is None:
        hi = float(v.max()) if len(v) else 1.0
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(np.clip(v, lo, hi), bins=bins, range=(lo, hi))
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def compute_quality(mesh: HexMesh, wall_time_sec: float = 0.0) -> QualityReport:
    c = mesh.corners()
    jac = min_scaled_jacobian(c)
    ar = aspect_ratio(c)
    tp = taper(c)
    hist = {
        "min_scaled_jacobian": histogram(jac, -1.0, 1.0),
        "aspect_ratio": histogram(ar, 1.0, max(4.0, float(np.nanmax(ar[np.isfinite(ar)]))
                                              if np.isfinite(ar).any() else 4.0)),
        "taper": histogram(tp, 0.0, max(0.4, float(np.nanmax(tp[np.isfinite(tp)]))
                                        if np.isfinite(tp).any() else 0.4)),
    }
    return QualityReport(
        nodes=mesh.n_nodes,
        hexahedra=mesh.n_hexes,
        volume_variance=volume_variance(mesh),
        concave_fraction=float(np.mean(jac <= 0.0)),
        min_scaled_jacobian=jac,
        aspect_ratio=ar,
        taper=tp,
        histograms=hist,
        wall_time_sec=wall_time_sec,
    )
