"""End-to-end run: surface mesh in, hexahedral mesh and quality report out."""

from __future__ import annotations

import functools
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .area_flow import area_correct
from .assembly import VolumetricMap, assemble_initial_map, laplacian_smooth
from .config import PipelineConfig
from .conformal import SphereMap, conformal_to_sphere
from .errors import FlipDetected, HexcubeError
from .hexmesh import HexMesh
from .lattice import CubeComplex, build_cube_shells
from .meshio import TriMesh, load_surface_mesh, write_hex_vtk, write_metrics_report, write_off
from .quality import QualityReport, compute_quality
from .shells import evolve_chan_vese, extract_shells
from .voxel import downsample, signed_distance, voxelize
from .volume_flow import FlowInfo, volume_correct

log = logging.getLogger(__name__)

BOX_LO, BOX_HI = 0.05, 0.95
DEFAULT_VOXELS = 128
# sphere maps of the outer cube shell are computed on a copy refined to at
# least this many quads per side; inner shells get proportionally fewer
CUBE_SHELL_QUADS = 80
MIN_SHELL_QUADS = 16
# the shell level set is grown on a grid this many times coarser
GROWTH_COARSENING = 2


@dataclass(frozen=True)
class Normalization:
    """x_normalized = scale * (x - shift) + 0.5."""
    scale: float
    shift: np.ndarray

    @classmethod
    def fit(cls, vertices):
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        extent = float(np.max(hi - lo))
        if not extent > 0:
            raise ValueError("mesh has zero extent")
        return cls((BOX_HI - BOX_LO) / extent, 0.5 * (lo + hi))

    def forward(self, x):
        return self.scale * (np.asarray(x) - self.shift) + 0.5

    def inverse(self, y):
        return (np.asarray(y) - 0.5) / self.scale + self.shift


@dataclass(eq=False)
class PipelineResult:
    mesh: HexMesh  # final mesh in input coordinates
    volumetric_map: VolumetricMap  # normalized coordinates
    quality_pre: QualityReport
    quality_post: QualityReport
    quality_assembled: QualityReport
    timings: dict
    normalization: Normalization
    spacing: float  # voxel size in normalized coordinates
    flow: FlowInfo = None
    shells: list = field(default_factory=list)
    model_maps: list = field(default_factory=list)
    cube_maps: list = field(default_factory=list)
    gac_steps: int = 0

    @property
    def voxel_size(self) -> float:
        """Voxel size in input coordinates."""
        return self.spacing / self.normalization.scale

    def report(self) -> dict:
        doc = self.quality_post.to_dict()
        doc["pre_flow"] = {
            "volume_variance": self.quality_pre.volume_variance,
            "concave_fraction": self.quality_pre.concave_fraction,
            "good_fraction": self.quality_pre.good_fraction(),
        }
        doc["assembled"] = {
            "volume_variance": self.quality_assembled.volume_variance,
            "concave_fraction": self.quality_assembled.concave_fraction,
        }
        doc["timings"] = dict(self.timings)
        doc["gac_steps"] = self.gac_steps
        if self.flow is not None:
            doc["volume_flow"] = {"restarts": self.flow.restarts, "steps": self.flow.steps,
                                  "flagged": self.flow.flagged}
        return doc


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except HexcubeError as exc:
            if exc.stage is None:
                exc.stage = name
            raise
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def map_shells(meshes, top_hint, steps=20, passes=1):
    """Conformal map plus area correction for nested shells, outermost first.
    Each inner shell is punctured next to its parent's puncture."""
    maps = []
    hint = top_hint
    for mesh in meshes:
        smap = conformal_to_sphere(mesh, hint=hint)
        smap = area_correct(smap, steps=steps, passes=passes)
        maps.append(smap)
        hint = smap.puncture_centroid()
    return maps


def top_centre(vertices):
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    return np.array([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), hi[2]])


@functools.lru_cache(maxsize=8)
def cube_shell_maps(N: int, steps: int = 20, passes: int = 1):
    """Sphere positions of every cube shell's lattice vertices, plus the
    maps of the refined shells."""
    cube = build_cube_shells(N)
    positions, maps = [], []
    hint = np.array([0.5, 0.5, 1.0])
    for shell in cube.shells:
        target = max(MIN_SHELL_QUADS, CUBE_SHELL_QUADS * shell.quads_per_side / (2 * N - 1))
        factor = max(1, int(np.ceil(target / shell.quads_per_side)))
        fine, idx = shell.refined(factor)
        smap = area_correct(conformal_to_sphere(fine, hint=hint), steps=steps, passes=passes)
        maps.append(smap)
        positions.append(smap.positions[idx])
        hint = smap.puncture_centroid()
    return cube, tuple(positions), tuple(maps)


def run_pipeline(config: PipelineConfig, mesh: TriMesh = None, write: bool = True) -> PipelineResult:
    config.validate()
    timer = _Timer()
    t_start = time.perf_counter()

    with timer.stage("load"):
        if mesh is None:
            mesh = load_surface_mesh(config.input)
        norm = Normalization.fit(mesh.vertices)
        work = TriMesh(norm.forward(mesh.vertices), mesh.triangles)
    spacing = config.spacing_value()
    spacing = (BOX_HI - BOX_LO) / DEFAULT_VOXELS if spacing is None else spacing * norm.scale

    with timer.stage("voxelize"):
        vol = voxelize(work, spacing)
        # fails early on an empty or grid-filling occupancy
        signed_distance(vol)
    with timer.stage("shells"):
        coarse = downsample(vol, GROWTH_COARSENING)
        trace = evolve_chan_vese(coarse, eps=config.eps, dt=config.dt,
                                 reinit_every=config.reinit_every, max_steps=config.max_steps)
        shells = extract_shells(trace, config.resolution, schedule=config.shell_schedule,
                                outer=vol)
    with timer.stage("cube_maps"):
        cube, cube_pos, cube_maps = cube_shell_maps(config.resolution, config.area_steps,
                                                    config.area_passes)
    with timer.stage("shell_maps"):
        model_maps = map_shells(shells, top_centre(shells[0].vertices), config.area_steps,
                                config.area_passes)
    with timer.stage("assembly"):
        vmap = assemble_initial_map(cube, model_maps, list(cube_pos))
        q_assembled = compute_quality(vmap.hex_mesh())
    with timer.stage("smoothing"):
        smoothed = laplacian_smooth(vmap.hex_mesh(), config.iterations, layers=config.layers)
        vmap = VolumetricMap(cube, smoothed.nodes)
        q_pre = compute_quality(smoothed)
    with timer.stage("volume_flow"):
        flow = None
        if config.volume_restarts > 0:
            vmap, flow = volume_correct(vmap, steps=config.volume_steps,
                                        restarts=config.volume_restarts)
            if flow.flagged:
                log.warning("volume flow stopped early to avoid inverted cells")
    with timer.stage("quality"):
        q_post = compute_quality(vmap.hex_mesh())
    out_mesh = cube.hex_mesh(norm.inverse(vmap.images))
    q_post.wall_time_sec = time.perf_counter() - t_start

    result = PipelineResult(out_mesh, vmap, q_pre, q_post, q_assembled, timer.timings, norm,
                            spacing, flow, shells, model_maps, list(cube_maps), trace.steps)
    if write:
        with timer.stage("write"):
            write_outputs(result, config)
    result.quality_post.wall_time_sec = time.perf_counter() - t_start
    return result


def write_outputs(result: PipelineResult, config: PipelineConfig) -> None:
    if config.hex_vtk:
        write_hex_vtk(result.mesh, config.hex_vtk)
    if config.map_json:
        VolumetricMap(result.volumetric_map.cube,
                      result.normalization.inverse(result.volumetric_map.images)
                      ).to_json(config.map_json)
    if config.metrics_json:
        write_metrics_report(result.quality_post, config.metrics_json,
                             extra={k: v for k, v in result.report().items()
                                    if k not in result.quality_post.to_dict()})
    if config.debug_shells:
        base = config.hex_vtk or config.metrics_json or "hexcube"
        stem = os.path.splitext(base)[0]
        for k, shell in enumerate(result.shells, start=1):
            write_off(TriMesh(result.normalization.inverse(shell.vertices), shell.triangles),
                      f"{stem}_shell{k}.off")
