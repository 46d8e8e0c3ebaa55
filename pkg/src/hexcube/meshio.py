"""Surface mesh loading and hexahedral mesh / report output.

Readers accept ASCII OFF, OBJ and STL.  Every loaded surface is checked to
be a closed, orientable, genus-zero 2-manifold without degenerate
triangles, and is oriented so that its enclosed volume is positive.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateGeometry, IoError, ParseError, TopologyError
from .hexmesh import HexMesh

DEGENERATE_AREA_FACTOR = 1e-12
STL_MERGE_FACTOR = 1e-7


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParseError(f"vertices must have shape (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ParseError(f"triangles must have shape (F, 3), got {t.shape}")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        c = self._cross()
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def volume(self) -> float:
        """Signed enclosed volume by the divergence theorem."""
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def vertex_areas(self) -> np.ndarray:
        """Barycentric (one third of incident area) vertex weights."""
        a = self.face_areas() / 3.0
        return np.bincount(self.triangles.ravel(), np.repeat(a, 3), minlength=self.n_vertices)

    def _cross(self):
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def transformed(self, scale=1.0, offset=(0.0, 0.0, 0.0)) -> "TriMesh":
        return TriMesh(self.vertices * scale + np.asarray(offset), self.triangles, dict(self.tags))


# ---------------------------------------------------------------- validation

def check_topology(mesh: TriMesh) -> TriMesh:
    """Validate a closed genus-zero manifold and return it consistently
    oriented with positive volume.  Raises TopologyError / DegenerateGeometry."""
    nv, tri = mesh.n_vertices, mesh.triangles
    if len(tri) == 0 or nv == 0:
        raise ParseError("mesh has no triangles")
    if tri.min() < 0 or tri.max() >= nv:
        raise ParseError("triangle index out of range")
    if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])):
        raise DegenerateGeometry("triangle with repeated vertex")
    used = np.zeros(nv, bool)
    used[tri.ravel()] = True
    if not used.all():
        raise TopologyError(f"{int((~used).sum())} unreferenced vertices")

    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts != 2):
        bad = int((counts == 1).sum())
        raise TopologyError(
            "not a closed 2-manifold: "
            f"{bad} boundary edges, {int((counts > 2).sum())} non-manifold edges")

    diag = mesh.bbox_diagonal()
    areas = mesh.face_areas()
    tiny = np.flatnonzero(areas <= DEGENERATE_AREA_FACTOR * diag * diag)
    if len(tiny):
        raise DegenerateGeometry(f"{len(tiny)} degenerate triangles", triangles=tiny[:10].tolist())

    n_comp, _ = connected_components(
        coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv)), directed=False)
    if n_comp != 1:
        raise TopologyError(f"surface has {n_comp} connected components")

    n_e = len(counts)
    chi = nv - n_e + len(tri)
    if chi != 2:
        genus = (2 - chi) / 2
        raise TopologyError(f"genus {genus:g} surface (Euler characteristic {chi}), expected genus 0")

    tri = _orient(tri, inv)
    oriented = TriMesh(mesh.vertices, tri, dict(mesh.tags))
    if oriented.volume() < 0:
        oriented = TriMesh(mesh.vertices, tri[:, ::-1], dict(mesh.tags))
    return oriented


def _orient(tri, edge_id):
    """Flip triangles so that every edge is traversed once in each direction."""
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    if len(np.unique(directed, axis=0)) == len(directed):
        return tri
    nf = len(tri)
    order = np.argsort(edge_id, kind="stable")
    pairs = (order % nf).reshape(-1, 2)
    adj = [[] for _ in range(nf)]
    for f0, f1 in pairs.tolist():
        adj[f0].append(f1)
        adj[f1].append(f0)

    tri = tri.copy()
    seen = np.zeros(nf, bool)
    seen[0] = True
    stack = [0]
    while stack:
        f = stack.pop()
        tf = tri[f].tolist()
        fwd = {(tf[0], tf[1]), (tf[1], tf[2]), (tf[2], tf[0])}
        for g in adj[f]:
            tg = tri[g].tolist()
            clash = bool(fwd & {(tg[0], tg[1]), (tg[1], tg[2]), (tg[2], tg[0])})
            if not seen[g]:
                if clash:
                    tri[g] = tri[g][::-1]
                seen[g] = True
                stack.append(g)
            elif clash:
                raise TopologyError("surface is not orientable")
    if not seen.all():
        raise TopologyError("surface has more than one connected component")
    return tri


# ------------------------------------------------------------------ readers

def load_surface_mesh(path) -> TriMesh:
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    try:
        with open(path, "r", encoding="utf-8", errors="strict") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not an ASCII file (binary formats are unsupported)") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if ext == "off":
        mesh = parse_off(text)
    elif ext == "obj":
        mesh = parse_obj(text)
    elif ext == "stl":
        mesh = parse_stl(text)
    else:
        raise ParseError(f"unsupported extension {ext!r}; expected off, obj or stl")
    return check_topology(mesh)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def parse_off(text) -> TriMesh:
    lines = list(_tokens(text))
    if not lines:
        raise ParseError("empty OFF file")
    head = lines[0].split()
    if head[0] != "OFF":
        raise ParseError("missing OFF header")
    rest = head[1:]
    pos = 1
    if not rest:
        if len(lines) < 2:
            raise ParseError("truncated OFF header")
        rest = lines[1].split()
        pos = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
        verts = np.array([[float(x) for x in lines[pos + i].split()[:3]] for i in range(nv)])
        faces = []
        for i in range(nf):
            vals = [int(x) for x in lines[pos + nv + i].split()]
            k = vals[0]
            poly = vals[1:1 + k]
            if k < 3 or len(poly) != k:
                raise ParseError(f"bad face record on face {i}")
            faces.extend([poly[0], poly[j], poly[j + 1]] for j in range(1, k - 1))
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed OFF file: {exc}") from exc
    if verts.shape != (nv, 3):
        raise ParseError("vertex records must carry three coordinates")
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def parse_obj(text) -> TriMesh:
    verts, faces = [], []
    try:
        for line in _tokens(text):
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ParseError("vertex with fewer than three coordinates")
            elif parts[0] == "f":
                idx = []
                for p in parts[1:]:
                    i = int(p.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ParseError("face with fewer than three vertices")
                faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1))
    except ValueError as exc:
        raise ParseError(f"malformed OBJ file: {exc}") from exc
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def parse_stl(text) -> TriMesh:
    pts = []
    lines = list(_tokens(text))
    if not lines or not lines[0].lower().startswith("solid"):
        raise ParseError("missing 'solid' header in ASCII STL")
    try:
        for line in lines:
            parts = line.split()
            if parts[0].lower() == "vertex":
                pts.append([float(x) for x in parts[1:4]])
    except ValueError as exc:
        raise ParseError(f"malformed STL vertex: {exc}") from exc
    if len(pts) == 0 or len(pts) % 3:
        raise ParseError("STL vertex count is not a multiple of three")
    pts = np.array(pts, dtype=np.float64)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tol = STL_MERGE_FACTOR * max(diag, 1e-300)
    keys = np.round((pts - pts.min(axis=0)) / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    # renumber in order of first appearance so vertices keep file order
    rank = np.empty(len(first), np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    verts = pts[np.sort(first)]
    return TriMesh(verts, rank[inverse].reshape(-1, 3))


# ------------------------------------------------------------------ writers

def write_off(mesh: TriMesh, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"OFF\n{mesh.n_vertices} {mesh.n_triangles} 0\n")
            for x, y, z in mesh.vertices.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")
            for a, b, c in mesh.triangles.tolist():
                fh.write(f"3 {a} {b} {c}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_hex_vtk(mesh: HexMesh, path) -> None:
    """Legacy VTK 3.0 ASCII unstructured grid with hexahedral cells (type 12).

    Coordinates are written with ``repr`` so that reading them back yields the
    identical doubles.
    """
    pts = mesh.nodes
    hexes = mesh.hexes
    out = ["# vtk DataFile Version 3.0", "hexcube hexahedral mesh", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    out.extend(f"{x!r} {y!r} {z!r}" for x, y, z in pts.tolist())
    out.append(f"CELLS {len(hexes)} {9 * len(hexes)}")
    out.extend("8 " + " ".join(map(str, h)) for h in hexes.tolist())
    out.append(f"CELL_TYPES {len(hexes)}")
    out.extend(["12"] * len(hexes))
    if mesh.cell_data:
        out.append(f"CELL_DATA {len(hexes)}")
        for name, values in mesh.cell_data.items():
            values = np.asarray(values)
            if np.issubdtype(values.dtype, np.integer):
                out.append(f"SCALARS {name} int 1")
                out.append("LOOKUP_TABLE default")
                out.extend(str(int(v)) for v in values.tolist())
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(repr(float(v)) for v in values.tolist())
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(out))
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_hex_vtk(path) -> HexMesh:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        if not lines[0].startswith("# vtk DataFile") or lines[2] != "ASCII":
            raise ParseError("not a legacy ASCII VTK file")
        if lines[3] != "DATASET UNSTRUCTURED_GRID":
            raise ParseError("dataset is not an unstructured grid")
        pos = 4
        n_pts = int(lines[pos].split()[1])
        pts = np.array([[float(x) for x in lines[pos + 1 + i].split()] for i in range(n_pts)])
        pos += 1 + n_pts
        n_cells = int(lines[pos].split()[1])
        cells = np.array([[int(x) for x in lines[pos + 1 + i].split()] for i in range(n_cells)])
        if cells.size and np.any(cells[:, 0] != 8):
            raise ParseError("non-hexahedral cell record")
        pos += 1 + n_cells
        types = [int(lines[pos + 1 + i]) for i in range(n_cells)]
        if any(t != 12 for t in types):
            raise ParseError("cell type other than VTK_HEXAHEDRON")
        pos += 1 + n_cells
        cell_data = {}
        if pos < len(lines) and lines[pos].startswith("CELL_DATA"):
            pos += 1
            while pos < len(lines):
                _, name, dtype, *_ = lines[pos].split()
                vals = lines[pos + 2:pos + 2 + n_cells]
                if dtype == "int":
                    cell_data[name] = np.array([int(v) for v in vals], dtype=np.int64)
                else:
                    cell_data[name] = np.array([float(v) for v in vals])
                pos += 2 + n_cells
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed VTK file {path}: {exc}") from exc
    return HexMesh(pts.reshape(-1, 3), cells[:, 1:].reshape(-1, 8), cell_data)


REPORT_KEYS = ("nodes", "hexahedra", "volume_variance", "concave_fraction",
               "min_jacobian_histogram", "aspect_ratio_histogram", "taper_histogram",
               "wall_time_sec")


def write_metrics_report(report, path, extra=None) -> None:
    """Serialize a QualityReport (or a mapping with the same keys) as JSON."""
    doc = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    missing = [k for k in REPORT_KEYS if k not in doc]
    if missing:
        raise IoError(f"report lacks fields {missing}")
    if extra:
        doc.update(extra)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, default=_jsonable, allow_nan=False)
            fh.write("\n")
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        v = float(obj)
        return v if math.isfinite(v) else None
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
