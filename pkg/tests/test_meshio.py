import json

import numpy as np
import pytest

from hexcube import shapes
from hexcube.errors import DegenerateGeometry, IoError, ParseError, TopologyError
from hexcube.hexmesh import HexMesh
from hexcube.lattice import lattice_hexes, lattice_nodes
from hexcube.meshio import (TriMesh, check_topology, load_surface_mesh, parse_obj, parse_off,
                            parse_stl, read_hex_vtk, write_hex_vtk, write_metrics_report,
                            write_off)
from hexcube.quality import compute_quality

OCTA_OFF = """OFF
6 8 0
1 0 0
-1 0 0
0 1 0
0 -1 0
0 0 1
0 0 -1
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
"""


def test_octahedron_has_euler_characteristic_two():
    # V - E + F = 6 - 12 + 8
    mesh = parse_off(OCTA_OFF)
    assert mesh.n_vertices == 6 and mesh.n_triangles == 8
    assert len(mesh.edges()) == 12
    assert mesh.euler_characteristic() == 2


def test_loaded_octahedron_encloses_its_volume(tmp_path):
    # regular octahedron of circumradius 1: volume 4/3
    path = tmp_path / "octa.off"
    path.write_text(OCTA_OFF)
    mesh = load_surface_mesh(path)
    assert mesh.volume() == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_inside_out_surface_is_reoriented():
    flipped = TriMesh(shapes.octahedron().vertices, shapes.octahedron().triangles[:, ::-1])
    assert check_topology(flipped).volume() == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_icosphere_level_three_counts():
    # 10 * 4^3 + 2 vertices, 20 * 4^3 faces
    mesh = shapes.icosphere(3)
    assert mesh.n_vertices == 642 and mesh.n_triangles == 1280


def test_torus_is_rejected(tmp_path):
    path = tmp_path / "torus.off"
    write_off(shapes.torus(), path)
    with pytest.raises(TopologyError):
        load_surface_mesh(path)


def test_open_surface_is_rejected():
    octa = shapes.octahedron()
    with pytest.raises(TopologyError):
        check_topology(TriMesh(octa.vertices, octa.triangles[:-1]))


def test_repeated_vertex_triangle_is_degenerate():
    octa = shapes.octahedron()
    tri = octa.triangles.copy()
    tri[0] = [0, 0, 4]
    with pytest.raises(DegenerateGeometry):
        check_topology(TriMesh(octa.vertices, tri))


def test_obj_and_stl_readers_agree_with_off():
    octa = parse_off(OCTA_OFF)
    obj = "\n".join([f"v {x} {y} {z}" for x, y, z in octa.vertices]
                    + [f"f {a + 1}/1 {b + 1} {c + 1}" for a, b, c in octa.triangles])
    stl = ["solid octa"]
    for t in octa.triangles:
        stl += ["facet normal 0 0 0", "outer loop"]
        stl += [f"vertex {x} {y} {z}" for x, y, z in octa.vertices[t]]
        stl += ["endloop", "endfacet"]
    stl.append("endsolid octa")
    for mesh in (parse_obj(obj), parse_stl("\n".join(stl))):
        mesh = check_topology(mesh)
        assert mesh.n_vertices == 6
        assert mesh.volume() == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_malformed_off_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n")


def test_missing_file_is_an_io_error(tmp_path):
    with pytest.raises(IoError):
        load_surface_mesh(tmp_path / "absent.off")


def test_vtk_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    nodes = lattice_nodes(3) + 0.01 * rng.standard_normal((27, 3))
    mesh = HexMesh(nodes, lattice_hexes(3))
    path = tmp_path / "m.vtk"
    write_hex_vtk(mesh, path)
    back = read_hex_vtk(path)
    assert np.array_equal(back.hexes, mesh.hexes)
    assert np.array_equal(back.nodes, mesh.nodes)
    lines = path.read_text().split()
    at = lines.index("CELL_TYPES")
    assert lines[at + 1] == "8"
    assert lines[at + 2:at + 10] == ["12"] * 8


def test_metrics_report_has_required_keys(tmp_path):
    report = compute_quality(HexMesh(lattice_nodes(3), lattice_hexes(3)))
    path = tmp_path / "r.json"
    write_metrics_report(report, path, extra={"note": 1})
    doc = json.loads(path.read_text())
    for key in ("nodes", "hexahedra", "volume_variance", "concave_fraction",
                "min_jacobian_histogram", "aspect_ratio_histogram", "taper_histogram",
                "wall_time_sec"):
        assert key in doc
    assert doc["nodes"] == 27 and doc["hexahedra"] == 8 and doc["note"] == 1


def test_report_missing_keys_is_an_io_error(tmp_path):
    with pytest.raises(IoError):
        write_metrics_report({"nodes": 1}, tmp_path / "r.json")
