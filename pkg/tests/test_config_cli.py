import json

import pytest

from hexcube import shapes
from hexcube.cli import main, parse_overrides
from hexcube.config import load_config
from hexcube.errors import ParseError
from hexcube.meshio import read_hex_vtk, write_off


def test_defaults():
    cfg = load_config()
    assert cfg.resolution == 6 and cfg.spacing == "auto" and cfg.iterations == 10


def test_file_and_override_precedence(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[mesh]\nresolution = 4  # coarse\nspacing = 0.02\n"
                    "[smoothing]\niterations = 3\n")
    cfg = load_config(path)
    assert (cfg.resolution, cfg.spacing, cfg.iterations) == (4, "0.02", 3)
    cfg = load_config(path, {"mesh.resolution": "5", "iterations": "7",
                             "debug_shells": "yes"})
    assert (cfg.resolution, cfg.iterations, cfg.debug_shells) == (5, 7, True)


@pytest.mark.parametrize("text", ["[mesh]\ncolour = red\n", "[bogus]\nx = 1\n",
                                  "[mesh]\nresolution = six\n", "resolution = 4\n"])
def test_bad_files(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ParseError):
        load_config(path)


@pytest.mark.parametrize("overrides", [{"resolution": "1"}, {"spacing": "-1"},
                                       {"mesh.nonsense": "1"}, {"layers": "some"}])
def test_bad_overrides(overrides):
    with pytest.raises(ParseError):
        load_config(overrides=overrides)


def test_parse_overrides():
    assert parse_overrides(["--gac.eps=2", "--smooth-iters=4"]) == {"gac.eps": "2",
                                                                     "smooth_iters": "4"}
    with pytest.raises(ParseError):
        parse_overrides(["stray"])


@pytest.fixture(scope="module")
def sphere_off(tmp_path_factory):
    path = tmp_path_factory.mktemp("in") / "sphere.off"
    write_off(shapes.icosphere(3), path)
    return path


def test_exit_codes(tmp_path, sphere_off):
    torus = tmp_path / "torus.off"
    write_off(shapes.torus(), torus)
    assert main(["map", str(torus)]) == 2
    assert main(["map", str(tmp_path / "missing.off")]) == 5
    assert main(["map", str(sphere_off), "--frobnicate"]) == 2
    assert main(["map", str(sphere_off), "--resolution", "1"]) == 2
    assert main(["map", str(sphere_off), "--nosuch.key=3"]) == 2
    assert main([]) == 2


def _run(sphere_off, out, extra=()):
    argv = ["map", str(sphere_off), "--resolution", "2", "--spacing", "0.05",
            "--out-mesh", str(out / "m.vtk"), "--out-metrics", str(out / "q.json"),
            "--out-map", str(out / "map.json"), *extra]
    return main(argv)


def test_small_run_writes_outputs(tmp_path, sphere_off, capsys):
    assert _run(sphere_off, tmp_path, ["--debug-shells"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["nodes"] == 64 and summary["hexahedra"] == 27
    mesh = read_hex_vtk(tmp_path / "m.vtk")
    assert mesh.n_nodes == 64 and mesh.n_hexes == 27
    assert (mesh.volumes() > 0).all()
    report = json.loads((tmp_path / "q.json").read_text())
    assert report["pre_flow"]["volume_variance"] >= report["volume_variance"]
    assert "concave_fraction" in report["pre_flow"]
    assert "concave_fraction" in report
    timings = report["timings"]
    assert sum(timings.values()) == pytest.approx(report["wall_time_sec"], rel=0.05)
    corr = json.loads((tmp_path / "map.json").read_text())
    assert [c["cube_node_index"] for c in corr] == list(range(64))
    assert (tmp_path / "m_shell1.off").exists() and (tmp_path / "m_shell2.off").exists()


def test_same_input_gives_identical_outputs(tmp_path, sphere_off):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert _run(sphere_off, a) == 0
    assert _run(sphere_off, b) == 0
    for name in ("m.vtk", "map.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
