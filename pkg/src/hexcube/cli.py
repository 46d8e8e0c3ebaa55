"""Command line entry point.

    hexcube map <input> [--resolution N] [--spacing S] [--smooth-iters K]
                [--out-mesh P] [--out-metrics P] [--out-map P] [--config P]
                [--debug-shells] [--key=value ...]

Any configuration key may also be given as ``--key=value`` or
``--section.key=value``.  Exit codes: 0 ok, 2 parse or topology error,
3 solver error, 4 flow or inversion error, 5 i/o error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import HexcubeError, ParseError

# named flags and the configuration keys they set
_FLAG_KEYS = {
    "resolution": "mesh.resolution",
    "spacing": "mesh.spacing",
    "smooth_iters": "smoothing.iterations",
    "out_mesh": "outputs.hex_vtk",
    "out_metrics": "outputs.metrics_json",
    "out_map": "outputs.map_json",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hexcube", description="Map a genus-zero solid onto a cube "
                     "and write a hexahedral mesh with a quality report.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    m = sub.add_parser("map", help="run the full pipeline on a surface mesh")
    m.add_argument("input", help="closed genus-zero surface (OFF, OBJ or ASCII STL)")
    m.add_argument("--resolution", help="lattice parameter N (default 6)")
    m.add_argument("--spacing", help="voxel size in input units or 'auto'")
    m.add_argument("--smooth-iters", help="Laplacian smoothing iterations")
    m.add_argument("--out-mesh", help="hexahedral mesh, legacy VTK")
    m.add_argument("--out-metrics", help="quality report, JSON")
    m.add_argument("--out-map", help="node correspondence, JSON")
    m.add_argument("--config", help="INI-style configuration file")
    m.add_argument("--debug-shells", action="store_true", help="write the nested shells as OFF")
    return parser


def parse_overrides(extra) -> dict:
    """``--key=value`` / ``--section.key=value`` pairs from leftover arguments."""
    out = {}
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise ParseError(f"unrecognized argument {arg!r}; expected --key=value")
        key, value = arg[2:].split("=", 1)
        out[key.replace("-", "_")] = value
    return out


def run(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = parse_overrides(extra)
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.debug_shells:
        overrides["outputs.debug_shells"] = "true"
    config = load_config(args.config, overrides)
    config.input = args.input

    from .pipeline import run_pipeline

    result = run_pipeline(config)
    summary = {k: result.report()[k] for k in ("nodes", "hexahedra", "volume_variance",
                                               "concave_fraction", "good_fraction",
                                               "wall_time_sec")}
    print(json.dumps(summary))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except HexcubeError as exc:
        print(f"hexcube: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
