"""Volume-preserving maps from genus-zero solids onto a solid cube.

The pipeline voxelizes a closed surface, grows nested shells with a
Chan-Vese level set, maps every shell (and every shell of a structured
cube lattice) to the unit sphere, and joins the shells through the
cube connectivity.  A Moser flow then equalizes the hexahedron volumes.
"""

from .errors import HexcubeError
from .meshio import TriMesh, load_surface_mesh, write_hex_vtk, read_hex_vtk

__all__ = [
    "HexcubeError",
    "TriMesh",
    "load_surface_mesh",
    "write_hex_vtk",
    "read_hex_vtk",
]

__version__ = "0.1.0"
