"""Divergence-free P4 Stokes velocities with piecewise-cubic pressure recovery."""
from .mesh import Mesh, generate_crisscross, classify_vertices, check_structure

__version__ = "0.1.0"

__all__ = ["Mesh", "generate_crisscross", "classify_vertices", "check_structure", "__version__"]
