"""Partially discontinuous nodal finite elements and their de Rham complexes."""

from .mesh import SimplicialMesh, build_structured_2d, build_structured_3d, named_mesh, \
    worsey_farin_split, clough_tocher_split
from .spaces import build_space, constrained_space, glued_space, audit_dimensions
from .assembly import assemble_mass, assemble_stiffness, derivative_matrix, apply_bc, \
    BoundaryCondition
from .analysis import solve_gevp, exact_maxwell_spectrum, maxwell_experiment, \
    exactness_check, condition_experiment

__version__ = "0.1.0"
