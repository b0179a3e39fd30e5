"""Fitted P1 finite elements for parabolic interface problems with measure data in time."""
from .analysis import ConvergenceTable, error_norms, run_study
from .assembly import DofMap, ProblemSpec, assemble_load, assemble_mass, assemble_stiffness, apply_dirichlet
from .measure import TimeMeasure, pair_measure, step_mass, total_variation
from .mesh import InterfaceCurve, Mesh, build_interface_mesh, locate_point, refine
from .operators import FeFunction, l2_project, lagrange_interpolate, ritz_project
from .solver import Trajectory, duality_residual, solve_backward, solve_forward
from .sparse import CsrMatrix, cg_solve, csr_from_triplets, spmv

__version__ = "0.1.0"
