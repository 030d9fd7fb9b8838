"""C1 isogeometric spaces on planar multi-patch domains and the biharmonic problem."""

from .biharmonic import BiharmonicProblem, manufactured_problem, measure_errors, run_study, solve
from .c1space import C0Space, C1Basis, build_c0_space, build_c1_basis, trace_component_dims
from .catalog import catalog, catalog_names
from .estimators import C1BiharmonicSolver, ConvergenceStudy
from .geometry import MultiPatchGeometry, Patch, load_geometry, save_geometry
from .gluing import AsG1Report, classify_as_g1, compute_gluing_data
from .splines import SplineFunction, SplineSpace1D, SplineSpace2D

__version__ = "0.1.0"

__all__ = [
    "AsG1Report",
    "BiharmonicProblem",
    "C0Space",
    "C1Basis",
    "C1BiharmonicSolver",
    "ConvergenceStudy",
    "MultiPatchGeometry",
    "Patch",
    "SplineFunction",
    "SplineSpace1D",
    "SplineSpace2D",
    "build_c0_space",
    "build_c1_basis",
    "catalog",
    "catalog_names",
    "classify_as_g1",
    "compute_gluing_data",
    "load_geometry",
    "manufactured_problem",
    "measure_errors",
    "run_study",
    "save_geometry",
    "solve",
    "trace_component_dims",
]
