"""Unfitted finite elements for Darcy flow on fracture networks.

Fractures are zero level sets of user callables, trimmed and joined along
junction curves, embedded in a box that an octree background mesh covers
independently of the geometry.  Velocity and pressure unknowns live on the
trilinear background space restricted to the cut cells of each component;
a penalized, normally stabilized mixed form couples the components.
"""

from .assembly import (
    FormParameters,
    LinearSystem,
    apply_form,
    assemble,
    assemble_norm_matrix,
)
from .cases import (
    BenchmarkCase,
    MeshPlan,
    build_mesh,
    case_names,
    crossing_case,
    make_case,
    network5_case,
    sphere_case,
    strong_residual,
    surface_samples,
    torus_case,
)
from .errors import (
    ConfigurationError,
    DegenerateCutError,
    FracDarcyError,
    GeometryConsistencyError,
    GeometryInputError,
    PreconditionError,
    SolverError,
)
from .fields import (
    LevelSetField,
    RigidRotation,
    cylinder_level_set,
    plane_level_set,
    rotation_about_y,
    rotation_about_z,
    sphere_level_set,
    torus_level_set,
)
from .geometry import (
    BoundarySpec,
    FractureComponent,
    FractureNetwork,
    Junction,
    ReconstructedGeometry,
    TrimConstraint,
    reconstruct,
)
from .harness import (
    ErrorReport,
    LevelResult,
    NetworkRunResult,
    compute_errors,
    export_solution,
    run_convergence,
    run_network,
    solve_level,
)
from .octree import OctreeMesh, build_uniform, refine_near_surface
from .solver import SolveReport, solve
from .spaces import ProductSpace, build_product_space, evaluate_solution
from . import vtkio

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase",
    "BoundarySpec",
    "ConfigurationError",
    "DegenerateCutError",
    "ErrorReport",
    "FormParameters",
    "FracDarcyError",
    "FractureComponent",
    "FractureNetwork",
    "GeometryConsistencyError",
    "GeometryInputError",
    "Junction",
    "LevelResult",
    "LevelSetField",
    "LinearSystem",
    "MeshPlan",
    "NetworkRunResult",
    "OctreeMesh",
    "PreconditionError",
    "ProductSpace",
    "ReconstructedGeometry",
    "RigidRotation",
    "SolveReport",
    "SolverError",
    "TrimConstraint",
    "apply_form",
    "assemble",
    "assemble_norm_matrix",
    "build_mesh",
    "build_product_space",
    "build_uniform",
    "case_names",
    "compute_errors",
    "crossing_case",
    "cylinder_level_set",
    "evaluate_solution",
    "export_solution",
    "make_case",
    "network5_case",
    "plane_level_set",
    "reconstruct",
    "refine_near_surface",
    "rotation_about_y",
    "rotation_about_z",
    "run_convergence",
    "run_network",
    "solve",
    "solve_level",
    "sphere_case",
    "sphere_level_set",
    "strong_residual",
    "surface_samples",
    "torus_case",
    "torus_level_set",
    "vtkio",
]
