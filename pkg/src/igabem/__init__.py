"""2D isogeometric boundary-element solver for elastic bodies with
NURBS-bounded inclusions and visco-plastic zones."""

from .assembly import (BoundaryCondition, BoundaryModel, BoundarySolutionField,
                       Patch, Solution, assemble)
from .driver import (IterationConfig, MetricSpec, ProblemModel, SolverState,
                     internal_displacement, internal_strain, run_iteration,
                     stress_at, yield_residual)
from .field_grid import FieldGrid
from .fixtures import fixture_description, fixture_names, load_fixture
from .geometry import Inclusion
from .kernels import IsotropicMaterial
from .materials import YieldModel, constitutive, yield_value
from .modelio import ParseError, build_problem, parse_model, serialize_model
from .nurbs import NurbsCurve, SplineBasis

__all__ = [
    "BoundaryCondition", "BoundaryModel", "BoundarySolutionField", "Patch",
    "Solution", "assemble",
    "IterationConfig", "MetricSpec", "ProblemModel", "SolverState",
    "internal_displacement", "internal_strain", "run_iteration", "stress_at",
    "yield_residual",
    "FieldGrid", "Inclusion", "IsotropicMaterial",
    "YieldModel", "constitutive", "yield_value",
    "ParseError", "build_problem", "parse_model", "serialize_model",
    "NurbsCurve", "SplineBasis",
    "fixture_description", "fixture_names", "load_fixture",
]
