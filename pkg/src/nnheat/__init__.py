"""Finite element simulation of heat-conducting, incompressible, non-Newtonian flow.

Taylor-Hood P2/P1 velocity/pressure, P1 temperature, backward Euler in time
with skew-symmetric convection and a decoupled (momentum, then temperature)
damped fixed-point iteration per step. Diagnostics evaluate energy balances,
entropy production, temperature positivity and the relative energy between
two trajectories.
"""

from .errors import (
    ConfigError,
    LinearSolveFailed,
    NNHeatError,
    PicardDiverged,
    RootFindingError,
)
from .mesh import (
    Mesh,
    QualityReport,
    QuadratureRule,
    build_structured_mesh,
    mesh_quality,
    quadrature_rule,
    read_mesh,
    refine_uniform,
    unit_square_mesh,
)
from .spaces import DiscreteField, FunctionSpace, build_space, interpolate, l2_project, norm
from .constitutive import ConductivityLaw, ConstitutiveModel, newtonian, stress
from .forms import AssembledSystem, Discretization, trilinear_B, trilinear_C
from .stepper import RunConfig, StepState, Trajectory, initialize, run, step
from .diagnostics import DiagnosticsRecord, entropy_residual, gronwall_fit, relative_energy

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem",
    "ConductivityLaw",
    "ConstitutiveModel",
    "DiagnosticsRecord",
    "Discretization",
    "RunConfig",
    "StepState",
    "Trajectory",
    "entropy_residual",
    "gronwall_fit",
    "initialize",
    "newtonian",
    "relative_energy",
    "run",
    "step",
    "stress",
    "trilinear_B",
    "trilinear_C",
    "ConfigError",
    "DiscreteField",
    "FunctionSpace",
    "LinearSolveFailed",
    "Mesh",
    "NNHeatError",
    "PicardDiverged",
    "QualityReport",
    "QuadratureRule",
    "RootFindingError",
    "build_space",
    "build_structured_mesh",
    "interpolate",
    "l2_project",
    "mesh_quality",
    "norm",
    "quadrature_rule",
    "read_mesh",
    "refine_uniform",
    "unit_square_mesh",
]
