"""Fractional powers of accretive elliptic operators via shifted resolvents.

Solves (A^alpha + b I) u = f for 0 < alpha < 1 by an exponentially
convergent trapezoid quadrature of the shifted resolvent integral, with a
P1 finite element discretization on the unit square, dense reference
oracles, experiment runners, and a spectral Allen-Cahn application.
"""

from .sparse import (
    SparseComplex,
    Factorization,
    factorize,
    shift_combine,
)
from .fem import (
    Mesh,
    CoefficientField,
    DiscreteOperator,
    GridFunction,
    build_mesh,
    assemble,
    load_vector,
    project,
    l2_error,
    l2_norm,
    preset,
    source,
)
from .quadrature import (
    QuadraturePlan,
    SpectralIndexEstimate,
    OperatorPencil,
    pole_constants,
    plan_explicit,
    plan_from_tolerance,
    tolerance_bound,
    apply_inverse,
    estimate_beta,
    error_bound,
)
from .oracle import (
    DenseOperator,
    eigen_fractional_apply,
    adaptive_integral_apply,
)

__version__ = "0.1.0"

__all__ = [
    "SparseComplex",
    "Factorization",
    "factorize",
    "shift_combine",
    "Mesh",
    "CoefficientField",
    "DiscreteOperator",
    "GridFunction",
    "build_mesh",
    "assemble",
    "load_vector",
    "project",
    "l2_error",
    "l2_norm",
    "preset",
    "source",
    "QuadraturePlan",
    "SpectralIndexEstimate",
    "OperatorPencil",
    "pole_constants",
    "plan_explicit",
    "plan_from_tolerance",
    "tolerance_bound",
    "apply_inverse",
    "estimate_beta",
    "error_bound",
    "DenseOperator",
    "eigen_fractional_apply",
    "adaptive_integral_apply",
    "__version__",
]
