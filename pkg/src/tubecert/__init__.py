"""Nonexistence certificates for supercritical p-Laplacian Dirichlet
problems on thin tubes around planar curves.

The package builds arclength-parametrized curves and their tubular charts,
evaluates the deformation field used in the integral identity and its
curvature ratio ``mu(eps)``, turns ``mu`` into a critical half-width below
which only the trivial solution exists, and checks the whole chain with a
P1 finite-element solver.
"""

from .certificate import (Certificate, Exponents, InadmissibleExponents, check_condition_f,
                          coefficient, coefficient_value, critical_eps)
from .curves import (Curve, arc, check_simple, curve_from_dict, load_curve, resolve_curve,
                     segment, shipped_curves, spline)
from .field import (boundary_positivity, field_value, field_value_nd, jacobian_form, mu,
                    mu_profile, verify_by_finite_differences)
from .nonlinearity import Nonlinearity
from .solver import (DiscreteSolution, ground_state, inequality_check, pohozaev_residual,
                     solve_semilinear, solve_source)
from .tube import ChartError, TubeChart, TubeMesh, build_chart, read_mesh, write_mesh

__version__ = "0.1.0"

__all__ = [
    "Certificate", "Exponents", "InadmissibleExponents", "check_condition_f", "coefficient",
    "coefficient_value", "critical_eps", "Curve", "arc", "check_simple", "curve_from_dict",
    "load_curve", "resolve_curve", "segment", "shipped_curves", "spline", "boundary_positivity",
    "field_value", "field_value_nd", "jacobian_form", "mu", "mu_profile",
    "verify_by_finite_differences", "Nonlinearity", "DiscreteSolution", "ground_state",
    "inequality_check", "pohozaev_residual", "solve_semilinear", "solve_source", "ChartError",
    "TubeChart", "TubeMesh", "build_chart", "read_mesh", "write_mesh",
]
