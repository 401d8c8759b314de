"""finslergeo: numerical Finsler geometry.

Fundamental tensors and Cartan connections from jet-exact derivatives of
F^2, spray geodesics, flag-curvature scans, Legendre-transform gradients,
transnormal wavefront propagation and constant-curvature rigidity checks.
"""

from . import diffcalc, errors, expressions
from .connections import (
    CartanConnectionValue,
    CurvatureValue,
    SprayValue,
    TensorField,
    cartan_connection,
    constant_curvature_scan,
    contracted_curvature,
    curvature_action,
    flag_curvature,
    horizontal_covariant_derivative,
    metric_tensor_field,
    scalar_field_tensor,
    spray,
    warped_curvature_components,
)
from .core import (
    CartanTensorValue,
    FinslerStructure,
    MetricTensorValue,
    ZermeloData,
    cartan_tensor,
    euclidean_structure,
    fundamental_tensor,
    g_inner,
    randers_from_zermelo,
    riemannian_diagonal_structure,
    verify_structure,
)
from .diffcalc import Jet, ScalarField, fd_partial, partial
from .expressions import MetricSpec, build_structure, parse
from .geodesics import (
    GeodesicPath,
    exponential_map,
    integrate_geodesic,
    parallel_transport,
    polyline_hausdorff,
)
from .rigidity import (
    SpecialSolution,
    WarpProfile,
    WarpedStructure,
    adapted_block_check,
    build_sphere_polar,
    build_warped_structure,
    k_form_check,
    obata_tensor_residual,
    rigidity_report,
    special_solution,
)
from .transnormal import (
    GradientValue,
    TransnormalProfile,
    classify_by_critical_points,
    finsler_gradient,
    integral_curve,
    level_sphere_check,
    measure_arrival_lengths,
    rho_second_derivative_check,
    transnormality_test,
    wavefront_radius,
)

__version__ = "0.1.0"
