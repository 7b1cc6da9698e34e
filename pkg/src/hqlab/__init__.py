"""Harmonic quaternion fields on voxel domains.

Numerics for a metric-aware quaternion calculus: geometric quaternion
algebra, harmonic field construction from boundary data, boundary control,
2-jet extraction with its metric-trace certificate, pointwise frame density
of the field family, and recovery of the metric from observed jets.
"""

from .geometry import (
    GridDomain,
    MetricField,
    METRIC_PRESETS,
    build_domain,
    make_metric,
    metric_flat,
    grad,
    div,
    rot,
    laplacian,
)
from .quaternion import Quaternion, qmul, qnorm, qfield, field_mul, q_residual
from .elliptic import (
    DirichletOperator,
    assemble,
    solve_dirichlet,
    harmonic_extension,
    green_column,
    poisson_kernel,
    divcurl_solve,
)
from .control import (
    BoundaryControl,
    HarmonicFamily,
    default_dictionary,
    solve_family,
    ma_matrix,
    solve_control,
    separate,
)
from .jets import extract_jet, laplace_jet, jet_span_report, jet_control
from .density import (
    scalar_separation_check,
    build_frame_cover,
    represent,
    approximate_in_algebra,
)
from .recovery import (
    recover_laplace_jet,
    jets_to_metric,
    recover_metric_field,
    calibrate,
    conformal_identity_check,
)
from .analysis import (
    bulk_mask,
    dirichlet_basis,
    plane_patch,
    surface_identity_check,
    uniqueness_probe,
    build_probe_basis,
    RectLoop,
    circulation,
)

__version__ = "0.1.0"

__all__ = [
    "GridDomain",
    "MetricField",
    "METRIC_PRESETS",
    "build_domain",
    "make_metric",
    "metric_flat",
    "grad",
    "div",
    "rot",
    "laplacian",
    "Quaternion",
    "qmul",
    "qnorm",
    "qfield",
    "field_mul",
    "q_residual",
    "DirichletOperator",
    "assemble",
    "solve_dirichlet",
    "harmonic_extension",
    "green_column",
    "poisson_kernel",
    "divcurl_solve",
    "BoundaryControl",
    "HarmonicFamily",
    "default_dictionary",
    "solve_family",
    "ma_matrix",
    "solve_control",
    "separate",
    "extract_jet",
    "laplace_jet",
    "jet_span_report",
    "jet_control",
    "scalar_separation_check",
    "build_frame_cover",
    "represent",
    "approximate_in_algebra",
    "recover_laplace_jet",
    "jets_to_metric",
    "recover_metric_field",
    "calibrate",
    "conformal_identity_check",
    "bulk_mask",
    "dirichlet_basis",
    "plane_patch",
    "surface_identity_check",
    "uniqueness_probe",
    "build_probe_basis",
    "RectLoop",
    "circulation",
    "__version__",
]
