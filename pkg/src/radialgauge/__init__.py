"""Numerical construction of sections parallel along rays from the origin,
for user-specified linear connections, with a verification suite that turns
each defining property into a measurable check."""

from .connection import (
    BundleSpec,
    ConnectionField,
    MissingMetricError,
    OutsideDomainError,
    abelian_poly,
    constant,
    fiber_vector,
    flat,
    from_expressions,
    make_builtin,
    rotation,
    sphere_levicivita,
    with_metric,
)
from .integrator import (
    IntegrationError,
    IntegrationResult,
    IntegratorConfig,
    MaxStepsExceeded,
    NonFiniteState,
    integrate_linear,
)
from .radial import (
    GridPointError,
    RadialTransportResult,
    curve_transport,
    polar_transport,
    pullback_connection,
    pullback_transport,
    radial_frame,
    radial_section_grid,
    radial_transport,
    radial_transport_partial,
    rhs,
)
from .verify import (
    CheckReport,
    IllConditionedFrameError,
    SuiteConfig,
    metric_compat_check,
    radial_gauge_check,
    radial_gauge_fit,
    radial_residual,
    residual_convergence_check,
    run_suite,
    scaling_identity_check,
    smoothness_probe,
)

__version__ = "0.1.0"

__all__ = [
    "BundleSpec",
    "CheckReport",
    "ConnectionField",
    "GridPointError",
    "IllConditionedFrameError",
    "IntegrationError",
    "IntegrationResult",
    "IntegratorConfig",
    "MaxStepsExceeded",
    "MissingMetricError",
    "NonFiniteState",
    "OutsideDomainError",
    "RadialTransportResult",
    "SuiteConfig",
    "abelian_poly",
    "constant",
    "curve_transport",
    "fiber_vector",
    "flat",
    "from_expressions",
    "integrate_linear",
    "make_builtin",
    "metric_compat_check",
    "polar_transport",
    "pullback_connection",
    "pullback_transport",
    "radial_frame",
    "radial_gauge_check",
    "radial_gauge_fit",
    "radial_residual",
    "radial_section_grid",
    "radial_transport",
    "radial_transport_partial",
    "residual_convergence_check",
    "rhs",
    "rotation",
    "run_suite",
    "scaling_identity_check",
    "smoothness_probe",
    "sphere_levicivita",
    "with_metric",
]
