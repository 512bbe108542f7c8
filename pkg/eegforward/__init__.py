"""
EEG forward solver with the subtraction finite-element method.

Modules:
- geometry: triangles, tetrahedra, local frames and projected sources
- potentials: dipole kernels and closed-form potential integrals
- quadrature: Gauss-Jacobi simplex rules and the adaptive oracle
- elements: stiffness and source vectors per element
- mesh: mesh format, boundary/interface extraction, layered-sphere mesher
- model: global assembly, solve and electrode potentials
- reference: layered-sphere series and error metrics
- studies: accuracy studies and CSV output
- config: environment settings, logging, study files
"""

from .errors import (
    ForwardModelError,
    DegenerateTriangleError,
    DegenerateTetrahedronError,
    SourceOnElementError,
    NonpositiveSigmaInfError,
    UnsupportedOrderError,
    NoConvergenceError,
    EvaluationAtSourceError,
    ParseError,
    MeshValidationError,
    NonManifoldError,
    SourceOutsideMeshError,
    AnisotropicSourceRegionError,
    IncompatibleRHSError,
    InvalidRadiiError,
    SourceTooDeepForConvergenceError,
    ZeroReferenceError,
    ConfigError,
)

from .geometry import (
    Triangle,
    Tetrahedron,
    LocalFrame,
    ProjectedSource,
    VolumeCoordinates,
    build_local_frame,
    project_source,
    volume_coordinate_data,
    barycentric,
    point_triangle_distance,
)

from .potentials import (
    Dipole,
    KernelContext,
    kernel_context,
    int_inv_r3,
    int_inv_r5,
    int_grad_s_w0_r3,
    signed_solid_angle,
    dipole_flux_I0,
    first_moment_flux,
    face_integral_of_f,
    dipole_kernel,
    dipole_field_gradient,
)

from .quadrature import (
    QuadratureRule,
    get_rule,
    adaptive_integrate,
    composite_integrate,
    SUPPORTED_DEGREES,
)

from .elements import (
    ConductivityTensor,
    stiffness_element,
    surface_source_analytical,
    surface_source_quadrature,
    volume_source_analytical,
    volume_source_quadrature,
    u_inf,
)

from .mesh import (
    Mesh,
    BoundarySurface,
    InterfaceSurface,
    validate_mesh,
    parse_mesh,
    format_mesh,
    load_mesh,
    save_mesh,
    extract_boundary,
    extract_interfaces,
    icosphere,
    build_layered_sphere_mesh,
)

from .model import (
    SourceMethod,
    SourceLocation,
    LinearSystem,
    CorrectionSolution,
    ForwardSolution,
    find_source_element,
    assemble_stiffness,
    assemble_source,
    solve_correction,
    total_potential,
    forward_solve,
)

from .reference import (
    SphereModel,
    ErrorReport,
    sphere_analytic_potential,
    metrics,
    metric_re_s,
)

from .studies import (
    element_error_rows,
    sphere_study_rows,
    dref_study_rows,
    benchmark_rows,
    solve_rows,
    write_csv,
)

from .config import (
    Settings,
    load_settings,
    configure_logging,
    parse_key_value,
    load_study_config,
    SphereStudyConfig,
    DrefStudyConfig,
)

__all__ = [
    # errors
    "ForwardModelError",
    "DegenerateTriangleError",
    "DegenerateTetrahedronError",
    "SourceOnElementError",
    "NonpositiveSigmaInfError",
    "UnsupportedOrderError",
    "NoConvergenceError",
    "EvaluationAtSourceError",
    "ParseError",
    "MeshValidationError",
    "NonManifoldError",
    "SourceOutsideMeshError",
    "AnisotropicSourceRegionError",
    "IncompatibleRHSError",
    "InvalidRadiiError",
    "SourceTooDeepForConvergenceError",
    "ZeroReferenceError",
    "ConfigError",
    # geometry
    "Triangle",
    "Tetrahedron",
    "LocalFrame",
    "ProjectedSource",
    "VolumeCoordinates",
    "build_local_frame",
    "project_source",
    "volume_coordinate_data",
    "barycentric",
    "point_triangle_distance",
    # potentials
    "Dipole",
    "KernelContext",
    "kernel_context",
    "int_inv_r3",
    "int_inv_r5",
    "int_grad_s_w0_r3",
    "signed_solid_angle",
    "dipole_flux_I0",
    "first_moment_flux",
    "face_integral_of_f",
    "dipole_kernel",
    "dipole_field_gradient",
    # quadrature
    "QuadratureRule",
    "get_rule",
    "adaptive_integrate",
    "composite_integrate",
    "SUPPORTED_DEGREES",
    # elements
    "ConductivityTensor",
    "stiffness_element",
    "surface_source_analytical",
    "surface_source_quadrature",
    "volume_source_analytical",
    "volume_source_quadrature",
    "u_inf",
    # mesh
    "Mesh",
    "BoundarySurface",
    "InterfaceSurface",
    "validate_mesh",
    "parse_mesh",
    "format_mesh",
    "load_mesh",
    "save_mesh",
    "extract_boundary",
    "extract_interfaces",
    "icosphere",
    "build_layered_sphere_mesh",
    # model
    "SourceMethod",
    "SourceLocation",
    "LinearSystem",
    "CorrectionSolution",
    "ForwardSolution",
    "find_source_element",
    "assemble_stiffness",
    "assemble_source",
    "solve_correction",
    "total_potential",
    "forward_solve",
    # reference
    "SphereModel",
    "ErrorReport",
    "sphere_analytic_potential",
    "metrics",
    "metric_re_s",
    # studies
    "element_error_rows",
    "sphere_study_rows",
    "dref_study_rows",
    "benchmark_rows",
    "solve_rows",
    "write_csv",
    # config
    "Settings",
    "load_settings",
    "configure_logging",
    "parse_key_value",
    "load_study_config",
    "SphereStudyConfig",
    "DrefStudyConfig",
]
