"""
Exceptions raised by the forward solver.

All errors derive from ForwardModelError so that the CLI and the HTTP
service can report them uniformly.
"""


class ForwardModelError(Exception):
    """Base exception for forward-model errors."""


class DegenerateTriangleError(ForwardModelError):
    """Triangle area is below the degeneracy threshold."""


class DegenerateTetrahedronError(ForwardModelError):
    """Tetrahedron volume is below the degeneracy threshold."""


class SourceOnElementError(ForwardModelError):
    """Dipole lies on (or inside) an element where a kernel is singular."""


class NonpositiveSigmaInfError(ForwardModelError):
    """Conductivity at the source must be strictly positive."""


class UnsupportedOrderError(ForwardModelError):
    """Requested quadrature degree has no shipped rule."""


class NoConvergenceError(ForwardModelError):
    """Iterative procedure stopped before reaching its tolerance."""

    def __init__(self, message: str, iterations: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EvaluationAtSourceError(ForwardModelError):
    """Potential requested at the dipole position."""


class ParseError(ForwardModelError):
    """Malformed input file; `line` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshValidationError(ForwardModelError):
    """Mesh violates a structural invariant."""


class NonManifoldError(MeshValidationError):
    """A face is shared by more than two tetrahedra."""


class SourceOutsideMeshError(ForwardModelError):
    """No tetrahedron contains the dipole position."""


class AnisotropicSourceRegionError(ForwardModelError):
    """Conductivity at the source is not isotropic."""


class IncompatibleRHSError(ForwardModelError):
    """Right-hand side of the pure-Neumann system does not sum to zero."""


class InvalidRadiiError(ForwardModelError):
    """Layer radii must be positive and strictly decreasing."""


class SourceTooDeepForConvergenceError(ForwardModelError):
    """Sphere series tail bound not met within the allowed number of terms."""


class ZeroReferenceError(ForwardModelError):
    """Reference potential has zero norm."""


class ConfigError(ForwardModelError):
    """Study or request configuration failed validation."""
