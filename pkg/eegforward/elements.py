"""
Element arrays for first-order tetrahedral elements.

Stiffness matrices and the two source vectors of the subtraction
formulation: the boundary term b^s (flux of the singularity potential
through a boundary triangle) and the volume term b^v (conductivity jump
sigma^c = sigma - sigma^inf I acting on the singularity field). Each
source vector has an analytic (AS) and a quadrature (FS) evaluation.

All functions accept stacks of elements along leading axes.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationAtSourceError, NonpositiveSigmaInfError, SourceOnElementError
from .geometry import (
    CLASSIFY_EPS,
    Tetrahedron,
    Triangle,
    barycentric,
    dot,
    norm,
    point_triangle_distance,
    volume_coordinate_data,
)
from .potentials import (
    Dipole,
    dipole_field_gradient,
    dipole_flux_I0,
    face_integral_of_f,
    first_moment_flux,
    kernel_context,
)
from .quadrature import get_rule

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
# sigma^c with norm below this fraction of sigma^inf is treated as zero
ZERO_JUMP_RTOL = 1e-12


@dataclass(frozen=True)
class ConductivityTensor:
    """Symmetric conductivity tensor in S/m, stored as its six components."""
    sxx: float
    syy: float
    szz: float
    sxy: float = 0.0
    sxz: float = 0.0
    syz: float = 0.0

    @classmethod
    def isotropic(cls, value: float) -> "ConductivityTensor":
        return cls(value, value, value)

    @classmethod
    def from_matrix(cls, matrix) -> "ConductivityTensor":
        """Build from a 3x3 matrix; the symmetric part is kept."""
        m = np.asarray(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"Conductivity matrix must be 3x3, got {m.shape}")
        m = 0.5 * (m + m.T)
        return cls(m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2])

    @property
    def components(self) -> tuple[float, ...]:
        return (self.sxx, self.syy, self.szz, self.sxy, self.sxz, self.syz)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.sxx, self.sxy, self.sxz],
            [self.sxy, self.syy, self.syz],
            [self.sxz, self.syz, self.szz],
        ])

    @property
    def mean(self) -> float:
        """Isotropic part: trace / 3."""
        return (self.sxx + self.syy + self.szz) / 3.0

    def is_isotropic(self, rel_tol: float = 1e-10) -> bool:
        """True when the deviatoric part is within rel_tol of the tensor norm."""
        m = self.matrix
        deviation = np.linalg.norm(m - self.mean * np.eye(3))
        return bool(deviation <= rel_tol * max(np.linalg.norm(m), np.finfo(float).tiny))

    def jump(self, sigma_inf: float) -> "ConductivityTensor":
        """sigma^c = sigma - sigma_inf * I."""
        return ConductivityTensor.from_matrix(self.matrix - sigma_inf * np.eye(3))


def as_conductivity_matrix(sigma) -> np.ndarray:
    """
    Normalize a conductivity argument to a (..., 3, 3) array.

    Accepts a ConductivityTensor, a scalar (isotropic), or an array of
    3x3 matrices.
    """
    if isinstance(sigma, ConductivityTensor):
        return sigma.matrix
    arr = np.asarray(sigma, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(3)
    if arr.shape[-2:] != (3, 3):
        raise ValueError(f"Conductivity must be scalar or (..., 3, 3), got {arr.shape}")
    return arr


def stiffness_element(t: Tetrahedron, sigma) -> np.ndarray:
    """
    Element stiffness matrix K = Lambda^T sigma Lambda / (36 |V|).

    Args:
        t: Tetrahedron (or stack)
        sigma: Conductivity (see as_conductivity_matrix)

    Returns:
        Symmetric (..., 4, 4) matrix with zero row sums

    Raises:
        DegenerateTetrahedronError: for flat elements

    Examples:
        >>> ref = Tetrahedron(np.vstack([np.zeros(3), np.eye(3)]))
        >>> (6 * stiffness_element(ref, 1.0)).round(12).tolist()[0]
        [3.0, -1.0, -1.0, -1.0]
    """
    vc = volume_coordinate_data(t)
    s = as_conductivity_matrix(sigma)
    K = np.einsum("...ai,...ab,...bj->...ij", vc.Lambda, s, vc.Lambda)
    K = K / (36.0 * np.abs(vc.volume))[..., None, None]
    return 0.5 * (K + np.swapaxes(K, -1, -2))


def _orient(t: Triangle, normal) -> tuple[Triangle, np.ndarray]:
    """Rewind triangles whose winding disagrees with the declared normal."""
    if not isinstance(t, Triangle):
        t = Triangle(t)
    if normal is None:
        return t, np.zeros(t.nodes.shape[:-2], dtype=bool)
    flip = dot(t.normal, np.asarray(normal, dtype=float)) < 0
    nodes = np.where(flip[..., None, None], t.nodes[..., [0, 2, 1], :], t.nodes)
    return Triangle(nodes), flip


def _unflip(values: np.ndarray, flip: np.ndarray) -> np.ndarray:
    return np.where(flip[..., None], values[..., [0, 2, 1]], values)


def surface_source_analytical(t: Triangle, d: Dipole, normal=None) -> np.ndarray:
    """
    Analytic boundary source vector of a triangle.

    Entry i is the integral of phi_i <grad f, n> / (4 pi) over the
    triangle, where phi_i are the linear nodal functions and n is the
    unit normal given by the node winding (right-hand rule).

    Args:
        t: Triangle or stack of triangles
        d: Dipole
        normal: Optional outward direction; triangles wound against it
            are re-wound internally and the output is permuted back

    Returns:
        (..., 3) source vector in node order of t

    Raises:
        SourceOnElementError: if the dipole lies on the triangle
    """
    t, flip = _orient(t, normal)
    ctx = kernel_context(t, d.r0)
    frame = ctx.frame
    I0 = dipole_flux_I0(ctx, d.q)
    Iu, Iv = first_moment_flux(ctx, d.q)

    s3 = frame.s_len[..., 2]
    u3, v3 = frame.u3, frame.v3
    u0, v0 = ctx.src.u0, ctx.src.v0
    c = u3 / s3 - 1.0
    phi = np.stack([
        1.0 - u0 / s3 + c * v0 / v3,
        u0 / s3 - u3 * v0 / (s3 * v3),
        v0 / v3,
    ], axis=-1)
    grad_u = np.stack([-1.0 / s3, 1.0 / s3, np.zeros_like(s3)], axis=-1)
    grad_v = np.stack([c / v3, -u3 / (s3 * v3), 1.0 / v3], axis=-1)

    b = (phi * I0[..., None] + grad_u * Iu[..., None] + grad_v * Iv[..., None]) / FOUR_PI
    return _unflip(b, flip)


def surface_source_quadrature(t: Triangle, d: Dipole, order: int, normal=None) -> np.ndarray:
    """Boundary source vector by the fixed Gauss-Jacobi rule of the given degree."""
    t, flip = _orient(t, normal)
    _reject_source_on_triangle(t, d)
    rule = get_rule(2, order)
    points = rule.map_points(t.nodes)
    flux = dot(dipole_field_gradient(points, d), t.normal[..., None, :])
    b = np.einsum("q,qi,...q->...i", rule.weights, rule.points, flux)
    b = b * (t.area / FOUR_PI)[..., None]
    return _unflip(b, flip)


def _reject_source_on_triangle(t: Triangle, d: Dipole):
    dist = point_triangle_distance(d.r0, t)
    if np.any(dist <= CLASSIFY_EPS * t.diameter):
        raise SourceOnElementError("Source lies on a boundary triangle")


def _jump_mask(sigma_c: np.ndarray, sigma_inf: float) -> np.ndarray:
    return np.linalg.norm(sigma_c, axis=(-2, -1)) > ZERO_JUMP_RTOL * sigma_inf


def _check_sigma_inf(sigma_inf: float):
    if not sigma_inf > 0:
        raise NonpositiveSigmaInfError(f"sigma_inf must be positive, got {sigma_inf}")


def _reject_source_in_tet(t: Tetrahedron, d: Dipole, active: np.ndarray):
    if not np.any(active):
        return
    xi = barycentric(t, d.r0)
    inside = np.all(xi >= -CLASSIFY_EPS, axis=-1) & active
    if np.any(inside):
        raise SourceOnElementError(
            f"Source lies in {int(np.count_nonzero(inside))} element(s) with nonzero conductivity jump"
        )


def volume_source_analytical(t: Tetrahedron, sigma_c, sigma_inf: float, d: Dipole) -> np.ndarray:
    """
    Analytic volume source vector.

    b^v = Lambda^T sigma^c sum_faces n_k F_k / (24 pi sigma_inf V), where
    F_k is the integral of f over outward face k. The volume integral of
    grad f is converted to face integrals, so the source must lie
    outside every element with a nonzero jump.

    Args:
        t: Tetrahedron or stack
        sigma_c: Conductivity jump sigma - sigma_inf I (see as_conductivity_matrix)
        sigma_inf: Isotropic conductivity at the source (S/m)
        d: Dipole

    Returns:
        (..., 4) vector; exactly zero where sigma^c vanishes

    Raises:
        NonpositiveSigmaInfError: if sigma_inf <= 0
        SourceOnElementError: if the source lies in or on an element with sigma^c != 0
    """
    _check_sigma_inf(sigma_inf)
    if not isinstance(t, Tetrahedron):
        t = Tetrahedron(t)
    sc = np.broadcast_to(as_conductivity_matrix(sigma_c), t.nodes.shape[:-2] + (3, 3))
    active = _jump_mask(sc, sigma_inf)
    out = np.zeros(t.nodes.shape[:-1])
    if not np.any(active):
        return out

    sub = Tetrahedron(t.nodes[active])
    _reject_source_in_tet(sub, d, np.ones(sub.nodes.shape[:-2], dtype=bool))
    faces = sub.outward_faces()
    ctx = kernel_context(faces, d.r0)
    F = face_integral_of_f(ctx, d.q)
    flux = np.einsum("...k,...kj->...j", F, ctx.frame.w_hat)
    vc = volume_coordinate_data(sub)
    b = np.einsum("...ij,...ik,...k->...j", vc.Lambda, sc[active], flux)
    out[active] = b / (24.0 * np.pi * sigma_inf * vc.volume[..., None])
    return out


def volume_source_quadrature(t: Tetrahedron, sigma_c, sigma_inf: float, d: Dipole, order: int) -> np.ndarray:
    """Volume source vector with grad f integrated by the fixed rule of the given degree."""
    _check_sigma_inf(sigma_inf)
    rule = get_rule(3, order)
    if not isinstance(t, Tetrahedron):
        t = Tetrahedron(t)
    sc = np.broadcast_to(as_conductivity_matrix(sigma_c), t.nodes.shape[:-2] + (3, 3))
    active = _jump_mask(sc, sigma_inf)
    out = np.zeros(t.nodes.shape[:-1])
    if not np.any(active):
        return out

    sub = Tetrahedron(t.nodes[active])
    _reject_source_in_tet(sub, d, np.ones(sub.nodes.shape[:-2], dtype=bool))
    points = rule.map_points(sub.nodes)
    grad = np.einsum("q,...qj->...j", rule.weights, dipole_field_gradient(points, d))
    vc = volume_coordinate_data(sub)
    integral = grad * np.abs(vc.volume)[..., None]
    b = np.einsum("...ij,...ik,...k->...j", vc.Lambda, sc[active], integral)
    out[active] = b / (24.0 * np.pi * sigma_inf * vc.volume[..., None])
    return out


def u_inf(d: Dipole, sigma_inf: float, r) -> np.ndarray:
    """
    Potential of the dipole in an unbounded medium of conductivity sigma_inf.

    Raises:
        EvaluationAtSourceError: if any point coincides with the dipole
        NonpositiveSigmaInfError: if sigma_inf <= 0
    """
    _check_sigma_inf(sigma_inf)
    R = np.asarray(r, dtype=float) - d.r0
    dist = norm(R)
    if np.any(dist == 0.0):
        raise EvaluationAtSourceError("Potential requested at the dipole position")
    return dot(d.q, R) / (FOUR_PI * sigma_inf * dist ** 3)
