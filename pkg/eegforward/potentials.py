"""
Closed-form potential integrals over a triangle.

Integrals of the dipole kernel f(r) = q.R/R^3 (R = r - r0) and of the
powers R^-3 and R^-5 over a flat triangle, reduced to one-dimensional
edge terms by the in-plane Gauss theorem. All vector results are
returned in the global frame.

Kernels are evaluated only on elements that do not contain the source;
a source on the element raises SourceOnElementError instead of
returning a non-finite value.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import SourceOnElementError
from .geometry import LocalFrame, ProjectedSource, Triangle, build_local_frame, dot, project_source

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dipole:
    """Current dipole: position r0 (m) and moment q (A*m)."""
    r0: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        r0 = np.asarray(self.r0, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if r0.shape[-1:] != (3,) or q.shape[-1:] != (3,):
            raise ValueError("Dipole position and moment must be 3-vectors")
        if not (np.all(np.isfinite(r0)) and np.all(np.isfinite(q))):
            raise ValueError("Dipole components must be finite")
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "q", q)

    @classmethod
    def parse(cls, text: str) -> "Dipole":
        """
        Parse "x,y,z,qx,qy,qz".

        Examples:
            >>> Dipole.parse("0,0,0.05,0,0,1e-8").q.tolist()
            [0.0, 0.0, 1e-08]
        """
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as e:
            raise ValueError(f"Invalid dipole '{text}': {e}") from e
        if len(values) != 6:
            raise ValueError(f"Dipole needs 6 comma-separated values, got {len(values)}")
        return cls(values[:3], values[3:])


@dataclass(frozen=True)
class KernelContext:
    """Local frame and projected source for one triangle (or a stack)."""
    frame: LocalFrame
    src: ProjectedSource


def kernel_context(t: Triangle, r0) -> KernelContext:
    """Build the frame of t and project r0 onto it."""
    frame = build_local_frame(t)
    return KernelContext(frame=frame, src=project_source(frame, r0))


def _check_off_element(ctx: KernelContext):
    if np.any(ctx.src.on_element):
        count = int(np.count_nonzero(ctx.src.on_element))
        raise SourceOnElementError(f"Source lies on {count} triangle(s); kernel integral diverges")


def _dot_q(q, vec: np.ndarray) -> np.ndarray:
    return dot(np.asarray(q, dtype=float), vec)


def int_inv_r3(ctx: KernelContext) -> np.ndarray:
    """
    Integral of R^-3 over the triangle.

    beta/|w0| when the source projects inside the triangle, otherwise
    minus the sum of the stable edge terms (finite for w0 = 0).
    """
    _check_off_element(ctx)
    src = ctx.src
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = src.beta.sum(axis=-1) / np.abs(src.w0)
    return np.where(src.exterior, -src.edge_r3.sum(axis=-1), inside)


def int_inv_r5(ctx: KernelContext) -> np.ndarray:
    """Integral of R^-5 over the triangle."""
    _check_off_element(ctx)
    src = ctx.src
    w_abs = np.abs(src.w0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = (src.beta.sum(axis=-1) / w_abs ** 3
                  + (src.t0 * src.Rs).sum(axis=-1) / w_abs ** 2) / 3.0
    return np.where(src.exterior, -src.edge_r5.sum(axis=-1) / 3.0, inside)


def int_grad_s_w0_r3(ctx: KernelContext) -> np.ndarray:
    """Integral of the surface gradient of w0/R^3: w0 * sum_i m_hat_i R_i^s."""
    _check_off_element(ctx)
    src = ctx.src
    return src.w0[..., None] * np.einsum("...i,...ij->...j", src.Rs, ctx.frame.m_hat)


def signed_solid_angle(ctx: KernelContext) -> np.ndarray:
    """
    Solid angle subtended by the triangle at the source, signed by w0.

    Positive when the source sees the triangle from the side opposite
    to w_hat; summed over the outward faces of a closed surface it is
    4*pi for enclosed sources and 0 otherwise.
    """
    return np.sign(ctx.src.w0) * ctx.src.beta.sum(axis=-1)


def dipole_flux_I0(ctx: KernelContext, q) -> np.ndarray:
    """Flux of grad f through the triangle along w_hat: q . sum_i R_i^s (w0 m_hat_i - t_i w_hat)."""
    _check_off_element(ctx)
    src = ctx.src
    frame = ctx.frame
    vec = (src.w0[..., None] * np.einsum("...i,...ij->...j", src.Rs, frame.m_hat)
           - (src.t0 * src.Rs).sum(axis=-1)[..., None] * frame.w_hat)
    return _dot_q(q, vec)


def first_moment_flux(ctx: KernelContext, q) -> tuple[np.ndarray, np.ndarray]:
    """
    First moments of the flux of grad f in the source-centred frame.

    Returns the integrals of u_a <w_hat, grad f> and v_a <w_hat, grad f>,
    where (u_a, v_a) are in-plane coordinates measured from the
    projection of the source.
    """
    _check_off_element(ctx)
    src = ctx.src
    frame = ctx.frame
    w0 = src.w0
    w0_j3 = w0 * int_inv_r3(ctx)
    # (s_hat_i R_i^d + t_i m_hat_i R_i^s) per edge
    edge_vec = (src.Rd[..., None] * frame.s_hat
                + (src.t0 * src.Rs)[..., None] * frame.m_hat)
    tangential = src.Rs * w0[..., None] ** 2 - src.f2

    moments = []
    for axis in (frame.u_hat, frame.v_hat):
        proj = dot(edge_vec, axis[..., None, :])
        normal_part = (dot(frame.m_hat, axis[..., None, :]) * tangential).sum(axis=-1)
        vec = (w0[..., None] * np.einsum("...i,...ij->...j", proj, frame.m_hat)
               - w0_j3[..., None] * axis
               + normal_part[..., None] * frame.w_hat)
        moments.append(_dot_q(q, vec))
    return moments[0], moments[1]


def face_integral_of_f(ctx: KernelContext, q) -> np.ndarray:
    """
    Integral of f = q.R/R^3 over the triangle.

    q . (w_hat sign(w0) beta - sum_l m_hat_l f2_l), with sign(w0) beta
    evaluated as w0 times the R^-3 integral.
    """
    _check_off_element(ctx)
    src = ctx.src
    frame = ctx.frame
    w0_j3 = src.w0 * int_inv_r3(ctx)
    vec = (w0_j3[..., None] * frame.w_hat
           - np.einsum("...i,...ij->...j", src.f2, frame.m_hat))
    return _dot_q(q, vec)


def dipole_kernel(points: np.ndarray, dipole: Dipole) -> np.ndarray:
    """f(r) = q.R / R^3 at the given points."""
    R = np.asarray(points, dtype=float) - dipole.r0
    dist = np.sqrt(dot(R, R))
    return dot(dipole.q, R) / dist ** 3


def dipole_field_gradient(points: np.ndarray, dipole: Dipole) -> np.ndarray:
    """grad f(r) = q/R^3 - 3 (q.R) R / R^5 at the given points, shape (..., 3)."""
    R = np.asarray(points, dtype=float) - dipole.r0
    dist2 = dot(R, R)
    inv3 = dist2 ** -1.5
    qR = dot(dipole.q, R)
    return dipole.q * inv3[..., None] - 3.0 * (qR * inv3 / dist2)[..., None] * R
