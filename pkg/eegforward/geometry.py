"""
Simplex geometry for the analytic kernels.

This module builds the triangle-local frames, projects a source point
onto a triangle (per-edge distances, parameter bounds and the helper
functions used by the closed-form integrals) and computes tetrahedron
volume coordinates.

Every function accepts a single simplex or a stack of simplices along
leading axes and returns arrays with the same leading shape.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateTetrahedronError, DegenerateTriangleError

logger = logging.getLogger(__name__)

AREA_EPS = 1e-14
VOLUME_EPS = 1e-14
# Relative to the triangle diameter; decides interior/exterior projections
CLASSIFY_EPS = 1e-12

# Edge i runs from node START[i] to node END[i] (s_i = p_{i-1} - p_{i+1})
EDGE_START = np.array([1, 2, 0])
EDGE_END = np.array([2, 0, 1])

# Outward faces of a positively oriented tetrahedron, face k opposite node k
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dot product over the last axis."""
    return np.einsum("...i,...i->...", a, b)


def norm(a: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis."""
    return np.sqrt(dot(a, a))


@dataclass(frozen=True)
class Triangle:
    """Triangle (or stack of triangles); node order defines the winding."""
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.shape[-2:] != (3, 3):
            raise ValueError(f"Triangle nodes must have shape (..., 3, 3), got {nodes.shape}")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_points(cls, p1, p2, p3) -> "Triangle":
        return cls(np.stack([np.asarray(p, dtype=float) for p in (p1, p2, p3)], axis=-2))

    @property
    def p1(self) -> np.ndarray:
        return self.nodes[..., 0, :]

    @property
    def p2(self) -> np.ndarray:
        return self.nodes[..., 1, :]

    @property
    def p3(self) -> np.ndarray:
        return self.nodes[..., 2, :]

    @property
    def normal(self) -> np.ndarray:
        """Unit normal following the right-hand rule on (p1, p2, p3)."""
        cross = np.cross(self.p2 - self.p1, self.p3 - self.p1)
        return cross / norm(cross)[..., None]

    @property
    def area(self) -> np.ndarray:
        return 0.5 * norm(np.cross(self.p2 - self.p1, self.p3 - self.p1))

    @property
    def diameter(self) -> np.ndarray:
        edges = self.nodes[..., EDGE_END, :] - self.nodes[..., EDGE_START, :]
        return norm(edges).max(axis=-1)

    def reversed(self) -> "Triangle":
        """Same triangle with p2 and p3 swapped (opposite winding)."""
        return Triangle(self.nodes[..., [0, 2, 1], :])


@dataclass(frozen=True)
class Tetrahedron:
    """Tetrahedron (or stack of them)."""
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.shape[-2:] != (4, 3):
            raise ValueError(f"Tetrahedron nodes must have shape (..., 4, 3), got {nodes.shape}")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_points(cls, p1, p2, p3, p4) -> "Tetrahedron":
        return cls(np.stack([np.asarray(p, dtype=float) for p in (p1, p2, p3, p4)], axis=-2))

    @property
    def signed_volume(self) -> np.ndarray:
        return signed_volume(self.nodes)

    @property
    def max_edge(self) -> np.ndarray:
        edges = self.nodes[..., TET_EDGES[:, 1], :] - self.nodes[..., TET_EDGES[:, 0], :]
        return norm(edges).max(axis=-1)

    def canonical(self) -> tuple["Tetrahedron", np.ndarray]:
        """
        Positively oriented copy and the node permutation that produced it.

        Returns:
            (tetrahedron, perm) where perm has shape (..., 4) and
            canonical.nodes[..., k, :] == self.nodes[..., perm[..., k], :]
        """
        flip = self.signed_volume < 0
        perm = np.broadcast_to(np.arange(4), flip.shape + (4,)).copy()
        perm[flip] = [0, 1, 3, 2]
        nodes = np.take_along_axis(self.nodes, perm[..., None], axis=-2)
        return Tetrahedron(nodes), perm

    def outward_faces(self) -> Triangle:
        """The four faces with outward winding, shape (..., 4, 3, 3); face k is opposite node k."""
        faces = self.nodes[..., TET_FACES, :]
        flip = self.signed_volume < 0
        faces = np.where(flip[..., None, None, None], faces[..., [0, 2, 1], :], faces)
        return Triangle(faces)


def signed_volume(nodes: np.ndarray) -> np.ndarray:
    """Signed volume of tetrahedra given as (..., 4, 3) node arrays."""
    nodes = np.asarray(nodes, dtype=float)
    a = nodes[..., 1, :] - nodes[..., 0, :]
    b = nodes[..., 2, :] - nodes[..., 0, :]
    c = nodes[..., 3, :] - nodes[..., 0, :]
    return dot(a, np.cross(b, c)) / 6.0


@dataclass(frozen=True)
class LocalFrame:
    """
    Triangle-local Cartesian frame.

    Origin at p1, u along edge 3 (p1 -> p2), w normal by the right-hand
    rule, v = w x u. Edge i goes from p_{i+1} to p_{i-1}; m_hat_i is its
    in-plane normal pointing out of the triangle.
    """
    nodes: np.ndarray
    origin: np.ndarray
    u_hat: np.ndarray
    v_hat: np.ndarray
    w_hat: np.ndarray
    s_hat: np.ndarray
    m_hat: np.ndarray
    s_len: np.ndarray
    u3: np.ndarray
    v3: np.ndarray

    @property
    def diameter(self) -> np.ndarray:
        return self.s_len.max(axis=-1)

    def to_global(self, vec: np.ndarray) -> np.ndarray:
        """Map (u, v, w) components to the global frame."""
        vec = np.asarray(vec, dtype=float)
        return (vec[..., 0, None] * self.u_hat + vec[..., 1, None] * self.v_hat
                + vec[..., 2, None] * self.w_hat)


@dataclass(frozen=True)
class ProjectedSource:
    """
    Source point expressed in a triangle's local frame.

    r0 = rho - w0 * w_hat, so w0 is the (signed) height of the triangle
    plane above the source along w_hat. All per-edge arrays have a
    trailing axis of length 3 indexed like the frame's edges.
    """
    u0: np.ndarray
    v0: np.ndarray
    w0: np.ndarray
    t0: np.ndarray
    s_minus: np.ndarray
    s_plus: np.ndarray
    R0: np.ndarray
    R_minus: np.ndarray
    R_plus: np.ndarray
    f2: np.ndarray
    Rs: np.ndarray
    beta: np.ndarray
    Rd: np.ndarray
    exterior: np.ndarray
    on_element: np.ndarray
    edge_r3: np.ndarray
    edge_r5: np.ndarray


class VolumeCoordinates(NamedTuple):
    """Signed volume, constant terms and gradient matrix of the volume coordinates."""
    volume: np.ndarray
    a_tilde: np.ndarray
    Lambda: np.ndarray


def build_local_frame(t: Triangle) -> LocalFrame:
    """
    Build the local frame of a triangle.

    Args:
        t: Triangle or stack of triangles

    Returns:
        LocalFrame with u_hat = s_hat_3 and w_hat = s_hat_1 x s_hat_2 normalised

    Raises:
        DegenerateTriangleError: if area <= 1e-14 * (max edge)^2

    Examples:
        >>> f = build_local_frame(Triangle.from_points((0, 0, 0), (1, 0, 0), (0, 1, 0)))
        >>> f.w_hat.tolist(), f.u_hat.tolist(), float(f.s_len[2])
        ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 1.0)
    """
    if not isinstance(t, Triangle):
        t = Triangle(t)
    P = t.nodes
    edges = P[..., EDGE_END, :] - P[..., EDGE_START, :]
    s_len = norm(edges)
    cross = np.cross(P[..., 1, :] - P[..., 0, :], P[..., 2, :] - P[..., 0, :])
    twice_area = norm(cross)
    max_edge = s_len.max(axis=-1)
    degenerate = 0.5 * twice_area <= AREA_EPS * max_edge ** 2
    if np.any(degenerate):
        raise DegenerateTriangleError(
            f"{int(np.count_nonzero(degenerate))} triangle(s) with area below {AREA_EPS} x (max edge)^2"
        )

    s_hat = edges / s_len[..., None]
    w_hat = cross / twice_area[..., None]
    u_hat = s_hat[..., 2, :]
    v_hat = np.cross(w_hat, u_hat)
    m_hat = np.cross(s_hat, w_hat[..., None, :])
    d3 = P[..., 2, :] - P[..., 0, :]
    return LocalFrame(
        nodes=P,
        origin=P[..., 0, :],
        u_hat=u_hat,
        v_hat=v_hat,
        w_hat=w_hat,
        s_hat=s_hat,
        m_hat=m_hat,
        s_len=s_len,
        u3=dot(d3, u_hat),
        v3=dot(d3, v_hat),
    )


def _atan_ratio(z: np.ndarray) -> np.ndarray:
    """atan(z)/z for z >= 0."""
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 - z2 / 3.0 + z2 * z2 / 5.0, np.arctan(zs) / zs)


def _atan_remainder(z: np.ndarray) -> np.ndarray:
    """(z - atan(z))/z^3 for z >= 0."""
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    z2 = z * z
    series = 1.0 / 3.0 - z2 / 5.0 + z2 * z2 / 7.0 - z2 * z2 * z2 / 9.0
    return np.where(small, series, (zs - np.arctan(zs)) / zs ** 3)


def project_source(f: LocalFrame, r0) -> ProjectedSource:
    """
    Express a source point in a triangle's local frame.

    Besides the coordinates, this evaluates every per-edge quantity used
    by the closed-form integrals: t_i, s_i^-/s_i^+, R_i^0, R_i^-/R_i^+,
    f2_i, R_i^s, beta_i and R_i^d. Two additional per-edge terms are
    returned for projections outside the triangle:

        edge_r3_i = t_i * integral ds / ((t_i^2 + s^2) R)
        edge_r5_i = t_i * integral ds / ((t_i^2 + s^2) R^3)

    both evaluated in forms that stay accurate as w0 -> 0.

    Args:
        f: Local frame (single or stacked)
        r0: Source position, broadcastable to the frame's leading shape

    Returns:
        ProjectedSource; on_element marks sources lying on the triangle
    """
    r0 = np.broadcast_to(np.asarray(r0, dtype=float), f.origin.shape)
    d = r0 - f.origin
    u0 = dot(d, f.u_hat)
    v0 = dot(d, f.v_hat)
    w0 = -dot(d, f.w_hat)

    A = f.nodes[..., EDGE_START, :] - r0[..., None, :]
    B = f.nodes[..., EDGE_END, :] - r0[..., None, :]
    t0 = dot(A, f.m_hat)
    s_minus = dot(A, f.s_hat)
    s_plus = dot(B, f.s_hat)
    R_minus = norm(A)
    R_plus = norm(B)
    w = w0[..., None]
    w2 = w * w
    w_abs = np.abs(w)
    R0_sq = t0 * t0 + w2
    R0 = np.sqrt(R0_sq)

    tol = CLASSIFY_EPS * f.diameter
    exterior = t0.min(axis=-1) < -tol
    straddles = s_plus * s_minus < 0
    same_side = ~straddles & (s_plus * s_minus > 0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Rs_direct = (s_plus / R_plus - s_minus / R_minus) / R0_sq
        Rs_conj = (s_plus ** 2 - s_minus ** 2) / (
            R_plus * R_minus * (s_plus * R_minus + s_minus * R_plus)
        )
        Rs = np.where(same_side, Rs_conj, Rs_direct)
        Rd = 1.0 / R_minus - 1.0 / R_plus

        f2_pos = np.log((R_plus + s_plus) / (R_minus + s_minus))
        f2_neg = np.log((R_minus - s_minus) / (R_plus - s_plus))
        f2_mix = np.log((R_plus + s_plus) * (R_minus - s_minus)) - np.log(R0_sq)
        f2 = np.select([s_minus >= 0, s_plus <= 0], [f2_pos, f2_neg], default=f2_mix)

        den_p = R0_sq + w_abs * R_plus
        den_m = R0_sq + w_abs * R_minus
        beta = np.where(
            R0_sq > 0,
            np.arctan(t0 * s_plus / den_p) - np.arctan(t0 * s_minus / den_m),
            0.0,
        )

        RR = R_plus * R_minus
        Y = t0 * t0 * RR + w2 * s_plus * s_minus
        P = np.abs(t0) * R0_sq * Rs * RR
        z = np.where(Y > 0, w_abs * P / Y, 0.0)
        r3_pos = t0 * R0_sq * Rs * RR / Y * _atan_ratio(z)
        r3_neg = np.sign(t0) * np.arctan2(w_abs * P, Y) / w_abs
        edge_r3 = np.where(t0 == 0, 0.0, np.where(Y > 0, r3_pos, r3_neg))

        rr_minus_ss = np.where(
            same_side,
            (R0_sq * (s_plus ** 2 + s_minus ** 2) + R0_sq ** 2) / (RR + s_plus * s_minus),
            RR - s_plus * s_minus,
        )
        r5_pos = t0 * Rs * (rr_minus_ss / Y - (R0_sq * RR / Y) * (P / Y) ** 2 * _atan_remainder(z))
        r5_neg = (edge_r3 - t0 * Rs) / w2
        edge_r5 = np.where(t0 == 0, 0.0, np.where(Y > 0, r5_pos, r5_neg))

    tiny = tol[..., None]
    on_edge = (R0 <= tiny) & straddles
    at_node = (R_minus <= tiny) | (R_plus <= tiny)
    on_element = (~exterior & (np.abs(w0) <= tol)) | np.any(on_edge | at_node, axis=-1)

    return ProjectedSource(
        u0=u0, v0=v0, w0=w0, t0=t0,
        s_minus=s_minus, s_plus=s_plus,
        R0=R0, R_minus=R_minus, R_plus=R_plus,
        f2=f2, Rs=Rs, beta=beta, Rd=Rd,
        exterior=exterior, on_element=on_element,
        edge_r3=edge_r3, edge_r5=edge_r5,
    )


def volume_coordinate_data(t: Tetrahedron) -> VolumeCoordinates:
    """
    Volume (barycentric) coordinate data of a tetrahedron.

    The coordinates are xi(r) = (a_tilde + Lambda^T r) / (6 V), so the
    basis gradients are Lambda[:, j] / (6 V). V is signed; Lambda and
    a_tilde carry the matching sign so xi does not depend on orientation.

    Args:
        t: Tetrahedron or stack of tetrahedra

    Returns:
        VolumeCoordinates(volume, a_tilde (..., 4), Lambda (..., 3, 4))

    Raises:
        DegenerateTetrahedronError: if |V| <= 1e-14 * (max edge)^3

    Examples:
        >>> vc = volume_coordinate_data(Tetrahedron(np.vstack([np.zeros(3), np.eye(3)])))
        >>> float(vc.volume)
        0.16666666666666666
    """
    if not isinstance(t, Tetrahedron):
        t = Tetrahedron(t)
    V = t.signed_volume
    degenerate = np.abs(V) <= VOLUME_EPS * t.max_edge ** 3
    if np.any(degenerate):
        raise DegenerateTetrahedronError(
            f"{int(np.count_nonzero(degenerate))} tetrahedron(s) with volume below {VOLUME_EPS} x (max edge)^3"
        )
    X = np.concatenate([np.ones(t.nodes.shape[:-1] + (1,)), t.nodes], axis=-1)
    C = np.linalg.inv(X)
    six_v = 6.0 * V[..., None]
    a_tilde = six_v * C[..., 0, :]
    Lambda = six_v[..., None] * C[..., 1:, :]
    return VolumeCoordinates(volume=V, a_tilde=a_tilde, Lambda=Lambda)


def barycentric(t: Tetrahedron, points: np.ndarray) -> np.ndarray:
    """Volume coordinates of points (broadcast against the tetra stack), shape (..., 4)."""
    vc = volume_coordinate_data(t)
    points = np.asarray(points, dtype=float)
    return (vc.a_tilde + np.einsum("...ij,...i->...j", vc.Lambda, points)) / (6.0 * vc.volume[..., None])


def point_triangle_distance(points: np.ndarray, t: Triangle) -> np.ndarray:
    """
    Euclidean distance from points to triangles (broadcast over leading axes).

    Uses the plane distance when the projection falls inside the
    triangle, otherwise the nearest of the three edge segments.
    """
    if not isinstance(t, Triangle):
        t = Triangle(t)
    points = np.asarray(points, dtype=float)
    P = t.nodes
    normal = t.normal
    rel = points - P[..., 0, :]
    height = dot(rel, normal)
    foot = points - height[..., None] * normal

    inside = np.ones(np.broadcast_shapes(foot.shape[:-1], P.shape[:-2]), dtype=bool)
    for k in range(3):
        a = P[..., EDGE_START[k], :]
        b = P[..., EDGE_END[k], :]
        inside &= dot(np.cross(b - a, foot - a), normal) >= 0

    edge_dist = []
    for k in range(3):
        a = P[..., EDGE_START[k], :]
        b = P[..., EDGE_END[k], :]
        ab = b - a
        s = np.clip(dot(points - a, ab) / dot(ab, ab), 0.0, 1.0)
        edge_dist.append(norm(points - (a + s[..., None] * ab)))
    return np.where(inside, np.abs(height), np.minimum.reduce(edge_dist))
