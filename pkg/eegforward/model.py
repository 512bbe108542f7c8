"""
Global assembly and solution of the subtraction forward problem.

The correction potential u_c solves the pure-Neumann system K u_c = b
with b = -(b^s + b^v): b^s collects the boundary source vectors of the
outer surface and b^v the volume source vectors of every element whose
conductivity differs from sigma^inf. The total potential at an
electrode is u_c + u_inf at the nearest boundary node.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse

from .elements import (
    stiffness_element,
    surface_source_analytical,
    surface_source_quadrature,
    u_inf,
    volume_source_analytical,
    volume_source_quadrature,
    ZERO_JUMP_RTOL,
)
from .errors import (
    AnisotropicSourceRegionError,
    IncompatibleRHSError,
    NoConvergenceError,
    NonpositiveSigmaInfError,
    SourceOutsideMeshError,
    UnsupportedOrderError,
)
from .geometry import Tetrahedron, Triangle, barycentric
from .mesh import BoundarySurface, Mesh, extract_boundary
from .potentials import Dipole
from .quadrature import SUPPORTED_DEGREES

logger = logging.getLogger(__name__)

LOCATE_TOL = 1e-12
ISOTROPY_RTOL = 1e-10
COMPATIBILITY_RTOL = 1e-8


class SourceMethod(Enum):
    """How element source vectors are integrated."""
    AS = "as"   # closed-form (analytical subtraction)
    FS = "fs"   # fixed-degree quadrature (full subtraction)


@dataclass
class SourceLocation:
    """Tet containing the dipole and the isotropic conductivity there."""
    tet: int
    sigma_inf: float


@dataclass
class LinearSystem:
    K: sparse.csr_matrix
    b: np.ndarray


@dataclass
class CorrectionSolution:
    """Result of the projected PCG solve."""
    u_c: np.ndarray
    iterations: int
    residual: float


@dataclass
class ForwardSolution:
    """Correction potential on nodes plus referenced potentials at the requested points."""
    u_c: np.ndarray
    potentials: np.ndarray
    points: np.ndarray
    point_nodes: np.ndarray
    iterations: int
    residual: float
    sigma_inf: float


def find_source_element(mesh: Mesh, r0) -> SourceLocation:
    """
    Locate the tet containing r0 and the conductivity of its region.

    Ties on shared faces, edges and nodes go to the lowest tet index.

    Raises:
        SourceOutsideMeshError: if no tet contains r0
        AnisotropicSourceRegionError: if the source region is not isotropic
        NonpositiveSigmaInfError: if the source conductivity is not positive
    """
    r0 = np.asarray(r0, dtype=float)
    xi = barycentric(Tetrahedron(mesh.tet_nodes()), r0)
    inside = np.flatnonzero(np.all(xi >= -LOCATE_TOL, axis=1))
    if inside.size == 0:
        raise SourceOutsideMeshError(f"Source {r0.tolist()} is outside the mesh")
    tet = int(inside[0])
    region = int(mesh.regions[tet])
    tensor = mesh.conductivities[region]
    if not tensor.is_isotropic(ISOTROPY_RTOL):
        raise AnisotropicSourceRegionError(f"Source region {region} is anisotropic")
    sigma_inf = tensor.mean
    if sigma_inf <= 0:
        raise NonpositiveSigmaInfError(f"Source region {region} has conductivity {sigma_inf}")
    logger.debug(f"Source located in tet {tet} (region {region}, sigma_inf={sigma_inf})")
    return SourceLocation(tet=tet, sigma_inf=sigma_inf)


def assemble_stiffness(mesh: Mesh) -> sparse.csr_matrix:
    """Global stiffness matrix, symmetric with the constants as nullspace."""
    Ke = stiffness_element(Tetrahedron(mesh.tet_nodes()), mesh.sigma_per_tet())
    rows = np.broadcast_to(mesh.tets[:, :, None], Ke.shape)
    cols = np.broadcast_to(mesh.tets[:, None, :], Ke.shape)
    K = sparse.coo_matrix(
        (Ke.ravel(), (rows.ravel(), cols.ravel())),
        shape=(mesh.n_nodes, mesh.n_nodes),
    ).tocsr()
    logger.info(f"Assembled stiffness: {mesh.n_nodes} unknowns, {K.nnz} nonzeros")
    return K


def _check_order(method: SourceMethod, order: int | None):
    if method is SourceMethod.FS and order not in SUPPORTED_DEGREES:
        raise UnsupportedOrderError(f"FS needs an order in {SUPPORTED_DEGREES}, got {order}")


def assemble_source_parts(
    mesh: Mesh,
    boundary: BoundarySurface,
    dipole: Dipole,
    method: SourceMethod = SourceMethod.AS,
    order: int | None = None,
    location: SourceLocation | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodal boundary (b^s) and volume (b^v) source vectors, unsigned and unprojected."""
    method = SourceMethod(method)
    _check_order(method, order)
    if location is None:
        location = find_source_element(mesh, dipole.r0)
    sigma_inf = location.sigma_inf
    n = mesh.n_nodes

    triangles = Triangle(mesh.nodes[boundary.triangles])
    if method is SourceMethod.AS:
        bs_e = surface_source_analytical(triangles, dipole)
    else:
        bs_e = surface_source_quadrature(triangles, dipole, order)
    bs = np.bincount(boundary.triangles.ravel(), weights=bs_e.ravel(), minlength=n)

    sigma_c = mesh.sigma_per_tet() - sigma_inf * np.eye(3)
    active = np.flatnonzero(np.linalg.norm(sigma_c, axis=(1, 2)) > ZERO_JUMP_RTOL * sigma_inf)
    bv = np.zeros(n)
    if active.size:
        tets = Tetrahedron(mesh.nodes[mesh.tets[active]])
        if method is SourceMethod.AS:
            bv_e = volume_source_analytical(tets, sigma_c[active], sigma_inf, dipole)
        else:
            bv_e = volume_source_quadrature(tets, sigma_c[active], sigma_inf, dipole, order)
        bv = np.bincount(mesh.tets[active].ravel(), weights=bv_e.ravel(), minlength=n)
    logger.debug(f"Source vectors: {len(boundary)} boundary triangles, {active.size} jump elements")
    return bs, bv


def assemble_source(
    mesh: Mesh,
    boundary: BoundarySurface,
    dipole: Dipole,
    method: SourceMethod = SourceMethod.AS,
    order: int | None = None,
    location: SourceLocation | None = None,
) -> np.ndarray:
    """
    Right-hand side b = -(b^s + b^v), projected to zero sum.

    The removed mean is the compatibility defect of the discrete source:
    round-off for AS, the quadrature flux error for FS.

    Raises:
        SourceOutsideMeshError, AnisotropicSourceRegionError: from source location
        UnsupportedOrderError: FS without a supported order
    """
    bs, bv = assemble_source_parts(mesh, boundary, dipole, method, order, location)
    b = -(bs + bv)
    defect = float(b.sum())
    scale = float(np.linalg.norm(b))
    b = b - b.mean()
    if scale > 0 and abs(defect) > COMPATIBILITY_RTOL * scale:
        logger.warning(f"Source vector compatibility defect {defect:.3e} (|b|={scale:.3e}) removed")
    else:
        logger.debug(f"Source vector compatibility defect {defect:.3e} removed")
    return b


def solve_correction(
    system: LinearSystem,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
) -> CorrectionSolution:
    """
    Jacobi-preconditioned CG on the zero-mean subspace.

    Args:
        system: K (symmetric, constants in the nullspace) and b
        rel_tol: Target ||K u - b|| / ||b||
        max_iter: Iteration cap (default 10 N)

    Returns:
        CorrectionSolution with zero-mean u_c

    Raises:
        IncompatibleRHSError: if |sum(b)| > 1e-8 ||b||
        NoConvergenceError: if the cap is reached
    """
    K = system.K
    b = np.asarray(system.b, dtype=float)
    n = b.shape[0]
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CorrectionSolution(u_c=np.zeros(n), iterations=0, residual=0.0)
    if abs(b.sum()) > COMPATIBILITY_RTOL * b_norm:
        raise IncompatibleRHSError(f"sum(b) = {b.sum():.3e} exceeds {COMPATIBILITY_RTOL} x |b| = {b_norm:.3e}")
    if max_iter is None:
        max_iter = 10 * n

    b = b - b.mean()
    b_norm = float(np.linalg.norm(b))
    diag = K.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    def precondition(r: np.ndarray) -> np.ndarray:
        z = inv_diag * r
        return z - z.mean()

    x = np.zeros(n)
    r = b.copy()
    z = precondition(r)
    p = z.copy()
    rz = float(r @ z)
    residual = 1.0
    for k in range(1, max_iter + 1):
        Kp = K @ p
        alpha = rz / float(p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        r -= r.mean()
        residual = float(np.linalg.norm(r)) / b_norm
        if residual <= rel_tol:
            x -= x.mean()
            true_residual = float(np.linalg.norm(K @ x - b)) / b_norm
            logger.info(f"PCG converged in {k} iterations (residual {true_residual:.2e})")
            return CorrectionSolution(u_c=x, iterations=k, residual=true_residual)
        z = precondition(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergenceError(
        f"PCG did not reach {rel_tol} in {max_iter} iterations (residual {residual:.2e})",
        iterations=max_iter,
        residual=residual,
    )


def snap_to_boundary(mesh: Mesh, boundary: BoundarySurface, points) -> np.ndarray:
    """Nearest boundary node per point; ties go to the lowest node index."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    candidates = boundary.node_ids
    coords = mesh.nodes[candidates]
    dist2 = ((points[:, None, :] - coords[None, :, :]) ** 2).sum(axis=-1)
    return candidates[np.argmin(dist2, axis=1)]


def total_potential(
    mesh: Mesh,
    boundary: BoundarySurface,
    u_c: np.ndarray,
    dipole: Dipole,
    sigma_inf: float,
    points,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Zero-mean total potential at points snapped to boundary nodes.

    Returns:
        (potentials, node ids used for each point)

    Raises:
        EvaluationAtSourceError: if a snapped node coincides with the dipole
    """
    nodes = snap_to_boundary(mesh, boundary, points)
    values = u_c[nodes] + u_inf(dipole, sigma_inf, mesh.nodes[nodes])
    return values - values.mean(), nodes


def forward_solve(
    mesh: Mesh,
    dipole: Dipole,
    method: SourceMethod = SourceMethod.AS,
    order: int | None = None,
    rel_tol: float = 1e-10,
    stiffness: sparse.csr_matrix | None = None,
    boundary: BoundarySurface | None = None,
    points=None,
) -> ForwardSolution:
    """
    Locate, assemble, solve and evaluate in one call.

    K and the boundary can be passed in to reuse them across dipoles.
    Points default to the mesh electrodes, or every boundary node when
    the mesh has none.
    """
    method = SourceMethod(method)
    if boundary is None:
        boundary = extract_boundary(mesh)
    if stiffness is None:
        stiffness = assemble_stiffness(mesh)
    location = find_source_element(mesh, dipole.r0)
    b = assemble_source(mesh, boundary, dipole, method, order, location)
    solution = solve_correction(LinearSystem(K=stiffness, b=b), rel_tol=rel_tol)
    if points is None:
        points = mesh.electrodes if len(mesh.electrodes) else mesh.nodes[boundary.node_ids]
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    potentials, point_nodes = total_potential(
        mesh, boundary, solution.u_c, dipole, location.sigma_inf, points
    )
    return ForwardSolution(
        u_c=solution.u_c,
        potentials=potentials,
        points=points,
        point_nodes=point_nodes,
        iterations=solution.iterations,
        residual=solution.residual,
        sigma_inf=location.sigma_inf,
    )
