"""
Simplex quadrature.

Fixed-degree Gauss-Jacobi rules on triangles and tetrahedra, used by the
full-subtraction (FS) source vectors, and an adaptive subdivision
integrator that serves as the high-accuracy reference for the
closed-form kernels.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .errors import NoConvergenceError, UnsupportedOrderError
from .geometry import norm, signed_volume

logger = logging.getLogger(__name__)

SUPPORTED_DEGREES = (2, 4, 6)
ORACLE_DEGREE = 6
MAX_DEPTH = 12
MAX_CELLS = 2_000_000

# Children of a triangle (a, b, c) with midpoints ab, bc, ca appended as 3, 4, 5
_TRI_CHILDREN = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])
_TRI_MIDPOINTS = np.array([[0, 1], [1, 2], [2, 0]])

# Red refinement of a tetrahedron; midpoints m01 m02 m03 m12 m13 m23 appended as 4..9
_TET_MIDPOINTS = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
_TET_CHILDREN = np.array([
    [0, 4, 5, 6],
    [4, 1, 7, 8],
    [5, 7, 2, 9],
    [6, 8, 9, 3],
    [5, 8, 4, 7],
    [5, 8, 7, 9],
    [5, 8, 9, 6],
    [5, 8, 6, 4],
])


@dataclass(frozen=True)
class QuadratureRule:
    """
    Quadrature rule on the reference simplex.

    Points are barycentric coordinates, shape (m, dimension + 1); weights
    sum to 1, so integrals are measure * sum(w * g).
    """
    dimension: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def map_points(self, vertices: np.ndarray) -> np.ndarray:
        """Physical points for a simplex (or stack), shape (..., m, 3)."""
        return np.einsum("qi,...ij->...qj", self.points, vertices)

    def integrate(self, vertices: np.ndarray, integrand: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """
        Integrate over one simplex or a stack of simplices.

        Args:
            vertices: (..., dimension + 1, 3) vertex coordinates
            integrand: maps points (..., m, 3) to values (..., m) or (..., m, k)

        Returns:
            Integral per simplex, shape (...) or (..., k)
        """
        vertices = np.asarray(vertices, dtype=float)
        values = np.asarray(integrand(self.map_points(vertices)))
        measure = simplex_measure(vertices)
        if values.ndim == vertices.ndim - 1:
            return measure * np.einsum("q,...q->...", self.weights, values)
        return measure[..., None] * np.einsum("q,...qk->...k", self.weights, values)


def _gauss_jacobi_unit(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """n-point rule on [0, 1] for the weight (1 - x)^alpha."""
    xi, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + xi) / 2.0, w * 0.5 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _conical_product_rule(dimension: int, degree: int) -> QuadratureRule:
    n = degree // 2 + 1
    if dimension == 2:
        u, wu = _gauss_jacobi_unit(n, 1.0)
        v, wv = _gauss_jacobi_unit(n, 0.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        x = U
        y = (1.0 - U) * V
        coords = np.stack([x.ravel(), y.ravel()], axis=-1)
    elif dimension == 3:
        u, wu = _gauss_jacobi_unit(n, 2.0)
        v, wv = _gauss_jacobi_unit(n, 1.0)
        s, ws = _gauss_jacobi_unit(n, 0.0)
        U, V, S = np.meshgrid(u, v, s, indexing="ij")
        W = wu[:, None, None] * wv[None, :, None] * ws[None, None, :]
        x = U
        y = (1.0 - U) * V
        z = (1.0 - U) * (1.0 - V) * S
        coords = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)
    else:
        raise ValueError(f"Unsupported simplex dimension: {dimension}")

    weights = W.ravel()
    weights = weights / weights.sum()
    points = np.concatenate([1.0 - coords.sum(axis=-1, keepdims=True), coords], axis=-1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(dimension=dimension, degree=degree, points=points, weights=weights)


def get_rule(dimension: int, degree: int) -> QuadratureRule:
    """
    Gauss-Jacobi conical-product rule exact for total degree <= degree.

    Args:
        dimension: 2 for triangles, 3 for tetrahedra
        degree: One of 2, 4, 6

    Returns:
        QuadratureRule with (degree // 2 + 1) ** dimension points

    Raises:
        UnsupportedOrderError: if degree is not supported

    Examples:
        >>> rule = get_rule(2, 2)
        >>> rule.points.shape, round(float(rule.weights.sum()), 14)
        ((4, 3), 1.0)
    """
    if degree not in SUPPORTED_DEGREES:
        raise UnsupportedOrderError(f"Quadrature degree {degree} not in {SUPPORTED_DEGREES}")
    return _conical_product_rule(int(dimension), int(degree))


def simplex_measure(vertices: np.ndarray) -> np.ndarray:
    """Area of triangles (..., 3, 3) or volume of tetrahedra (..., 4, 3)."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.shape[-2] == 3:
        return 0.5 * norm(np.cross(vertices[..., 1, :] - vertices[..., 0, :],
                                   vertices[..., 2, :] - vertices[..., 0, :]))
    if vertices.shape[-2] == 4:
        return np.abs(signed_volume(vertices))
    raise ValueError(f"Expected 3 or 4 vertices, got {vertices.shape[-2]}")


def subdivide(vertices: np.ndarray) -> np.ndarray:
    """
    Uniform refinement: 4 similar children per triangle, 8 per tetrahedron.

    Returns:
        Children with shape (..., 4 | 8, nv, 3)
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.shape[-2] == 3:
        pairs, children = _TRI_MIDPOINTS, _TRI_CHILDREN
    elif vertices.shape[-2] == 4:
        pairs, children = _TET_MIDPOINTS, _TET_CHILDREN
    else:
        raise ValueError(f"Expected 3 or 4 vertices, got {vertices.shape[-2]}")
    mids = 0.5 * (vertices[..., pairs[:, 0], :] + vertices[..., pairs[:, 1], :])
    extended = np.concatenate([vertices, mids], axis=-2)
    return extended[..., children, :]


def composite_integrate(
    simplex: np.ndarray,
    integrand: Callable[[np.ndarray], np.ndarray],
    depth: int = 2,
    degree: int = ORACLE_DEGREE,
) -> float | np.ndarray:
    """
    Fixed rule on the uniform depth-level refinement of one simplex.

    Never raises; rough estimates for non-smooth integrands such as |g|
    come from here.
    """
    simplex = np.asarray(simplex, dtype=float)
    rule = get_rule(simplex.shape[-2] - 1, degree)
    cells = simplex[None]
    for _ in range(depth):
        cells = subdivide(cells).reshape((-1,) + simplex.shape)
    pts = rule.map_points(cells)
    values = np.asarray(integrand(pts.reshape(-1, 3)))
    values = values.reshape(pts.shape[:2] + values.shape[1:])
    measure = simplex_measure(cells).reshape((-1, 1) + (1,) * (values.ndim - 2))
    return np.einsum("q,cq...->...", rule.weights, values * measure)


def adaptive_integrate(
    simplex: np.ndarray,
    integrand: Callable[[np.ndarray], np.ndarray],
    rel_tol: float = 1e-12,
    max_depth: int = MAX_DEPTH,
) -> float | np.ndarray:
    """
    Integrate a (possibly near-singular) function over one simplex.

    Cells are refined locally. A cell is accepted when the sum over its
    children differs from its own estimate by at most
    rel_tol * scale * (cell measure / simplex measure), where scale
    estimates the integral of |g|. The result is the ordered sum of the
    accepted children.

    The per-cell budget shrinks with the cell measure, so integrands with
    a kink or a jump (|g| of a sign-changing g, for example) never meet
    it along the kink and end in NoConvergenceError. Use
    composite_integrate for such functions.

    Args:
        simplex: (3, 3) triangle or (4, 3) tetrahedron vertices
        integrand: maps points (m, 3) to values (m,) or (m, k)
        rel_tol: Relative tolerance
        max_depth: Maximum refinement depth

    Returns:
        Scalar or (k,) integral

    Raises:
        NoConvergenceError: if refinement exceeds max_depth or the cell budget
    """
    simplex = np.asarray(simplex, dtype=float)
    rule = get_rule(simplex.shape[-2] - 1, ORACLE_DEGREE)
    total_measure = float(simplex_measure(simplex))

    def evaluate(cells: np.ndarray) -> np.ndarray:
        flat = cells.reshape((-1,) + cells.shape[-2:])
        pts = rule.map_points(flat)
        values = np.asarray(integrand(pts.reshape(-1, 3)))
        values = values.reshape(pts.shape[:2] + values.shape[1:])
        measure = simplex_measure(flat)
        weighted = np.einsum("q,cq...->c...", rule.weights, values)
        out = weighted * measure.reshape((-1,) + (1,) * (weighted.ndim - 1))
        return out.reshape(cells.shape[:-2] + out.shape[1:])

    # Scale from a two-level estimate of the integral of |g|
    scale = float(np.max(composite_integrate(simplex, lambda p: np.abs(integrand(p)))))
    if scale == 0.0:
        return evaluate(simplex[None])[0]

    cells = simplex[None]
    coarse = evaluate(cells)
    accepted = []
    for depth in range(1, max_depth + 1):
        children = subdivide(cells)
        fine = evaluate(children)
        fine_sum = fine.sum(axis=1)
        diff = np.abs(fine_sum - coarse)
        if diff.ndim > 1:
            diff = diff.max(axis=tuple(range(1, diff.ndim)))
        fraction = simplex_measure(cells) / total_measure
        ok = diff <= rel_tol * scale * fraction
        accepted.append(fine_sum[ok])
        if np.all(ok):
            logger.debug(f"Adaptive integration converged at depth {depth}")
            return np.concatenate(accepted, axis=0).sum(axis=0)
        cells = children[~ok].reshape((-1,) + simplex.shape)
        coarse = fine[~ok].reshape((-1,) + fine.shape[2:])
        if cells.shape[0] > MAX_CELLS:
            raise NoConvergenceError(
                f"Adaptive integration needs more than {MAX_CELLS} cells at depth {depth}",
                iterations=depth,
            )
    raise NoConvergenceError(f"Adaptive integration did not converge within depth {max_depth}",
                             iterations=max_depth)
