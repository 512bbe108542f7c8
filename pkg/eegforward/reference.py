"""
Reference potentials for layered isotropic spheres and error metrics.

The sphere potential is a Legendre series for a dipole in the innermost
layer, evaluated on the outer surface. Layer coefficients are carried
from the outer surface inwards in log scale, so strongly eccentric
sources with thousands of terms stay finite.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import legder, legval

from .errors import InvalidRadiiError, SourceTooDeepForConvergenceError, ZeroReferenceError
from .geometry import norm
from .potentials import Dipole

logger = logging.getLogger(__name__)

SERIES_RTOL = 1e-10
MAX_TERMS = 50_000
MIN_TERMS = 10


@dataclass(frozen=True)
class SphereModel:
    """
    Concentric isotropic layers, radii outermost first.

    n_terms fixes the truncation; when None it is chosen from the
    source eccentricity.
    """
    radii: tuple[float, ...]
    conductivities: tuple[float, ...]
    n_terms: int | None = None

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        sigmas = tuple(float(s) for s in self.conductivities)
        if not radii:
            raise InvalidRadiiError("At least one layer is required")
        if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
            raise InvalidRadiiError(f"Radii must be positive and strictly decreasing, got {list(radii)}")
        if len(sigmas) != len(radii) or any(s <= 0 for s in sigmas):
            raise InvalidRadiiError(f"Need {len(radii)} positive conductivities, got {list(sigmas)}")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "conductivities", sigmas)


@dataclass
class ErrorReport:
    re: float
    rdm: float
    mag: float


def _inner_coefficients(model: SphereModel, n: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Coefficients of b (r/R)^n + c (R/r)^(n+1) at the innermost interface.

    Starts from the zero-flux solution on the outer surface (b = 1,
    c = n/(n+1)) and applies radial scaling inside each layer and the
    potential/current continuity at each interface. Returns (b, c, log_s)
    with the true coefficients equal to (b, c) * exp(log_s).
    """
    b = np.ones_like(n, dtype=float)
    c = n / (n + 1.0)
    log_s = np.zeros_like(b)
    radii, sigmas = model.radii, model.conductivities
    for k in range(len(radii) - 1):
        ratio = np.log(radii[k + 1] / radii[k])
        with np.errstate(divide="ignore"):
            lb = np.log(np.abs(b)) + n * ratio
            lc = np.log(np.abs(c)) - (n + 1.0) * ratio
        top = np.maximum(lb, lc)
        b = np.sign(b) * np.exp(lb - top)
        c = np.sign(c) * np.exp(lc - top)
        log_s += top

        kappa = sigmas[k] / sigmas[k + 1]
        potential = b + c
        flux = kappa * (n * b - (n + 1.0) * c)
        b, c = ((n + 1.0) * potential + flux) / (2 * n + 1.0), (n * potential - flux) / (2 * n + 1.0)
    return b, c, log_s


def _auto_terms(rho0: float) -> int:
    if rho0 <= 0.0:
        return MIN_TERMS
    log_rho = np.log(rho0)
    first = np.ceil(np.log(1e-16) / log_rho)
    n = int(np.ceil((np.log(1e-16) - 2.0 * np.log(first + 1.0)) / log_rho)) + MIN_TERMS
    return int(min(max(n, MIN_TERMS), MAX_TERMS))


def sphere_analytic_potential(model: SphereModel, d: Dipole, points) -> np.ndarray:
    """
    Zero-mean potential of a dipole on the outer sphere surface.

    Points are used by direction only.

    Args:
        model: Layered isotropic sphere
        d: Dipole strictly inside the innermost layer
        points: (P, 3) evaluation directions

    Returns:
        (P,) potentials in V, referenced to zero mean

    Raises:
        SourceTooDeepForConvergenceError: if the source is not inside the
            innermost layer or the series tail bound is not met

    Examples:
        >>> m = SphereModel((0.1,), (1.0,))
        >>> v = sphere_analytic_potential(m, Dipole((0, 0, 0), (0, 0, 1.0)), [[0, 0, 1], [0, 0, -1]])
        >>> np.allclose(v, [3 / (4 * np.pi * 0.01), -3 / (4 * np.pi * 0.01)])
        True
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    r_hat = points / norm(points)[:, None]
    r_inner = model.radii[-1]
    r0_len = float(norm(d.r0))
    rho0 = r0_len / r_inner
    if rho0 >= 1.0:
        raise SourceTooDeepForConvergenceError(
            f"Source at radius {r0_len} is not inside the innermost layer (radius {r_inner})"
        )
    r0_hat = d.r0 / r0_len if r0_len > 0 else np.zeros(3)

    n_terms = model.n_terms or _auto_terms(rho0)
    n = np.arange(1, n_terms + 1, dtype=float)
    b, c, log_s = _inner_coefficients(model, n)
    amplitude = (2 * n + 1.0) / ((n + 1.0) * c)
    if rho0 == 0.0:
        weights = np.where(n == 1, amplitude * np.exp(-log_s), 0.0)
    else:
        weights = amplitude * np.exp((n - 1.0) * np.log(rho0) - log_s)

    x = r_hat @ r0_hat
    q_r0 = float(d.q @ r0_hat)
    q_r = r_hat @ d.q
    tangential = q_r - x * q_r0

    # sum_n w_n (n P_n(x) q_r0 + P'_n(x) q_t), Clenshaw-evaluated Legendre series
    radial = legval(x, np.concatenate([[0.0], n * weights]))
    angular = legval(x, legder(np.concatenate([[0.0], weights])))
    total = radial * q_r0 + angular * tangential

    q_norm = float(norm(d.q))
    scale = float(np.max(np.abs(total))) if total.size else 0.0
    if rho0 > 0.0 and q_norm > 0.0:
        N = float(n_terms)
        tail = abs(weights[-1]) * (N + N * (N + 1.0)) * q_norm * rho0 / (1.0 - rho0)
        logger.debug(f"Sphere series: {n_terms} terms, tail bound {tail:.2e} vs scale {scale:.2e}")
        if tail > SERIES_RTOL * scale:
            raise SourceTooDeepForConvergenceError(
                f"Series tail {tail:.2e} above {SERIES_RTOL} x {scale:.2e} after {n_terms} terms"
            )

    values = total / (4.0 * np.pi * model.conductivities[-1] * r_inner ** 2)
    return values - values.mean()


def metrics(u_n, u_a) -> ErrorReport:
    """
    RE, RDM and MAG of a numerical solution against a reference.

    Raises:
        ZeroReferenceError: if the reference vector is zero

    Examples:
        >>> r = metrics([2.0, -2.0], [1.0, -1.0])
        >>> (r.re, round(r.rdm, 12), r.mag)
        (1.0, 0.0, 1.0)
    """
    u_n = np.asarray(u_n, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    if u_n.shape != u_a.shape:
        raise ValueError(f"Shape mismatch: {u_n.shape} vs {u_a.shape}")
    norm_a = float(np.linalg.norm(u_a))
    if norm_a == 0.0:
        raise ZeroReferenceError("Reference potential is identically zero")
    norm_n = float(np.linalg.norm(u_n))
    unit_n = u_n / norm_n if norm_n > 0 else np.zeros_like(u_n)
    return ErrorReport(
        re=float(np.linalg.norm(u_n - u_a)) / norm_a,
        rdm=float(np.linalg.norm(unit_n - u_a / norm_a)),
        mag=abs(1.0 - norm_n / norm_a),
    )


def metric_re_s(u_as, u_fs) -> float:
    """Relative difference of an FS solution against the AS solution."""
    u_as = np.asarray(u_as, dtype=float)
    u_fs = np.asarray(u_fs, dtype=float)
    norm_as = float(np.linalg.norm(u_as))
    if norm_as == 0.0:
        raise ZeroReferenceError("AS potential is identically zero")
    return float(np.linalg.norm(u_as - u_fs)) / norm_as
