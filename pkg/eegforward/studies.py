"""
Accuracy studies: element error vs d/a, layered-sphere accuracy, FS-vs-AS differences
and the AS/FS per-element cost benchmark.

Each study returns a list of row dicts in a fixed order; write_csv turns
them into CSV with a fixed header. Randomness (dipole directions and
orientations) comes only from the seeded generator in the config.
"""
import csv
import logging
import sys
import time
from typing import Iterable, Sequence, TextIO

import numpy as np

from .config import DrefStudyConfig, SphereStudyConfig
from .elements import (
    ConductivityTensor,
    surface_source_analytical,
    surface_source_quadrature,
    volume_source_analytical,
    volume_source_quadrature,
    ZERO_JUMP_RTOL,
)
from .errors import ConfigError
from .geometry import TET_EDGES, Tetrahedron, Triangle, norm, point_triangle_distance
from .mesh import Mesh, build_layered_sphere_mesh, extract_boundary, extract_interfaces, icosphere
from .model import ForwardSolution, SourceMethod, assemble_stiffness, forward_solve
from .potentials import Dipole
from .reference import SphereModel, metric_re_s, metrics, sphere_analytic_potential

logger = logging.getLogger(__name__)

ELEMENT_ERROR_COLUMNS = ["shape", "d_over_a", "order", "re_e"]
SPHERE_COLUMNS = ["distance", "eccentricity", "dipole", "method", "re", "rdm", "mag"]
DREF_COLUMNS = ["level", "distance", "dipole", "d_over_a", "order", "re_s"]
SOLVE_COLUMNS = ["row", "x", "y", "z", "potential", "iterations", "residual"]

ELEMENT_MOMENT = (1e-8, 0.0, 0.0)  # 10 nAm along x
ELEMENT_SIGMA_JUMP = 0.5
ELEMENT_SIGMA_INF = 0.33


def unit_triangle(side: float = 1.0) -> Triangle:
    """Equilateral triangle in the x = 0 plane, centred on the origin, normal +x."""
    h = side * np.sqrt(3.0)
    return Triangle.from_points(
        (0.0, -side / 2, -h / 6),
        (0.0, side / 2, -h / 6),
        (0.0, 0.0, h / 3),
    )


def unit_tetrahedron(side: float = 1.0) -> Tetrahedron:
    """Tetrahedron on the x <= 0 side with one face in the x = 0 plane."""
    h = side * np.sqrt(3.0)
    return Tetrahedron.from_points(
        (0.0, 0.0, h / 3),
        (0.0, side / 2, -h / 6),
        (0.0, -side / 2, -h / 6),
        (-h / 3, 0.0, 0.0),
    )


def _element_vectors(shape: str, side: float, dipole: Dipole, orders: Sequence[int]):
    if shape == "tri":
        t = unit_triangle(side)
        exact = surface_source_analytical(t, dipole)
        return exact, [surface_source_quadrature(t, dipole, n) for n in orders]
    if shape == "tet":
        t = unit_tetrahedron(side)
        sigma_c = ConductivityTensor.isotropic(ELEMENT_SIGMA_JUMP)
        exact = volume_source_analytical(t, sigma_c, ELEMENT_SIGMA_INF, dipole)
        approx = [volume_source_quadrature(t, sigma_c, ELEMENT_SIGMA_INF, dipole, n) for n in orders]
        return exact, approx
    raise ValueError(f"Unknown element shape '{shape}', expected 'tri' or 'tet'")


def element_error_rows(
    shape: str,
    ratios: Sequence[float],
    orders: Sequence[int],
    side: float = 1.0,
) -> list[dict]:
    """
    Relative error of FS element vectors against the analytic ones.

    The dipole sits at (d, 0, 0) with d = ratio * side, on the normal
    through the centroid of the face in the x = 0 plane.

    Args:
        shape: "tri" for the boundary vector, "tet" for the volume vector
        ratios: d/a values (> 0)
        orders: Quadrature degrees (2, 4 or 6)
        side: Element side length a in m

    Returns:
        One row per (ratio, order), ratios outermost
    """
    if side <= 0:
        raise ValueError(f"Side length must be positive, got {side}")
    rows = []
    for ratio in ratios:
        if ratio <= 0:
            raise ValueError(f"d/a ratios must be positive, got {ratio}")
        dipole = Dipole((ratio * side, 0.0, 0.0), ELEMENT_MOMENT)
        exact, approx = _element_vectors(shape, side, dipole, orders)
        scale = float(np.linalg.norm(exact))
        for order, b_n in zip(orders, approx):
            re_e = float(np.linalg.norm(b_n - exact)) / scale
            rows.append({"shape": shape, "d_over_a": float(ratio), "order": int(order), "re_e": re_e})
    logger.info(f"Element-error study ({shape}): {len(rows)} rows")
    return rows


def _orient_moment(r_hat: np.ndarray, orientation: str, moment: float, rng: np.random.Generator) -> np.ndarray:
    if orientation == "radial":
        return moment * r_hat
    direction = rng.standard_normal(3)
    if orientation == "tangential":
        direction -= (direction @ r_hat) * r_hat
    return moment * direction / np.linalg.norm(direction)


def place_dipoles(
    level: int,
    radius: float,
    distances: Sequence[float],
    count: int,
    orientation: str,
    moment: float,
    rng: np.random.Generator,
) -> list[tuple[float, int, Dipole]]:
    """
    Dipoles at the given depths below a spherical interface.

    Directions are drawn without replacement from the icosphere vertices of
    the interface, so each source lies on a ray through a mesh node and
    stays inside the polyhedral inner region. The same directions and
    moments are reused for every distance.

    Returns:
        (distance, dipole index, Dipole), distances outermost
    """
    directions, _ = icosphere(level)
    if count > len(directions):
        raise ConfigError(f"Level {level} has only {len(directions)} directions, {count} dipoles requested")
    chosen = directions[rng.choice(len(directions), size=count, replace=False)]
    moments = [_orient_moment(r_hat, orientation, moment, rng) for r_hat in chosen]
    placed = []
    for distance in distances:
        for k, (r_hat, q) in enumerate(zip(chosen, moments)):
            placed.append((float(distance), k, Dipole((radius - distance) * r_hat, q)))
    return placed


def _parse_method(name: str) -> tuple[SourceMethod, int | None]:
    if name == "as":
        return SourceMethod.AS, None
    return SourceMethod.FS, int(name[2:])


def sphere_study_rows(config: SphereStudyConfig) -> list[dict]:
    """
    RE, RDM and MAG of each method against the layered-sphere series.

    Mesh, stiffness and boundary are built once and shared by every
    dipole and method.
    """
    rng = np.random.default_rng(config.seed)
    mesh = build_layered_sphere_mesh(
        config.radii, config.level, config.conductivities, shells_per_layer=config.shells_per_layer
    )
    boundary = extract_boundary(mesh)
    stiffness = assemble_stiffness(mesh)
    model = SphereModel(tuple(config.radii), tuple(config.conductivities))
    r_inner = config.radii[-1]

    placed = place_dipoles(
        config.level, r_inner, config.distances, config.dipoles, config.orientation, config.moment, rng
    )
    rows = []
    for distance, k, dipole in placed:
        reference = None
        for name in config.methods:
            method, order = _parse_method(name)
            solution = forward_solve(
                mesh, dipole, method, order, rel_tol=config.tol, stiffness=stiffness, boundary=boundary
            )
            if reference is None:
                reference = sphere_analytic_potential(model, dipole, mesh.nodes[solution.point_nodes])
            report = metrics(solution.potentials, reference)
            rows.append({
                "distance": distance,
                "eccentricity": float(norm(dipole.r0)) / r_inner,
                "dipole": k,
                "method": name,
                "re": report.re,
                "rdm": report.rdm,
                "mag": report.mag,
            })
        logger.info(f"Sphere study: dipole {k} at depth {distance} done ({len(config.methods)} methods)")
    return rows


def jump_element_stats(mesh: Mesh, sigma_inf: float) -> tuple[Triangle, float]:
    """
    Border of the conductivity-jump elements and their mean edge length.

    The border is the part of the region interfaces that separates elements
    whose conductivity differs from sigma_inf from those where it does not.
    A source in a sigma_inf region is never closer to a jump element than
    to this border.

    Raises:
        ConfigError: if every element has conductivity sigma_inf, or no
            region interface borders the jump elements
    """
    sigma_c = mesh.sigma_per_tet() - sigma_inf * np.eye(3)
    active = np.linalg.norm(sigma_c, axis=(1, 2)) > ZERO_JUMP_RTOL * sigma_inf
    if not np.any(active):
        raise ConfigError("The model has no element with a conductivity jump")
    interfaces = extract_interfaces(mesh)
    jump = active[interfaces.owners]
    border = jump[:, 0] != jump[:, 1]
    if not np.any(border):
        raise ConfigError("No region interface separates the jump elements from the source region")
    faces = Triangle(mesh.nodes[interfaces.triangles[border]])
    tets = mesh.tet_nodes()[active]
    edges = tets[:, TET_EDGES[:, 1]] - tets[:, TET_EDGES[:, 0]]
    logger.debug(f"Jump border: {int(border.sum())} faces around {int(active.sum())} elements")
    return faces, float(norm(edges).mean())


def dref_study_rows(config: DrefStudyConfig) -> list[dict]:
    """
    RE_s of FS solutions against AS, tagged with the source's d/a.

    d is the distance from the dipole to the nearest element with a
    conductivity jump, a the mean edge length of those elements.
    """
    rows = []
    r_inner = config.radii[-1]
    sigma_inf = config.conductivities[-1]
    for level in config.levels:
        rng = np.random.default_rng(config.seed)
        mesh = build_layered_sphere_mesh(
            config.radii, level, config.conductivities,
            anisotropy=config.anisotropy, shells_per_layer=config.shells_per_layer,
        )
        boundary = extract_boundary(mesh)
        stiffness = assemble_stiffness(mesh)
        faces, mean_edge = jump_element_stats(mesh, sigma_inf)
        placed = place_dipoles(
            level, r_inner, config.distances, config.dipoles, config.orientation, config.moment, rng
        )
        for distance, k, dipole in placed:
            d = float(point_triangle_distance(dipole.r0, faces).min())
            reference = forward_solve(
                mesh, dipole, SourceMethod.AS, rel_tol=config.tol, stiffness=stiffness, boundary=boundary
            )
            for order in config.orders:
                solution = forward_solve(
                    mesh, dipole, SourceMethod.FS, order,
                    rel_tol=config.tol, stiffness=stiffness, boundary=boundary,
                )
                rows.append({
                    "level": level,
                    "distance": distance,
                    "dipole": k,
                    "d_over_a": d / mean_edge,
                    "order": int(order),
                    "re_s": metric_re_s(reference.potentials, solution.potentials),
                })
        logger.info(f"d/a study: level {level} done (a = {mean_edge:.4g} m)")
    return rows


BENCHMARK_COLUMNS = ["shape", "method", "elements", "seconds", "us_per_element", "as_speedup", "target", "meets_target"]
BENCHMARK_METHODS = ["as", "fs2", "fs4", "fs6"]
# minimum AS speedup over each FS degree; fs4 is reported without a target
BENCHMARK_TARGETS = {"fs2": 1.0, "fs6": 4.0}
BENCHMARK_CHUNK = 10_000


def _jittered(nodes: np.ndarray, count: int, side: float, rng: np.random.Generator) -> np.ndarray:
    return nodes + rng.uniform(-0.05 * side, 0.05 * side, size=(count,) + nodes.shape)


def _benchmark_kernel(shape: str, method: str, dipole: Dipole):
    order = None if method == "as" else int(method[2:])
    if shape == "tri":
        if order is None:
            return lambda nodes: surface_source_analytical(Triangle(nodes), dipole)
        return lambda nodes: surface_source_quadrature(Triangle(nodes), dipole, order)
    sigma_c = ConductivityTensor.isotropic(ELEMENT_SIGMA_JUMP)
    if order is None:
        return lambda nodes: volume_source_analytical(Tetrahedron(nodes), sigma_c, ELEMENT_SIGMA_INF, dipole)
    return lambda nodes: volume_source_quadrature(Tetrahedron(nodes), sigma_c, ELEMENT_SIGMA_INF, dipole, order)


def benchmark_rows(elements: int = 100_000, seed: int = 0, side: float = 0.005) -> list[dict]:
    """
    Per-element cost of AS and FS source vectors on triangles and tets.

    Every method evaluates the same jittered copies of the element-study
    triangle and tetrahedron in batches of BENCHMARK_CHUNK. The dipole sits
    at two side lengths from the x = 0 face. as_speedup is the FS time over
    the AS time; rows with a target say whether AS reached it. Misses are
    logged as warnings and never raise.

    Args:
        elements: Element evaluations per (shape, method)
        seed: Seed of the node jitter
        side: Element side length in m

    Returns:
        Rows per shape ("tri", then "tet") in BENCHMARK_METHODS order
    """
    if elements < 1:
        raise ValueError(f"elements must be >= 1, got {elements}")
    if side <= 0:
        raise ValueError(f"Side length must be positive, got {side}")
    rng = np.random.default_rng(seed)
    dipole = Dipole((2.0 * side, 0.0, 0.0), ELEMENT_MOMENT)
    rows = []
    for shape, element in (("tri", unit_triangle(side)), ("tet", unit_tetrahedron(side))):
        batches = [
            _jittered(element.nodes, min(BENCHMARK_CHUNK, elements - start), side, rng)
            for start in range(0, elements, BENCHMARK_CHUNK)
        ]
        seconds = {}
        for method in BENCHMARK_METHODS:
            kernel = _benchmark_kernel(shape, method, dipole)
            started = time.perf_counter()
            for nodes in batches:
                kernel(nodes)
            seconds[method] = time.perf_counter() - started
        for method in BENCHMARK_METHODS:
            speedup = seconds[method] / seconds["as"]
            target = BENCHMARK_TARGETS.get(method)
            meets = "" if target is None else speedup >= target
            if meets is False:
                logger.warning(
                    f"Benchmark ({shape}): AS is {speedup:.2f}x faster than {method}, target {target:.1f}x not met"
                )
            rows.append({
                "shape": shape,
                "method": method,
                "elements": elements,
                "seconds": seconds[method],
                "us_per_element": 1e6 * seconds[method] / elements,
                "as_speedup": speedup,
                "target": "" if target is None else target,
                "meets_target": meets,
            })
        logger.info(f"Benchmark ({shape}): {elements} elements per method")
    return rows


def solve_rows(solution: ForwardSolution) -> list[dict]:
    """Electrode rows followed by a 'stats' row with the solver diagnostics."""
    rows = [
        {"row": i, "x": p[0], "y": p[1], "z": p[2], "potential": v, "iterations": "", "residual": ""}
        for i, (p, v) in enumerate(zip(solution.points.tolist(), solution.potentials.tolist()))
    ]
    rows.append({
        "row": "stats", "x": "", "y": "", "z": "", "potential": "",
        "iterations": solution.iterations, "residual": solution.residual,
    })
    return rows


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(rows: Iterable[dict], columns: Sequence[str], out: str | TextIO | None = None) -> None:
    """
    Write rows as CSV with a header; floats keep full precision.

    out may be a path, an open text stream, or None for standard output.
    """
    if out is None or not isinstance(out, str):
        _write_rows(rows, columns, out or sys.stdout)
        return
    with open(out, "w", newline="", encoding="utf-8") as stream:
        _write_rows(rows, columns, stream)
    logger.info(f"Results written to {out}")


def _write_rows(rows: Iterable[dict], columns: Sequence[str], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row[k]) for k in columns})
