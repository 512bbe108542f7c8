"""
Tetrahedral head models.

This module holds the Mesh container, its line-oriented text format,
boundary and interface extraction, and a layered-sphere mesher built
from icosphere shells.

Text format (UTF-8, 0-based indices, '#' starts a comment):

    nodes N
    x y z                      (N lines)
    tets M
    i j k l region             (M lines)
    regions R
    id sxx syy szz sxy sxz syz (R lines)
    electrodes E
    x y z                      (E lines, section optional)
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .elements import ConductivityTensor
from .errors import InvalidRadiiError, MeshValidationError, NonManifoldError, ParseError
from .geometry import TET_FACES, VOLUME_EPS, norm, signed_volume

logger = logging.getLogger(__name__)

MESH_HEADER = "# eegforward mesh"
SECTIONS = ("nodes", "tets", "regions", "electrodes")
REQUIRED_SECTIONS = ("nodes", "tets", "regions")


@dataclass
class Mesh:
    """Tetrahedral mesh with per-region conductivity tensors and electrode positions."""
    nodes: np.ndarray
    tets: np.ndarray
    regions: np.ndarray
    conductivities: dict[int, ConductivityTensor]
    electrodes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        self.regions = np.asarray(self.regions, dtype=np.int64).reshape(-1)
        self.electrodes = np.asarray(self.electrodes, dtype=float).reshape(-1, 3)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def tet_nodes(self) -> np.ndarray:
        """Node coordinates per tet, shape (M, 4, 3)."""
        return self.nodes[self.tets]

    def sigma_per_tet(self) -> np.ndarray:
        """Conductivity matrix per tet, shape (M, 3, 3)."""
        ids = sorted(self.conductivities)
        table = np.stack([self.conductivities[r].matrix for r in ids])
        return table[np.searchsorted(ids, self.regions)]

    def summary(self) -> str:
        return (f"{self.n_nodes} nodes, {self.n_tets} tets, "
                f"{len(self.conductivities)} regions, {len(self.electrodes)} electrodes")


@dataclass
class BoundarySurface:
    """Outward-oriented boundary triangles with the tet (and local face) each belongs to."""
    triangles: np.ndarray
    owners: np.ndarray
    local_faces: np.ndarray

    @property
    def node_ids(self) -> np.ndarray:
        """Sorted unique boundary node indices."""
        return np.unique(self.triangles)

    def __len__(self) -> int:
        return self.triangles.shape[0]


@dataclass
class InterfaceSurface:
    """
    Faces shared by tets of different regions.

    triangles are wound outward from owners[:, 0] (the lower tet index);
    regions holds the region of both owners.
    """
    triangles: np.ndarray
    owners: np.ndarray
    regions: np.ndarray

    def __len__(self) -> int:
        return self.triangles.shape[0]


def validate_mesh(mesh: Mesh) -> Mesh:
    """
    Check mesh invariants and reorient negative tets in place.

    Raises:
        MeshValidationError: on out-of-range indices, unknown regions,
            non-finite coordinates, repeated nodes or flat tets
    """
    if mesh.n_nodes == 0 or mesh.n_tets == 0:
        raise MeshValidationError("Mesh needs at least one node and one tet")
    if not np.all(np.isfinite(mesh.nodes)):
        raise MeshValidationError("Node coordinates must be finite")
    if mesh.tets.min() < 0 or mesh.tets.max() >= mesh.n_nodes:
        bad = int(np.argmax((mesh.tets < 0).any(axis=1) | (mesh.tets >= mesh.n_nodes).any(axis=1)))
        raise MeshValidationError(f"Tet {bad} references a node outside 0..{mesh.n_nodes - 1}")
    if mesh.regions.shape[0] != mesh.n_tets:
        raise MeshValidationError("Every tet needs exactly one region id")
    missing = sorted(set(np.unique(mesh.regions).tolist()) - set(mesh.conductivities))
    if missing:
        raise MeshValidationError(f"Region id(s) {missing} have no conductivity entry")
    repeated = np.any(np.diff(np.sort(mesh.tets, axis=1), axis=1) == 0, axis=1)
    if np.any(repeated):
        raise MeshValidationError(f"Tet {int(np.argmax(repeated))} repeats a node")

    coords = mesh.tet_nodes()
    volume = signed_volume(coords)
    edges = coords[:, [1, 2, 3, 2, 3, 3]] - coords[:, [0, 0, 0, 1, 1, 2]]
    max_edge = norm(edges).max(axis=1)
    flat = np.abs(volume) <= VOLUME_EPS * max_edge ** 3
    if np.any(flat):
        raise MeshValidationError(f"Tet {int(np.argmax(flat))} is degenerate")

    negative = volume < 0
    if np.any(negative):
        logger.warning(f"Reoriented {int(np.count_nonzero(negative))} negative-volume tet(s)")
        mesh.tets[negative] = mesh.tets[negative][:, [0, 1, 3, 2]]
    if not np.all(np.isfinite(mesh.electrodes)):
        raise MeshValidationError("Electrode coordinates must be finite")
    return mesh


def _format_float(value: float) -> str:
    return repr(float(value))


def format_mesh(mesh: Mesh) -> str:
    """Canonical text form of a mesh."""
    lines = [MESH_HEADER, f"nodes {mesh.n_nodes}"]
    lines += [" ".join(_format_float(v) for v in p) for p in mesh.nodes]
    lines.append(f"tets {mesh.n_tets}")
    lines += [" ".join(str(int(v)) for v in (*t, r)) for t, r in zip(mesh.tets, mesh.regions)]
    lines.append(f"regions {len(mesh.conductivities)}")
    for rid in sorted(mesh.conductivities):
        comps = mesh.conductivities[rid].components
        lines.append(" ".join([str(int(rid))] + [_format_float(c) for c in comps]))
    lines.append(f"electrodes {len(mesh.electrodes)}")
    lines += [" ".join(_format_float(v) for v in p) for p in mesh.electrodes]
    return "\n".join(lines) + "\n"


def _records(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if content:
            yield lineno, content.split()


def _parse_numbers(tokens: list[str], count: int, kind, lineno: int, what: str) -> list:
    if len(tokens) != count:
        raise ParseError(f"{what} record needs {count} values, got {len(tokens)}", line=lineno)
    try:
        return [kind(tok) for tok in tokens]
    except ValueError as e:
        raise ParseError(f"Invalid {what} value: {e}", line=lineno) from e


def parse_mesh(text: str) -> Mesh:
    """
    Parse and validate the text form of a mesh.

    Raises:
        ParseError: malformed content, with the 1-based line number
        MeshValidationError: well-formed content violating mesh invariants
    """
    data: dict[str, list] = {}
    widths = {"nodes": (3, float), "tets": (5, int), "regions": (7, float), "electrodes": (3, float)}
    records = _records(text)
    last_line = 0
    for lineno, tokens in records:
        last_line = lineno
        name = tokens[0].lower()
        if name not in SECTIONS:
            raise ParseError(f"Unknown section '{tokens[0]}'", line=lineno)
        if name in data:
            raise ParseError(f"Duplicate section '{name}'", line=lineno)
        if len(tokens) != 2:
            raise ParseError(f"Section header must be '{name} COUNT'", line=lineno)
        try:
            count = int(tokens[1])
        except ValueError:
            raise ParseError(f"Invalid count '{tokens[1]}'", line=lineno)
        if count < 0:
            raise ParseError(f"Negative count {count}", line=lineno)

        width, kind = widths[name]
        rows = []
        for _ in range(count):
            try:
                lineno, tokens = next(records)
            except StopIteration:
                raise ParseError(f"Section '{name}' ends after {len(rows)} of {count} records",
                                 line=last_line + 1)
            last_line = lineno
            if name == "regions":
                rid = _parse_numbers(tokens[:1], 1, int, lineno, "region")
                rows.append(rid + _parse_numbers(tokens[1:], 6, float, lineno, "region"))
            else:
                rows.append(_parse_numbers(tokens, width, kind, lineno, name[:-1]))
        data[name] = rows

    for name in REQUIRED_SECTIONS:
        if name not in data:
            raise ParseError(f"Missing section '{name}'", line=last_line + 1)

    conductivities: dict[int, ConductivityTensor] = {}
    for row in data["regions"]:
        rid = int(row[0])
        if rid in conductivities:
            raise MeshValidationError(f"Region {rid} defined twice")
        conductivities[rid] = ConductivityTensor(*row[1:])

    tets = np.array(data["tets"], dtype=np.int64).reshape(-1, 5)
    mesh = Mesh(
        nodes=np.array(data["nodes"], dtype=float),
        tets=tets[:, :4],
        regions=tets[:, 4],
        conductivities=conductivities,
        electrodes=np.array(data.get("electrodes", []), dtype=float),
    )
    return validate_mesh(mesh)


def load_mesh(path) -> Mesh:
    """Read a mesh file; see parse_mesh for errors."""
    path = Path(path)
    mesh = parse_mesh(path.read_text(encoding="utf-8"))
    logger.info(f"Loaded mesh {path.name}: {mesh.summary()}")
    return mesh


def save_mesh(mesh: Mesh, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_mesh(mesh), encoding="utf-8")
    logger.info(f"Saved mesh {path.name}: {mesh.summary()}")


def _oriented_faces(mesh: Mesh) -> np.ndarray:
    faces = mesh.tets[:, TET_FACES]
    negative = signed_volume(mesh.tet_nodes()) < 0
    faces[negative] = faces[negative][:, :, [0, 2, 1]]
    return faces


def _face_multiplicity(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.sort(faces.reshape(-1, 3), axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        raise NonManifoldError(f"{int(np.count_nonzero(counts > 2))} face(s) shared by more than two tets")
    return inverse, counts


def extract_boundary(mesh: Mesh) -> BoundarySurface:
    """
    Faces that belong to exactly one tet, wound outward.

    Raises:
        NonManifoldError: if a face is shared by more than two tets
    """
    faces = _oriented_faces(mesh)
    inverse, counts = _face_multiplicity(faces)
    on_boundary = counts[inverse] == 1
    owners = np.repeat(np.arange(mesh.n_tets), 4)
    local = np.tile(np.arange(4), mesh.n_tets)
    boundary = BoundarySurface(
        triangles=faces.reshape(-1, 3)[on_boundary],
        owners=owners[on_boundary],
        local_faces=local[on_boundary],
    )
    logger.debug(f"Boundary has {len(boundary)} triangles")
    return boundary


def extract_interfaces(mesh: Mesh) -> InterfaceSurface:
    """Faces shared by two tets of different regions."""
    faces = _oriented_faces(mesh)
    inverse, counts = _face_multiplicity(faces)
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    shared = counts == 2
    first = order[starts[shared]]
    second = order[starts[shared] + 1]
    tet_a, tet_b = first // 4, second // 4
    differ = mesh.regions[tet_a] != mesh.regions[tet_b]
    first, tet_a, tet_b = first[differ], tet_a[differ], tet_b[differ]
    keep = np.argsort(first, kind="stable")
    first, tet_a, tet_b = first[keep], tet_a[keep], tet_b[keep]
    return InterfaceSurface(
        triangles=faces.reshape(-1, 3)[first],
        owners=np.stack([tet_a, tet_b], axis=1),
        regions=np.stack([mesh.regions[tet_a], mesh.regions[tet_b]], axis=1),
    )


_GOLDEN = (1.0 + 5.0 ** 0.5) / 2.0
_ICOSAHEDRON_NODES = np.array([
    [-1, _GOLDEN, 0], [1, _GOLDEN, 0], [-1, -_GOLDEN, 0], [1, -_GOLDEN, 0],
    [0, -1, _GOLDEN], [0, 1, _GOLDEN], [0, -1, -_GOLDEN], [0, 1, -_GOLDEN],
    [_GOLDEN, 0, -1], [_GOLDEN, 0, 1], [-_GOLDEN, 0, -1], [-_GOLDEN, 0, 1],
])
_ICOSAHEDRON_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit icosphere by repeated midpoint subdivision.

    Vertices of level k are the first vertices of level k + 1, and faces
    are wound outward.

    Examples:
        >>> nodes, faces = icosphere(2)
        >>> nodes.shape, faces.shape
        ((162, 3), (320, 3))
    """
    if level < 0:
        raise ValueError(f"Icosphere level must be >= 0, got {level}")
    nodes = _ICOSAHEDRON_NODES / norm(_ICOSAHEDRON_NODES)[:, None]
    faces = _ICOSAHEDRON_FACES.copy()
    for _ in range(level):
        edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        unique, inverse = np.unique(edges, axis=0, return_inverse=True)
        mids = nodes[unique[:, 0]] + nodes[unique[:, 1]]
        mids /= norm(mids)[:, None]
        mid_ids = (inverse.reshape(-1) + len(nodes)).reshape(-1, 3)
        ab, bc, ca = mid_ids[:, 0], mid_ids[:, 1], mid_ids[:, 2]
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        faces = np.concatenate([
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ])
        nodes = np.concatenate([nodes, mids])
    centroids = nodes[faces].mean(axis=1)
    normals = np.cross(nodes[faces[:, 1]] - nodes[faces[:, 0]], nodes[faces[:, 2]] - nodes[faces[:, 0]])
    inward = np.einsum("ij,ij->i", normals, centroids) < 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return nodes, faces


def build_layered_sphere_mesh(
    radii: Sequence[float],
    level: int,
    conductivities: Sequence[float] | None = None,
    anisotropy: Mapping[int, tuple[float, float]] | None = None,
    electrode_level: int = 2,
    shells_per_layer: int = 1,
) -> Mesh:
    """
    Tetrahedral mesh of concentric spherical layers.

    Each interface is an icosphere shell of the given level. Prisms between
    shells are split into three tets by a global vertex-order rule, which
    keeps shared quadrilateral faces conforming. Inside the innermost
    radius, level + 1 extra shells and a centre node fill the core.

    Args:
        radii: Layer radii in m, strictly decreasing (outermost first)
        level: Icosphere subdivision level
        conductivities: Isotropic conductivity per layer (default 0.33 S/m)
        anisotropy: Optional {region id: (sigma_radial, sigma_tangential)};
            every tet of such a layer gets its own region with a radially
            oriented tensor
        electrode_level: Icosphere level of the electrode layout on the
            outer surface
        shells_per_layer: Radial subdivisions of every band between
            consecutive shells (1 keeps one prism layer per band)

    Returns:
        Mesh with region ids 1..len(radii) from outside in

    Raises:
        InvalidRadiiError: if radii are empty, non-positive or not strictly decreasing
        ValueError: if shells_per_layer < 1
    """
    if shells_per_layer < 1:
        raise ValueError(f"shells_per_layer must be >= 1, got {shells_per_layer}")
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0:
        raise InvalidRadiiError("At least one radius is required")
    if np.any(~np.isfinite(radii)) or np.any(radii <= 0):
        raise InvalidRadiiError(f"Radii must be positive, got {radii.tolist()}")
    if np.any(np.diff(radii) >= 0):
        raise InvalidRadiiError(f"Radii must be strictly decreasing, got {radii.tolist()}")
    n_layers = radii.size
    if conductivities is None:
        conductivities = [0.33] * n_layers
    if len(conductivities) != n_layers:
        raise InvalidRadiiError(f"Expected {n_layers} conductivities, got {len(conductivities)}")

    sphere, faces = icosphere(level)
    n_core = level + 1
    core = radii[-1] * np.arange(n_core, 0, -1) / (n_core + 1)
    base = np.concatenate([radii, core])
    # shells_per_layer - 1 extra shells inside every band between consecutive base shells
    steps = np.arange(shells_per_layer) / shells_per_layer
    shell_radii = np.concatenate([
        (base[:-1, None] - steps * (base[:-1] - base[1:])[:, None]).ravel(),
        base[-1:],
    ])
    n_sphere = len(sphere)
    nodes = np.concatenate([(r * sphere) for r in shell_radii] + [np.zeros((1, 3))])
    center = len(nodes) - 1

    ordered = np.sort(faces, axis=1)
    a, b, c = ordered[:, 0], ordered[:, 1], ordered[:, 2]
    tets = []
    for shell in range(len(shell_radii) - 1):
        outer, inner = shell * n_sphere, (shell + 1) * n_sphere
        tets += [
            np.stack([a + outer, b + outer, c + outer, a + inner], axis=1),
            np.stack([b + outer, c + outer, a + inner, b + inner], axis=1),
            np.stack([c + outer, a + inner, b + inner, c + inner], axis=1),
        ]
    last = (len(shell_radii) - 1) * n_sphere
    tets.append(np.stack([a + last, b + last, c + last, np.full_like(a, center)], axis=1))
    tets = np.concatenate(tets)

    negative = signed_volume(nodes[tets]) < 0
    tets[negative] = tets[negative][:, [0, 1, 3, 2]]

    mean_radius = norm(nodes[tets]).mean(axis=1)
    # band k lies between radii[k] and radii[k + 1]; the core joins the innermost layer
    band = np.searchsorted(-radii, -mean_radius, side="left") - 1
    regions = np.clip(band, 0, n_layers - 1) + 1

    table = {k + 1: ConductivityTensor.isotropic(float(s)) for k, s in enumerate(conductivities)}
    if anisotropy:
        next_id = n_layers + 1
        for layer, (sigma_r, sigma_t) in sorted(anisotropy.items()):
            if layer not in table:
                raise InvalidRadiiError(f"Anisotropic layer {layer} is not in 1..{n_layers}")
            members = np.flatnonzero(regions == layer)
            direction = nodes[tets[members]].mean(axis=1)
            direction /= norm(direction)[:, None]
            for tet_id, r_hat in zip(members, direction):
                tensor = sigma_t * np.eye(3) + (sigma_r - sigma_t) * np.outer(r_hat, r_hat)
                table[next_id] = ConductivityTensor.from_matrix(tensor)
                regions[tet_id] = next_id
                next_id += 1
            del table[layer]

    electrode_dirs, _ = icosphere(electrode_level)
    mesh = Mesh(
        nodes=nodes,
        tets=tets,
        regions=regions,
        conductivities=table,
        electrodes=radii[0] * electrode_dirs,
    )
    logger.info(f"Built layered sphere (level {level}, {n_layers} layers): {mesh.summary()}")
    return mesh
