"""
Unit tests for eegforward/mesh.py
"""
import logging

import numpy as np
import pytest

from eegforward.elements import ConductivityTensor
from eegforward.errors import InvalidRadiiError, MeshValidationError, NonManifoldError, ParseError
from eegforward.geometry import signed_volume
from eegforward.mesh import (
    Mesh,
    build_layered_sphere_mesh,
    extract_boundary,
    extract_interfaces,
    format_mesh,
    icosphere,
    load_mesh,
    parse_mesh,
    save_mesh,
    validate_mesh,
)

SINGLE_TET = """\
# one tetrahedron
nodes 4
0 0 0
1 0 0
0 1 0
0 0 1
tets 1
0 1 2 3 1
regions 1
1 0.33 0.33 0.33 0 0 0
electrodes 1
1 0 0
"""


def single_tet_mesh(**overrides) -> Mesh:
    values = dict(
        nodes=np.vstack([np.zeros(3), np.eye(3)]),
        tets=[[0, 1, 2, 3]],
        regions=[1],
        conductivities={1: ConductivityTensor.isotropic(0.33)},
    )
    values.update(overrides)
    return Mesh(**values)


class TestIcosphere:
    """Tests for icosphere."""

    @pytest.mark.parametrize("level", [0, 1, 2, 3])
    def test_counts_and_unit_radius(self, level):
        nodes, faces = icosphere(level)
        assert faces.shape == (20 * 4 ** level, 3)
        assert nodes.shape == (10 * 4 ** level + 2, 3)
        assert np.allclose(np.linalg.norm(nodes, axis=1), 1.0)

    def test_nested_vertices(self):
        coarse, _ = icosphere(1)
        fine, _ = icosphere(2)
        assert np.allclose(fine[:len(coarse)], coarse)

    def test_faces_wound_outward(self):
        nodes, faces = icosphere(2)
        normals = np.cross(nodes[faces[:, 1]] - nodes[faces[:, 0]], nodes[faces[:, 2]] - nodes[faces[:, 0]])
        assert np.all(np.einsum("ij,ij->i", normals, nodes[faces].mean(axis=1)) > 0)

    def test_negative_level(self):
        with pytest.raises(ValueError):
            icosphere(-1)


class TestLayeredSphere:
    """Tests for build_layered_sphere_mesh."""

    def test_counts(self, two_layer_sphere):
        assert two_layer_sphere.n_nodes == 169
        assert two_layer_sphere.n_tets == 800
        assert len(two_layer_sphere.electrodes) == 42

    def test_positive_volumes(self, two_layer_sphere):
        assert np.all(signed_volume(two_layer_sphere.tet_nodes()) > 0)

    @pytest.mark.parametrize("level, rel_tol", [(2, 0.06), (3, 0.02)])
    def test_total_volume(self, level, rel_tol):
        mesh = build_layered_sphere_mesh([0.1], level=level)
        volume = signed_volume(mesh.tet_nodes()).sum()
        assert volume == pytest.approx(4.0 / 3.0 * np.pi * 0.1 ** 3, rel=rel_tol)
        assert volume < 4.0 / 3.0 * np.pi * 0.1 ** 3

    def test_regions_follow_radius_bands(self, two_layer_sphere):
        mean_radius = np.linalg.norm(two_layer_sphere.tet_nodes(), axis=-1).mean(axis=1)
        outer = two_layer_sphere.regions == 1
        assert np.all(mean_radius[outer] > 0.08)
        assert np.all(mean_radius[~outer] < 0.08)
        assert set(np.unique(two_layer_sphere.regions).tolist()) == {1, 2}
        assert two_layer_sphere.conductivities[1].mean == pytest.approx(1.0)
        assert two_layer_sphere.conductivities[2].mean == pytest.approx(0.33)

    def test_default_conductivity(self, homogeneous_sphere):
        assert homogeneous_sphere.conductivities == {1: ConductivityTensor.isotropic(0.33)}

    def test_anisotropic_layer(self):
        mesh = build_layered_sphere_mesh([0.1, 0.08], level=1, conductivities=[1.0, 0.33],
                                         anisotropy={1: (0.5, 0.05)}, electrode_level=0)
        assert 1 not in mesh.conductivities
        aniso = mesh.regions > 2
        assert np.count_nonzero(aniso) == 240
        assert len(mesh.conductivities) == 241
        for tet_id in np.flatnonzero(aniso)[:10]:
            tensor = mesh.conductivities[int(mesh.regions[tet_id])]
            r_hat = mesh.tet_nodes()[tet_id].mean(axis=0)
            r_hat /= np.linalg.norm(r_hat)
            assert np.allclose(tensor.matrix @ r_hat, 0.5 * r_hat)
            assert not tensor.is_isotropic()

    def test_anisotropy_unknown_layer(self):
        with pytest.raises(InvalidRadiiError):
            build_layered_sphere_mesh([0.1], level=0, anisotropy={2: (0.5, 0.05)})

    @pytest.mark.parametrize("radii", [[], [0.1, 0.1], [0.08, 0.1], [0.1, -0.05], [0.1, float("nan")]])
    def test_invalid_radii(self, radii):
        with pytest.raises(InvalidRadiiError):
            build_layered_sphere_mesh(radii, level=0)

    def test_conductivity_count_mismatch(self):
        with pytest.raises(InvalidRadiiError):
            build_layered_sphere_mesh([0.1, 0.08], level=0, conductivities=[0.33])

    def test_shells_per_layer_counts(self):
        mesh = build_layered_sphere_mesh([0.1, 0.08], level=1, conductivities=[1.0, 0.33],
                                         electrode_level=1, shells_per_layer=2)
        assert mesh.n_nodes == 7 * 42 + 1
        assert mesh.n_tets == 6 * 3 * 80 + 80
        assert np.all(signed_volume(mesh.tet_nodes()) > 0)

    def test_shells_per_layer_keeps_interfaces(self):
        coarse = build_layered_sphere_mesh([0.1, 0.08], level=1, conductivities=[1.0, 0.33])
        fine = build_layered_sphere_mesh([0.1, 0.08], level=1, conductivities=[1.0, 0.33], shells_per_layer=3)
        for mesh in (coarse, fine):
            faces = mesh.nodes[extract_interfaces(mesh).triangles]
            assert len(faces) == 80
            assert np.allclose(np.linalg.norm(faces, axis=-1), 0.08)
        outer_volume = [signed_volume(m.tet_nodes()[m.regions == 1]).sum() for m in (coarse, fine)]
        assert outer_volume[1] == pytest.approx(outer_volume[0], rel=1e-12)

    def test_shells_per_layer_invalid(self):
        with pytest.raises(ValueError):
            build_layered_sphere_mesh([0.1], level=0, shells_per_layer=0)


class TestSurfaces:
    """Tests for boundary and interface extraction."""

    def test_boundary_is_outer_shell(self, two_layer_sphere):
        boundary = extract_boundary(two_layer_sphere)
        assert len(boundary) == 80
        radius = np.linalg.norm(two_layer_sphere.nodes[boundary.node_ids], axis=1)
        assert np.allclose(radius, 0.1)

    def test_boundary_wound_outward(self, two_layer_sphere):
        boundary = extract_boundary(two_layer_sphere)
        tri = two_layer_sphere.nodes[boundary.triangles]
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        assert np.all(np.einsum("ij,ij->i", normals, tri.mean(axis=1)) > 0)

    def test_boundary_owners(self, two_layer_sphere):
        boundary = extract_boundary(two_layer_sphere)
        owned = two_layer_sphere.tets[boundary.owners]
        for tri, tet in zip(boundary.triangles, owned):
            assert set(tri.tolist()) <= set(tet.tolist())

    def test_interfaces(self, two_layer_sphere):
        interfaces = extract_interfaces(two_layer_sphere)
        assert len(interfaces) == 80
        radius = np.linalg.norm(two_layer_sphere.nodes[interfaces.triangles], axis=-1)
        assert np.allclose(radius, 0.08)
        assert np.all(np.sort(interfaces.regions, axis=1) == [1, 2])
        assert np.all(interfaces.owners[:, 0] < interfaces.owners[:, 1])

    def test_homogeneous_has_no_interfaces(self, homogeneous_sphere):
        assert len(extract_interfaces(homogeneous_sphere)) == 0

    def test_single_tet_boundary(self):
        boundary = extract_boundary(single_tet_mesh())
        assert len(boundary) == 4
        assert boundary.node_ids.tolist() == [0, 1, 2, 3]

    def test_non_manifold(self):
        nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1], [0.2, 0.2, 2]], dtype=float)
        mesh = Mesh(nodes, [[0, 1, 2, 3], [0, 2, 1, 4], [0, 1, 2, 5]], [1, 1, 1],
                    {1: ConductivityTensor.isotropic(1.0)})
        with pytest.raises(NonManifoldError):
            extract_boundary(mesh)


class TestFormat:
    """Tests for the mesh text format."""

    def test_parse_single_tet(self):
        mesh = parse_mesh(SINGLE_TET)
        assert mesh.n_nodes == 4
        assert mesh.n_tets == 1
        assert mesh.regions.tolist() == [1]
        assert mesh.conductivities[1] == ConductivityTensor.isotropic(0.33)
        assert np.allclose(mesh.electrodes, [[1, 0, 0]])

    def test_electrodes_optional(self):
        text = SINGLE_TET.split("electrodes")[0]
        assert parse_mesh(text).electrodes.shape == (0, 3)

    def test_format_parse_round_trip(self, two_layer_sphere):
        parsed = parse_mesh(format_mesh(two_layer_sphere))
        assert np.array_equal(parsed.nodes, two_layer_sphere.nodes)
        assert np.array_equal(parsed.tets, two_layer_sphere.tets)
        assert np.array_equal(parsed.regions, two_layer_sphere.regions)
        assert np.array_equal(parsed.electrodes, two_layer_sphere.electrodes)
        assert parsed.conductivities == two_layer_sphere.conductivities

    def test_save_and_load(self, tmp_path, homogeneous_sphere):
        path = tmp_path / "models" / "sphere.mesh"
        save_mesh(homogeneous_sphere, path)
        loaded = load_mesh(path)
        assert loaded.summary() == homogeneous_sphere.summary()
        assert np.array_equal(loaded.nodes, homogeneous_sphere.nodes)

    @pytest.mark.parametrize("text, line", [
        ("nodes 2\n0 0 0\n1 0\n", 3),
        ("nodes 1\n0 0 x\n", 2),
        ("# header\nfaces 3\n", 2),
        ("nodes 1\n0 0 0\nnodes 1\n0 0 0\n", 3),
        ("nodes two\n", 1),
        ("nodes 3\n0 0 0\n", 3),
        ("nodes 1\n0 0 0\ntets 0\n", 4),
        ("nodes 1\n0 0 0\ntets 1\n0 0 0 0 1.5\n", 4),
    ])
    def test_parse_errors_report_line(self, text, line):
        with pytest.raises(ParseError) as exc_info:
            parse_mesh(text)
        assert exc_info.value.line == line
        assert f"line {line}" in str(exc_info.value)

    def test_duplicate_region(self):
        text = SINGLE_TET.replace("regions 1\n1 0.33 0.33 0.33 0 0 0\n",
                                  "regions 2\n1 0.33 0.33 0.33 0 0 0\n1 1 1 1 0 0 0\n")
        with pytest.raises(MeshValidationError):
            parse_mesh(text)


class TestValidation:
    """Tests for validate_mesh."""

    @pytest.mark.parametrize("overrides", [
        {"tets": [[0, 1, 2, 4]]},
        {"tets": [[0, 1, 1, 3]]},
        {"regions": [2]},
        {"nodes": np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)},
        {"nodes": np.array([[0, 0, np.nan], [1, 0, 0], [0, 1, 0], [0, 0, 1]])},
        {"electrodes": [[np.inf, 0, 0]]},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(MeshValidationError):
            validate_mesh(single_tet_mesh(**overrides))

    def test_empty(self):
        with pytest.raises(MeshValidationError):
            validate_mesh(single_tet_mesh(tets=np.zeros((0, 4)), regions=[]))

    def test_reorients_negative_tets(self, caplog):
        mesh = single_tet_mesh(tets=[[0, 2, 1, 3]])
        with caplog.at_level(logging.WARNING, logger="eegforward.mesh"):
            validate_mesh(mesh)
        assert signed_volume(mesh.tet_nodes())[0] > 0
        assert "Reoriented 1" in caplog.text

    def test_sigma_per_tet(self, two_layer_sphere):
        sigma = two_layer_sphere.sigma_per_tet()
        assert sigma.shape == (800, 3, 3)
        assert np.allclose(sigma[two_layer_sphere.regions == 1], np.eye(3))
