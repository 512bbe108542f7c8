"""
Unit tests for eegforward/potentials.py

Closed-form kernels are checked against the adaptive reference integrator.
"""
import numpy as np
import pytest

from eegforward.errors import SourceOnElementError
from eegforward.geometry import Triangle, build_local_frame, point_triangle_distance
from eegforward.potentials import (
    Dipole,
    dipole_field_gradient,
    dipole_flux_I0,
    dipole_kernel,
    face_integral_of_f,
    first_moment_flux,
    int_grad_s_w0_r3,
    int_inv_r3,
    int_inv_r5,
    kernel_context,
    signed_solid_angle,
)
from eegforward.quadrature import adaptive_integrate, composite_integrate

ORACLE_TOL = 1e-11


def oracle(t: Triangle, integrand):
    """Reference integral and a scale for it (a fixed-depth estimate of the integral of |g|)."""
    value = adaptive_integrate(t.nodes, integrand, rel_tol=ORACLE_TOL)
    magnitude = composite_integrate(t.nodes, lambda p: np.abs(integrand(p)), depth=3)
    return value, max(float(np.max(np.abs(value))), float(np.max(magnitude)))


def kernels(t: Triangle, r0, q):
    """Closed forms paired with their integrands."""
    ctx = kernel_context(t, r0)
    frame = ctx.frame
    w0 = float(ctx.src.w0)
    u0, v0 = float(ctx.src.u0), float(ctx.src.v0)
    d = Dipole(r0, q)

    def R(p):
        return p - r0

    def dist(p):
        return np.linalg.norm(R(p), axis=-1)

    def flux(p):
        return dipole_field_gradient(p, d) @ frame.w_hat

    def grad_s_w0_r3(p):
        Rp = R(p)
        in_plane = Rp - np.outer(Rp @ frame.w_hat, frame.w_hat)
        return -3.0 * w0 * in_plane / dist(p)[:, None] ** 5

    def u_moment(p):
        return ((p - frame.origin) @ frame.u_hat - u0) * flux(p)

    def v_moment(p):
        return ((p - frame.origin) @ frame.v_hat - v0) * flux(p)

    Iu, Iv = first_moment_flux(ctx, q)
    return [
        ("int_inv_r3", int_inv_r3(ctx), lambda p: dist(p) ** -3),
        ("int_inv_r5", int_inv_r5(ctx), lambda p: dist(p) ** -5),
        ("int_grad_s_w0_r3", int_grad_s_w0_r3(ctx), grad_s_w0_r3),
        ("dipole_flux_I0", dipole_flux_I0(ctx, q), flux),
        ("first_moment_u", Iu, u_moment),
        ("first_moment_v", Iv, v_moment),
        ("face_integral_of_f", face_integral_of_f(ctx, q), lambda p: dipole_kernel(p, d)),
    ]


def assert_matches_oracle(t: Triangle, r0, q, rtol: float):
    for name, value, integrand in kernels(t, r0, q):
        reference, scale = oracle(t, integrand)
        error = np.max(np.abs(np.asarray(value) - reference))
        assert error <= rtol * scale, f"{name}: {value} vs {reference} (scale {scale})"


SCALENE = Triangle.from_points((0.1, -0.2, 0.05), (1.3, 0.1, -0.1), (0.4, 0.9, 0.2))
Q = np.array([0.3, -0.7, 0.5])


class TestKernelOracle:
    """Closed-form integrals against adaptive quadrature."""

    @pytest.mark.parametrize("offset, height", [
        ((0.0, 0.0), 0.5),     # above the interior
        ((0.0, 0.0), -0.15),   # below the interior, close
        ((0.2, -0.1), 2.0),    # far
        ((1.5, 0.8), 0.3),     # projection outside
        ((1.2, -0.6), -0.05),  # outside and close to the plane
        ((-0.9, 0.4), 0.0),    # coplanar, outside
    ])
    def test_fixed_configurations(self, offset, height):
        f = build_local_frame(SCALENE)
        centroid = SCALENE.nodes.mean(axis=0)
        r0 = centroid + offset[0] * f.u_hat + offset[1] * f.v_hat - height * f.w_hat
        assert_matches_oracle(SCALENE, r0, Q, rtol=1e-8)

    @staticmethod
    def _sweep(rng, random_triangles, count):
        """Sources at d/diam log-uniform in [0.05, 100] above a random interior point."""
        triangles = random_triangles(count)
        assert len(triangles.nodes) == count
        for nodes in triangles.nodes:
            t = Triangle(nodes)
            f = build_local_frame(t)
            diameter = float(t.diameter)
            ratio = 10 ** rng.uniform(np.log10(0.05), 2.0)
            inside = rng.dirichlet(np.ones(3)) @ nodes
            side = rng.choice([-1.0, 1.0])
            r0 = inside + side * ratio * diameter * f.w_hat
            assert float(point_triangle_distance(r0, t)) == pytest.approx(ratio * diameter, rel=1e-9)
            q = rng.normal(size=3)
            assert_matches_oracle(t, r0, q, rtol=1e-6 if ratio < 0.1 else 1e-8)

    def test_random_configurations(self, rng, random_triangles):
        self._sweep(rng, random_triangles, 200)

    @pytest.mark.slow
    def test_random_configurations_full(self, rng, random_triangles):
        self._sweep(rng, random_triangles, 1000)

    def test_close_source_looser_tolerance(self):
        f = build_local_frame(SCALENE)
        r0 = SCALENE.nodes.mean(axis=0) + 0.1 * f.u_hat - 0.06 * f.w_hat
        assert_matches_oracle(SCALENE, r0, Q, rtol=1e-6)


class TestSolidAngle:
    """Solid angle closure over tetrahedron surfaces."""

    def test_interior_points_see_four_pi(self, rng, random_tetrahedra):
        tets = random_tetrahedra(100)
        assert len(tets.nodes) == 100
        xi = rng.dirichlet(np.ones(4), size=len(tets.nodes))
        points = np.einsum("ni,nij->nj", xi, tets.nodes)
        faces = tets.outward_faces()
        total = signed_solid_angle(kernel_context(faces, points[:, None, :])).sum(axis=-1)
        assert np.allclose(total, 4 * np.pi, atol=1e-10)

    def test_exterior_points_see_zero(self, rng, random_tetrahedra):
        tets = random_tetrahedra(100)
        assert len(tets.nodes) == 100
        points = rng.uniform(3, 5, size=(len(tets.nodes), 3))
        faces = tets.outward_faces()
        total = signed_solid_angle(kernel_context(faces, points[:, None, :])).sum(axis=-1)
        assert np.allclose(total, 0.0, atol=1e-10)

    def test_flux_through_closed_surface_vanishes(self, reference_tet):
        """grad f is divergence-free away from the source."""
        faces = reference_tet.outward_faces()
        ctx = kernel_context(faces, np.array([2.0, -1.0, 0.5]))
        assert abs(dipole_flux_I0(ctx, Q).sum()) <= 1e-12 * np.abs(dipole_flux_I0(ctx, Q)).max()


class TestKernelProperties:
    """Scaling, linearity and limits."""

    def test_scaling_laws(self):
        r0 = np.array([0.3, 0.2, -0.4])
        base = kernel_context(SCALENE, r0)
        for lam in (0.01, 7.0):
            scaled = kernel_context(Triangle(lam * SCALENE.nodes), lam * r0)
            assert int_inv_r3(scaled) == pytest.approx(int_inv_r3(base) / lam, rel=1e-12)
            assert int_inv_r5(scaled) == pytest.approx(int_inv_r5(base) / lam ** 3, rel=1e-12)
            assert scaled.src.Rs == pytest.approx(base.src.Rs / lam ** 2, rel=1e-12)
            assert signed_solid_angle(scaled) == pytest.approx(signed_solid_angle(base), rel=1e-12)

    def test_linear_in_moment(self):
        ctx = kernel_context(SCALENE, np.array([0.5, 0.5, 1.0]))
        q1, q2 = np.array([1.0, 0.0, 2.0]), np.array([-0.5, 3.0, 0.1])
        for kernel in (dipole_flux_I0, face_integral_of_f):
            assert kernel(ctx, q1 + 2 * q2) == pytest.approx(kernel(ctx, q1) + 2 * kernel(ctx, q2))

    def test_coplanar_limit_is_continuous(self):
        f = build_local_frame(SCALENE)
        base = SCALENE.nodes.mean(axis=0) + 1.4 * f.u_hat + 0.9 * f.v_hat
        on_plane = kernel_context(SCALENE, base)
        near_plane = kernel_context(SCALENE, base - 1e-9 * f.w_hat)
        assert int_inv_r3(on_plane) == pytest.approx(int_inv_r3(near_plane), rel=1e-8)
        assert int_inv_r5(on_plane) == pytest.approx(int_inv_r5(near_plane), rel=1e-8)
        assert face_integral_of_f(on_plane, Q) == pytest.approx(face_integral_of_f(near_plane, Q), rel=1e-6)

    def test_source_on_element_raises(self, unit_triangle):
        ctx = kernel_context(unit_triangle, np.array([0.25, 0.25, 0.0]))
        with pytest.raises(SourceOnElementError):
            int_inv_r3(ctx)
        with pytest.raises(SourceOnElementError):
            face_integral_of_f(ctx, Q)

    def test_stack_evaluation_matches_single(self, random_triangles):
        tris = random_triangles(6)
        r0 = np.array([3.0, -2.0, 1.0])
        stacked = int_inv_r3(kernel_context(tris, r0))
        single = [float(int_inv_r3(kernel_context(Triangle(n), r0))) for n in tris.nodes]
        assert np.allclose(stacked, single, rtol=1e-12, atol=0)


class TestDipole:
    """Tests for the Dipole type and pointwise kernels."""

    def test_parse(self):
        d = Dipole.parse("0, 0, 0.05, 0, 0, 1e-8")
        assert np.allclose(d.r0, [0, 0, 0.05])
        assert np.allclose(d.q, [0, 0, 1e-8])

    @pytest.mark.parametrize("text", ["1,2,3", "a,b,c,d,e,f", "1,2,3,4,5,6,7"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            Dipole.parse(text)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Dipole((0, 0, np.nan), (1, 0, 0))

    def test_gradient_matches_finite_differences(self):
        d = Dipole((0.1, -0.2, 0.3), (1.0, 2.0, -0.5))
        p = np.array([0.7, 0.4, -0.2])
        h = 1e-6
        numeric = [
            (dipole_kernel(p + h * e, d) - dipole_kernel(p - h * e, d)) / (2 * h)
            for e in np.eye(3)
        ]
        assert np.allclose(dipole_field_gradient(p, d), numeric, rtol=1e-6)

    def test_flux_reciprocity(self, rng):
        """n.grad(q.R/R^3) equals q.grad(n.R/R^3): moment and normal can swap roles."""
        r0 = np.array([0.1, -0.2, 0.3])
        points = r0 + rng.uniform(-2.0, 2.0, size=(100, 3))
        q = rng.normal(size=(100, 3))
        n = rng.normal(size=(100, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        for p, qk, nk in zip(points, q, n):
            R = p - r0
            dist = np.linalg.norm(R)
            scale = np.linalg.norm(qk) / dist ** 3
            forward = dipole_field_gradient(p, Dipole(r0, qk)) @ nk
            swapped = dipole_field_gradient(p, Dipole(r0, nk)) @ qk
            explicit = qk @ nk / dist ** 3 - 3.0 * (qk @ R) * (nk @ R) / dist ** 5
            assert abs(forward - swapped) <= 1e-12 * scale
            assert abs(forward - explicit) <= 1e-12 * scale
