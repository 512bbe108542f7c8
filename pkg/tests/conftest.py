"""
Pytest configuration and shared fixtures for testing.
"""
import pytest
import os
import sys
from unittest.mock import patch

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from eegforward.geometry import Tetrahedron, Triangle
from eegforward.mesh import build_layered_sphere_mesh


@pytest.fixture(autouse=True)
def disable_rate_limiting(request):
    """Disable rate limiting in tests by patching the limiter.

    By default, rate limiting is disabled for all tests to avoid interference.
    To test rate limiting functionality, mark your test with @pytest.mark.rate_limit.
    """
    if request.node.get_closest_marker("rate_limit"):
        yield
        return

    # Only patch when the service module is in use
    if "main" not in sys.modules:
        yield
        return

    def noop_check(*args, **kwargs):
        """No-op function to disable rate limiting in tests."""
        # args: self, request, func, sync
        if len(args) >= 2:
            request = args[1]
            if hasattr(request, 'state') and not hasattr(request.state, 'view_rate_limit'):
                request.state.view_rate_limit = None

    patcher = patch('main.Limiter._check_request_limit', noop_check, create=False)
    patcher.start()
    yield
    patcher.stop()


def pytest_configure(config):
    """Register custom pytest markers."""
    config.addinivalue_line(
        "markers", "rate_limit: mark test to enable rate limiting (for testing rate limit functionality)"
    )
    config.addinivalue_line(
        "markers", "slow: full-pipeline runs on sphere meshes (deselect with -m 'not slow')"
    )


@pytest.fixture
def rng():
    """Seeded generator so randomized checks are reproducible."""
    return np.random.default_rng(20240601)


@pytest.fixture
def unit_triangle():
    """Right triangle in the z = 0 plane with normal +z."""
    return Triangle.from_points((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))


@pytest.fixture
def reference_tet():
    """Positively oriented reference tetrahedron."""
    return Tetrahedron.from_points((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))


@pytest.fixture(scope="session")
def homogeneous_sphere():
    """Single-layer sphere, level 1."""
    return build_layered_sphere_mesh([0.1], level=1, conductivities=[0.33], electrode_level=1)


@pytest.fixture(scope="session")
def two_layer_sphere():
    """Two-layer sphere with a conductivity jump in the outer layer, level 1."""
    return build_layered_sphere_mesh([0.1, 0.08], level=1, conductivities=[1.0, 0.33], electrode_level=1)


@pytest.fixture
def random_triangles(rng):
    """Factory for non-degenerate random triangles around the origin."""
    def make(count: int, scale: float = 1.0) -> Triangle:
        nodes = rng.uniform(-scale, scale, size=(count * 2, 3, 3))
        cross = np.cross(nodes[:, 1] - nodes[:, 0], nodes[:, 2] - nodes[:, 0])
        area = 0.5 * np.linalg.norm(cross, axis=1)
        keep = area > 0.05 * scale ** 2
        return Triangle(nodes[keep][:count])
    return make


@pytest.fixture
def random_tetrahedra(rng):
    """Factory for well-shaped random tetrahedra (volume bounded away from zero)."""
    def make(count: int, scale: float = 1.0) -> Tetrahedron:
        nodes = rng.uniform(-scale, scale, size=(count * 4, 4, 3))
        volume = np.einsum(
            "ij,ij->i",
            nodes[:, 1] - nodes[:, 0],
            np.cross(nodes[:, 2] - nodes[:, 0], nodes[:, 3] - nodes[:, 0]),
        ) / 6.0
        keep = np.abs(volume) > 0.02 * scale ** 3
        return Tetrahedron(nodes[keep][:count])
    return make
