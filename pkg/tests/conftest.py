"""
Shared ground states for the test suite.

Solving for a ground state is the expensive step of every pipeline, so the
states are built once per session and handed to the tests read-only.
"""

import pytest

from core.ground_state import compute_ground_state
from core.models import GridSpec


@pytest.fixture(scope="session")
def benjamin_ono_state():
    """N = 1, s = 1/2, p = 2, whose ground state is 2/(1+x^2)."""
    return compute_ground_state(GridSpec(1, 200.0, 8192), 0.5, 2.0)


@pytest.fixture(scope="session")
def nls_state():
    """Classical N = 1, s = 1, p = 3, whose ground state is sqrt(2) sech(x)."""
    return compute_ground_state(GridSpec(1, 20.0, 512), 1.0, 3.0)


@pytest.fixture(scope="session")
def planar_state():
    """Classical N = 2, s = 1, p = 2 on a box wide enough for small rings."""
    return compute_ground_state(GridSpec(2, 20.0, 160), 1.0, 2.0)


@pytest.fixture(scope="session")
def desk_state():
    """N = 2, s = 1/2, p = 2 on the ground grid of desk.cfg."""
    return compute_ground_state(GridSpec(2, 32.0, 768), 0.5, 2.0)


@pytest.fixture(scope="session")
def coarse_fractional_state():
    """N = 2, s = 1/2, p = 2 on a small box, cheap enough for the fast suite."""
    return compute_ground_state(GridSpec(2, 24.0, 192), 0.5, 2.0)
