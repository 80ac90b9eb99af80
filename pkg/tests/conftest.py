import numpy as np
import pytest

from mptrom.fom import MaterialParams, MeshGrading, build_radial_sphere_fom
from mptrom.pod import PodRom

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def materials():
    return MaterialParams(alpha=1e-3, sigma_star=1e6, mu_r=32.0)


@pytest.fixture(scope="session")
def sphere(materials):
    grading = MeshGrading.for_target("geometric_increasing", 2, 1e8, materials)
    return build_radial_sphere_fom(materials, grading)


@pytest.fixture(scope="session")
def small_sphere(materials):
    """Coarse model for tests that only need algebraic consistency."""
    grading = MeshGrading.for_target("geometric_increasing", 2, 1e8, materials)
    return build_radial_sphere_fom(materials, grading, order_p=2, n_interior=3, n_exterior=10)


@pytest.fixture(scope="session")
def rom(sphere):
    return PodRom.build(sphere, np.geomspace(1e1, 1e8, 13), tol_sigma=1e-6)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
