import numpy as np
import pytest
from scipy.integrate import quad

from mptrom.radial import LagrangeBasis, RadialDiscretisation, RadialMesh, gll_nodes, sphere_quadrature

NU = 0.37
MU = 5.0


def node_coordinates(mesh):
    """Physical coordinate of every free dof."""
    x = np.zeros(mesh.n_dofs)
    ref = gll_nodes(mesh.p)
    for e in range(mesh.n_elements):
        a, b = mesh.vertices[e], mesh.vertices[e + 1]
        dofs = mesh.element_dofs(e)
        live = dofs >= 0
        x[dofs[live]] = (a + 0.5 * (b - a) * (ref + 1.0))[live]
    return x


@pytest.fixture(params=[2, 3, 4])
def disc(request):
    mesh = RadialMesh(np.array([0.0, 0.4, 0.8, 1.0, 1.5, 2.0]), request.param)
    return RadialDiscretisation(mesh, MU, NU)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_lagrange_basis_partition_of_unity(p):
    b = LagrangeBasis(p)
    x = np.linspace(-1, 1, 11)
    phi, dphi = b.eval(x)
    assert np.allclose(phi.sum(axis=1), 1.0)
    assert np.allclose(dphi.sum(axis=1), 0.0, atol=1e-10)
    assert np.allclose(b.eval(b.nodes)[0], np.eye(p + 1), atol=1e-12)


def u_poly(r):
    # vanishes at r = 0 and r = 2 and is exactly representable for p >= 2
    return r * (2.0 - r)


def du_poly(r):
    return 2.0 - 2.0 * r


def test_stiffness_form_is_exact_on_quadratics(disc):
    u = u_poly(node_coordinates(disc.mesh))

    def integrand(r):
        mu_inv = 1.0 / MU if r < 1.0 else 1.0
        return mu_inv * (8 * np.pi / 3 * (du_poly(r) * r + u_poly(r)) ** 2 + 16 * np.pi / 3 * u_poly(r) ** 2)

    exact = quad(integrand, 0, 1)[0] + quad(integrand, 1, 2)[0]
    assert u @ (disc.k @ u) == pytest.approx(exact, rel=1e-12)


def test_mass_forms_and_source_vectors(disc):
    u = u_poly(node_coordinates(disc.mesh))
    c_exact = NU * 8 * np.pi / 3 * quad(lambda r: u_poly(r) ** 2 * r * r, 0, 1)[0]
    m_exact = 8 * np.pi / 3 * quad(lambda r: u_poly(r) ** 2 * r * r, 1, 2)[0]
    t_exact = NU * 8 * np.pi / 3 * quad(lambda r: u_poly(r) * r ** 3, 0, 1)[0]
    assert u @ (disc.c @ u) == pytest.approx(c_exact, rel=1e-12)
    assert u @ (disc.m_ext @ u) == pytest.approx(m_exact, rel=1e-12)
    assert u @ (disc.m_full @ u) == pytest.approx(c_exact / NU + m_exact, rel=1e-12)
    assert disc.t @ u == pytest.approx(t_exact, rel=1e-12)
    # integrating (r^2 u)' by parts leaves only the jump of 1/mu at the surface
    assert disc.rhs0 @ u == pytest.approx(16 * np.pi / 3 * u_poly(1.0) * (1 - 1 / MU), rel=1e-12)


def test_operators_symmetric(disc):
    for A in (disc.k, disc.c, disc.m_ext, disc.m_full):
        assert abs(A - A.T).max() == 0.0
    assert np.linalg.eigvalsh(disc.k.toarray()).min() > 0


def test_c_scalar():
    mesh = RadialMesh(np.array([0.0, 1.0, 2.0]), 2)
    assert RadialDiscretisation(mesh, 1.0, NU).c_scalar == pytest.approx(NU * 8 * np.pi / 15)


def test_mesh_validation():
    with pytest.raises(ValueError):
        RadialMesh(np.array([0.0, 0.5, 2.0]), 2)
    with pytest.raises(ValueError):
        RadialMesh(np.array([0.1, 1.0, 2.0]), 2)
    mesh = RadialMesh(np.array([0.0, 0.5, 1.0, 2.0]), 3)
    assert mesh.n_dofs == 8
    assert node_coordinates(mesh)[mesh.surface_dof()] == pytest.approx(1.0)


def test_sphere_quadrature_moments():
    d, w = sphere_quadrature()
    assert w.sum() == pytest.approx(4 * np.pi)
    assert np.sum(w * d[:, 0] ** 2) == pytest.approx(4 * np.pi / 3)
    assert np.sum(w * d[:, 0] ** 2 * d[:, 1] ** 2) == pytest.approx(4 * np.pi / 15)
    assert abs(np.sum(w * d[:, 2])) < 1e-14
