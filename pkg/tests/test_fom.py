import json
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from mptrom import mmio
from mptrom.errors import (
    InsufficientResolutionWarning,
    InvalidGrading,
    NonPositiveFrequency,
    ParseError,
    SymmetryViolation,
    ThinObjectViolation,
)
from mptrom.fom import (
    MaterialParams,
    MeshGrading,
    assemble_source,
    build_radial_sphere_fom,
    export_fom,
    layer_thicknesses,
    load_fom_from_files,
    nondim_skin_depth,
    skin_depth,
    solve_full_order,
)
from mptrom.mpt import compute_N0


def test_skin_depth_definitions(materials):
    w = 1e5
    delta = skin_depth(w, materials)
    assert delta == pytest.approx(np.sqrt(2 / (w * 1e6 * 4e-7 * np.pi * 32)))
    assert nondim_skin_depth(w, materials) == pytest.approx(delta / materials.alpha)
    with pytest.raises(NonPositiveFrequency):
        skin_depth(0.0, materials)


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_layer_thicknesses(L):
    tau = 1e-3
    u = layer_thicknesses("uniform", L, tau)
    d = layer_thicknesses("geometric_decreasing", L, tau)
    g = layer_thicknesses("geometric_increasing", L, tau)
    assert u.sum() == pytest.approx(tau)
    assert d.sum() == pytest.approx(tau)
    assert g.sum() == pytest.approx(tau * (2 ** L - 1))
    assert g[0] == pytest.approx(tau)
    if L > 1:
        assert np.allclose(d[1:] / d[:-1], 2.0) and np.allclose(g[1:] / g[:-1], 2.0)


def test_grading_errors():
    with pytest.raises(ThinObjectViolation):
        layer_thicknesses("geometric_increasing", 3, 0.2)
    with pytest.raises(InvalidGrading):
        layer_thicknesses("spiral", 2, 0.1)
    with pytest.raises(InvalidGrading):
        layer_thicknesses("uniform", 0, 0.1)
    with pytest.raises(ValueError):
        MaterialParams(alpha=-1.0, sigma_star=1.0, mu_r=1.0)


def test_order_one_resolution_warning(materials):
    g = MeshGrading.for_target("uniform", 1, 1e8, materials)
    with pytest.warns(InsufficientResolutionWarning):
        build_radial_sphere_fom(materials, g, order_p=1, n_interior=2, n_exterior=6)
    g2 = MeshGrading.for_target("uniform", 2, 1e8, materials)
    with warnings.catch_warnings():
        warnings.simplefilter("error", InsufficientResolutionWarning)
        build_radial_sphere_fom(materials, g2, order_p=1, n_interior=2, n_exterior=6)


def test_operators_structure(small_sphere):
    f = small_sphere
    for A in (f.K, f.C, f.M, f.S):
        assert abs(A - A.T).max() == 0.0
    S = f.S.toarray()
    assert np.linalg.eigvalsh(S).min() > 0
    assert np.linalg.eigvalsh(f.C.toarray()).min() > -1e-14 * abs(S).max()
    n = f.metadata["n_radial_dofs"]
    # three decoupled identical direction blocks
    assert (f.K[:n, n:]).nnz == 0
    assert abs(f.K[:n, :n] - f.K[n:2 * n, n:2 * n]).max() == 0.0


def test_theta0_and_N0_magnetostatic(sphere, materials):
    mu = materials.mu_r
    exact = 4 * np.pi * materials.alpha ** 3 * (mu - 1) / (mu + 2)
    N0 = compute_N0(sphere)
    assert np.allclose(N0, exact * np.eye(3), rtol=1e-5, atol=1e-8 * exact)
    n = sphere.metadata["n_radial_dofs"]
    rhs0 = sphere._cache["radial"].rhs0
    res = (sphere.K + sphere.epsilon * sphere.M) @ sphere.o[0]
    assert np.linalg.norm(res[:n] - rhs0) <= 1e-12 * np.linalg.norm(rhs0)
    assert np.count_nonzero(sphere.o[0][n:]) == 0


@pytest.mark.parametrize("omega", [1e2, 1e6, 1e8])
def test_full_order_solve_residual(small_sphere, omega):
    q = solve_full_order(small_sphere, 1, omega, rel_tol=1e-10)
    r = assemble_source(small_sphere, 1, omega)
    assert np.linalg.norm(small_sphere.system_matrix(omega) @ q - r) <= 1e-10 * np.linalg.norm(r)
    with pytest.raises(NonPositiveFrequency):
        solve_full_order(small_sphere, 0, -1.0)


def test_export_ingest_roundtrip(small_sphere, tmp_path):
    man = export_fom(small_sphere, tmp_path)
    g = load_fom_from_files(man)
    for name in ("K", "C", "M", "S"):
        assert (getattr(g, name) != getattr(small_sphere, name)).nnz == 0
    for name in ("o", "s", "t", "c"):
        assert np.array_equal(getattr(g, name), getattr(small_sphere, name))
    assert g.materials == small_sphere.materials
    assert not g.supports_assembly


def test_ingest_rejects_asymmetric_and_missing(small_sphere, tmp_path):
    man = export_fom(small_sphere, tmp_path)
    K = small_sphere.K.tolil()
    K[0, 1] = K[0, 1] + 1.0
    mmio.write_sparse(tmp_path / "K.mtx", sp.csr_matrix(K), symmetric=False)
    with pytest.raises(SymmetryViolation):
        load_fom_from_files(man)
    doc = json.loads(man.read_text())
    del doc["c_ij"]
    (tmp_path / "m2.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_fom_from_files(tmp_path / "m2.json")
