import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mptrom.errors import DegenerateInput, DimensionMismatch, EmptyMatrix, NonConvergence, NotSymmetric
from mptrom.linalg import cg_solve, eig3_sym, quad_form, symmetry_defect, tsvd


def complex_symmetric(n, seed, shift=4.0):
    rng = np.random.default_rng(seed)
    K = sp.random(n, n, density=0.2, random_state=rng)
    K = K + K.T + shift * sp.eye(n)
    C = sp.diags(rng.uniform(0.5, 1.5, n))
    return (K - 1j * 0.7 * C).tocsr()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cg_matches_direct_solve(seed):
    A = complex_symmetric(60, seed)
    b = np.random.default_rng(seed).standard_normal(60) * 1j
    x, info = cg_solve(A, b, rel_tol=1e-10)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.allclose(x, ref, rtol=1e-7, atol=1e-12)
    assert info.residual <= 1e-10


@pytest.mark.parametrize("seed", [5, 6, 7])
def test_cg_history_is_monotone_between_restarts(seed):
    A = complex_symmetric(80, seed, shift=1.0)
    b = np.random.default_rng(seed).standard_normal(80) + 1j
    _, info = cg_solve(A, b, rel_tol=1e-9)
    cuts = [0, *info.restarts, len(info.history)]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        seg = info.history[lo:hi]
        assert np.all(np.diff(seg) <= 1e-14 * seg[0])


def test_cg_zero_rhs_returns_zero():
    x, info = cg_solve(complex_symmetric(10, 0), np.zeros(10))
    assert not np.any(x) and info.iterations == 0


def test_cg_raises_on_iteration_cap():
    A = complex_symmetric(80, 3, shift=0.1)
    with pytest.raises(NonConvergence) as exc:
        cg_solve(A, np.ones(80), rel_tol=1e-12, max_iter=2)
    assert exc.value.iterations == 2
    assert exc.value.residual > 1e-12


def test_cg_shape_checks():
    A = complex_symmetric(10, 0)
    with pytest.raises(DimensionMismatch):
        cg_solve(A, np.ones(9))
    with pytest.raises(DimensionMismatch):
        cg_solve(sp.csr_matrix(np.ones((3, 4))), np.ones(3))


def test_tsvd_truncation_rule():
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.standard_normal((50, 6)))
    s = np.array([1.0, 1e-2, 1e-4, 1e-6 * 1.01, 1e-6 * 0.99, 1e-9])
    V, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    res = tsvd(U @ np.diag(s) @ V.T, 1e-6)
    assert res.M == 4
    assert np.allclose(res.sigma, s, rtol=1e-8, atol=1e-14)
    assert np.allclose(res.basis.conj().T @ res.basis, np.eye(4), atol=1e-12)


def test_tsvd_max_modes_and_errors():
    D = np.random.default_rng(1).standard_normal((20, 5))
    assert tsvd(D, 1e-12, max_modes=2).M == 2
    with pytest.raises(EmptyMatrix):
        tsvd(np.zeros((20, 0)), 1e-6)
    with pytest.raises(DegenerateInput):
        tsvd(np.zeros((20, 3)), 1e-6)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)))
def test_eig3_sym_matches_lapack(A):
    A = A + A.T
    w = eig3_sym(A)
    ref = np.linalg.eigvalsh(A)
    assert np.allclose(w, ref, atol=1e-9 * max(1.0, np.abs(ref).max()))


@pytest.mark.parametrize("d", [(2.0, 0.0, 0.0), (0.0, 0.0, -2.0), (1.0, 1.0, 1.0 + 1e-7), (-3.0, 1e-9, 1e-9)])
def test_eig3_sym_close_pairs_at_roundoff(d):
    Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
    A = Q @ np.diag(d) @ Q.T
    A = 0.5 * (A + A.T)
    assert np.max(np.abs(eig3_sym(A) - np.linalg.eigvalsh(A))) <= 1e-14 * max(np.abs(d))


def test_eig3_sym_repeated_and_vectors():
    assert np.allclose(eig3_sym(2.0 * np.eye(3)), [2, 2, 2])
    A = np.diag([1.0, 1.0, 3.0])
    w, Q = eig3_sym(A, vectors=True)
    assert np.allclose(Q @ np.diag(w) @ Q.T, A)
    with pytest.raises(NotSymmetric):
        eig3_sym(np.triu(np.ones((3, 3))))


def test_quad_form_and_symmetry_defect():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.5, 3.0]]))
    x = np.array([1j, 1.0])
    assert quad_form(x, A, x) == pytest.approx(np.conj(x) @ A.toarray() @ x)
    assert quad_form(x, A, x, conjugate_left=False) == pytest.approx(x @ A.toarray() @ x)
    d, i, j = symmetry_defect(A)
    assert d == pytest.approx(0.5) and {i, j} == {0, 1}
    with pytest.raises(DimensionMismatch):
        quad_form(np.ones(3), A, np.ones(2))
