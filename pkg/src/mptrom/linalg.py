"""Linear algebra primitives: complex-symmetric CG, truncated SVD, quadratic
forms and the closed-form 3x3 symmetric eigensolver."""

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyMatrix,
    NonConvergence,
    NotSymmetric,
)


class CGInfo(NamedTuple):
    iterations: int
    residual: float
    history: np.ndarray
    restarts: tuple = ()


class SvdResult(NamedTuple):
    basis: np.ndarray
    sigma: np.ndarray
    M: int
    right: np.ndarray


def as_sparse(A):
    if sp.issparse(A):
        return A.tocsr()
    return sp.csr_matrix(np.asarray(A))


def symmetry_defect(A):
    """Return (max |A_ij - A_ji|, i, j) for a sparse or dense square matrix."""
    A = as_sparse(A)
    D = (A - A.T).tocoo()
    if D.nnz == 0:
        return 0.0, 0, 0
    k = int(np.argmax(np.abs(D.data)))
    return float(abs(D.data[k])), int(D.row[k]), int(D.col[k])


def cg_solve(A, b, rel_tol=1e-8, max_iter=None, preconditioner="jacobi", x0=None):
    """Conjugate orthogonal CG for complex symmetric ``A``.

    Uses the unconjugated bilinear form ``x^T y`` so that ``A = K - i w C + e M``
    (symmetric, not Hermitian) is handled. Iterates are passed through minimal
    residual smoothing, so the residual history is non-increasing between
    restarts. A restart happens when the recursive residual has drifted from
    the true one; its iteration numbers are listed in ``CGInfo.restarts``.

    Returns ``(x, CGInfo)``; ``x`` satisfies ``||Ax - b|| <= rel_tol ||b||``.
    """
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matrix not square: {A.shape}")
    b = np.asarray(b)
    n = A.shape[0]
    if b.shape != (n,):
        raise DimensionMismatch(f"rhs length {b.shape} does not match matrix {A.shape}")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    if max_iter is None:
        max_iter = max(100, 10 * n)
    dtype = np.result_type(A.dtype, b.dtype, np.float64)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n, dtype=dtype), CGInfo(0, 0.0, np.zeros(1))

    if preconditioner == "jacobi":
        d = np.asarray(A.diagonal()).astype(dtype)
        d[d == 0] = 1.0
        dinv = 1.0 / d
    elif preconditioner in (None, "none"):
        dinv = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    r = b - A @ x if x0 is not None else b.astype(dtype, copy=True)
    z = r * dinv if dinv is not None else r.copy()
    p = z.copy()
    rho = r @ z

    # smoothed iterate / residual
    y = x.copy()
    s = r.copy()
    snorm = np.linalg.norm(s)
    history = [snorm / bnorm]
    restarts = []

    it = 0
    while it < max_iter:
        q = A @ p
        mu = p @ q
        if mu == 0 or not np.isfinite(mu):
            break
        alpha = rho / mu
        x += alpha * p
        r -= alpha * q
        it += 1

        dr = r - s
        dd = np.vdot(dr, dr).real
        if dd > 0:
            eta = -np.vdot(dr, s) / dd  # minimises ||s + eta dr|| over complex eta
            y += eta * (x - y)
            s += eta * dr
            snorm = np.linalg.norm(s)
        history.append(snorm / bnorm)

        if snorm <= rel_tol * bnorm:
            true_res = np.linalg.norm(b - A @ y)
            if true_res <= rel_tol * bnorm:
                return y, CGInfo(it, true_res / bnorm, np.array(history), tuple(restarts))
            # recursive residual drifted: restart the recurrence from the smoothed iterate
            x = y.copy()
            r = b - A @ y
            s = r.copy()
            snorm = np.linalg.norm(s)
            history[-1] = snorm / bnorm
            restarts.append(it)
            z = r * dinv if dinv is not None else r.copy()
            p = z.copy()
            rho = r @ z
            continue

        z = r * dinv if dinv is not None else r
        rho_new = r @ z
        if rho == 0:
            break
        beta = rho_new / rho
        rho = rho_new
        p = z + beta * p

    true_res = np.linalg.norm(b - A @ y) / bnorm
    raise NonConvergence(it, true_res)


def tsvd(D, tol_sigma, max_modes=None):
    """Truncated SVD of a tall-skinny snapshot matrix.

    Singular values with ``s_k / s_1 < tol_sigma`` are dropped; at least one
    mode is always kept. Returns ``SvdResult(basis, sigma, M, right)`` where
    ``sigma`` is the full spectrum and ``basis``/``right`` hold the first M
    singular vectors.
    """
    D = np.asarray(D)
    if D.ndim != 2 or D.shape[1] == 0 or D.shape[0] == 0:
        raise EmptyMatrix("snapshot matrix has no columns")
    if not 0.0 < tol_sigma < 1.0:
        raise ValueError("tol_sigma must lie in (0, 1)")
    U, s, Vh = np.linalg.svd(D, full_matrices=False)
    if s[0] == 0.0:
        raise DegenerateInput("largest singular value is zero")
    s = s.copy()
    s[s <= 1e-14 * s[0]] = 0.0
    keep = (s / s[0] >= tol_sigma) & (s > 0.0)
    M = max(1, int(np.count_nonzero(keep)))
    if max_modes is not None:
        M = max(1, min(M, int(max_modes)))
    return SvdResult(U[:, :M].copy(), s, M, Vh[:M].conj().T.copy())


def quad_form(x, A, y, conjugate_left=True):
    """``sum_mn xhat_m A_mn y_n`` with ``xhat = conj(x)`` iff ``conjugate_left``."""
    x = np.asarray(x)
    y = np.asarray(y)
    if A.shape != (x.shape[0], y.shape[0]):
        raise DimensionMismatch(f"shapes {x.shape}, {A.shape}, {y.shape} incompatible")
    xl = np.conj(x) if conjugate_left else x
    return complex(xl @ (A @ y))


def _complement_pair(B, beta, fallback):
    R = B - beta * np.eye(3)
    crosses = [np.cross(R[0], R[1]), np.cross(R[0], R[2]), np.cross(R[1], R[2])]
    v = max(crosses, key=lambda c: c @ c)
    nv = np.linalg.norm(v)
    if not nv > 0.0:
        return fallback
    v = v / nv
    e1 = np.cross(v, np.eye(3)[int(np.argmin(np.abs(v)))])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    a, b, c = e1 @ B @ e1, e1 @ B @ e2, e2 @ B @ e2
    m, h = 0.5 * (a + c), np.hypot(0.5 * (a - c), b)
    return m - h, m + h


def eig3_sym(A, vectors=False, tol=1e-12):
    """Eigenvalues (ascending) of a real symmetric 3x3 matrix in closed form.

    With ``vectors=True`` also returns an orthogonal Q with ``A = Q diag(w) Q^T``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise DimensionMismatch(f"expected 3x3, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > tol * scale:
        raise NotSymmetric("matrix is not symmetric")
    A = 0.5 * (A + A.T)

    p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
    q = np.trace(A) / 3.0
    p2 = (A[0, 0] - q) ** 2 + (A[1, 1] - q) ** 2 + (A[2, 2] - q) ** 2 + 2.0 * p1
    if p2 == 0.0:
        w = np.array([q, q, q])
    else:
        p = np.sqrt(p2 / 6.0)
        B = (A - q * np.eye(3)) / p
        r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        # arccos near +-1 turns rounding in r into sqrt(eps) errors for a close
        # pair, so only the isolated root is taken from the formula. The pair
        # comes from the 2x2 block on the complement of its eigenvector.
        roots = 2.0 * np.cos(phi + np.array([0.0, 2.0, 4.0]) * np.pi / 3.0)
        iso = 0 if r >= 0.0 else 1
        pair = _complement_pair(B, roots[iso], np.delete(roots, iso))
        w = np.sort(q + p * np.array([roots[iso], *pair]))
    if not vectors:
        return w
    _, Q = np.linalg.eigh(A)
    return w, Q
