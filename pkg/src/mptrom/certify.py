"""A-posteriori certificates for PODP tensor coefficients.

The residual ``r_i - A[omega] U_i p`` is the product ``W_i w_i[omega]`` of an
omega-independent block ``W_i = [c_i | K U_i | C U_i | M U_i]`` and a short
coefficient vector ``w_i = [i omega; -p; i omega p; -eps p]``. Norms are
evaluated from small triangular factors of ``F W_i`` (``F`` a Cholesky
factor of the norm matrix or of its inverse) instead of the Gram matrix, so
the tiny residuals at snapshot frequencies are not lost to cancellation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NonConvergence, StaleFactorization

NORMS = ("dual", "primal")


@dataclass(frozen=True)
class StabilityConstant:
    alpha_lb: float
    provenance: str = "user_supplied"
    probes: tuple = ()

    def __post_init__(self):
        if not (self.alpha_lb > 0 and np.isfinite(self.alpha_lb)):
            raise ValueError("alpha_LB must be positive and finite")
        if self.provenance not in ("user_supplied", "eigen_estimated"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class ErrorCertificate:
    omega: float
    delta: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        if d.shape != (3, 3) or np.any(d < 0) or not np.array_equal(d, d.T):
            raise ValueError("certificate must be a symmetric non-negative 3x3 array")


def coefficient_vector(omega, p, epsilon):
    """w = [i omega; -p; i omega p; -eps p]."""
    p = np.asarray(p)
    return np.concatenate(([1j * omega], -p, 1j * omega * p, -epsilon * p))


class ResidualFactorization:
    """Offline part of the residual norm evaluation for one reduced basis."""

    def __init__(self, fom, basis, norm="primal"):
        if norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        self.norm = norm
        self.epsilon = fom.epsilon
        self.revision = basis.revision
        self.M = basis.M
        S = fom.norm_matrix()
        S = S.toarray() if sp.issparse(S) else np.asarray(S)
        L = sla.cholesky(S, lower=True)  # S = L L^T

        def apply_factor(X):
            # dual: ||x||_{S^-1} = ||L^-1 x||; primal: ||x||_S = ||L^T x||
            if norm == "dual":
                return sla.solve_triangular(L, X, lower=True)
            return L.T @ X

        self.Y = []
        for i, U in enumerate(basis.U):
            if U.shape[0] != fom.n_dofs:
                raise DimensionMismatch(f"basis {i} does not match the model size")
            W = np.column_stack([fom.source_factor(i), fom.K @ U, fom.C @ U, fom.M @ U])
            self.Y.append(apply_factor(W.astype(complex)))
        self.R = [np.linalg.qr(Y, mode="r") for Y in self.Y]
        self.R_pair = {}
        for i in range(3):
            for j in range(i + 1, 3):
                self.R_pair[i, j] = np.linalg.qr(np.hstack([self.Y[i], self.Y[j]]), mode="r")

    def gram(self, i, j):
        """G^(i,j) = W_i^H N W_j, with N = S^-1 (dual) or S (primal)."""
        return np.conj(self.Y[i]).T @ self.Y[j]

    def _check(self, i, p, revision):
        if revision is not None and revision != self.revision:
            raise StaleFactorization("factorization was built for a different basis")
        if np.asarray(p).shape != (self.M[i],):
            raise StaleFactorization(
                f"direction {i}: {np.shape(p)} reduced coefficients, factorization has M = {self.M[i]}"
            )


def residual_norm(fac, i, omega, p, revision=None):
    fac._check(i, p, revision)
    return float(np.linalg.norm(fac.R[i] @ coefficient_vector(omega, p, fac.epsilon)))


def residual_difference_norm(fac, i, j, omega, p_i, p_j, revision=None):
    """||r_i - r_j|| without forming either residual."""
    fac._check(i, p_i, revision)
    fac._check(j, p_j, revision)
    if i == j:
        return 0.0
    wi = coefficient_vector(omega, p_i, fac.epsilon)
    wj = coefficient_vector(omega, p_j, fac.epsilon)
    if i < j:
        R, w = fac.R_pair[i, j], np.concatenate([wi, -wj])
    else:
        R, w = fac.R_pair[j, i], np.concatenate([wj, -wi])
    return float(np.linalg.norm(R @ w))


def compute_delta(fac, stability, omega, P, alpha, revision=None):
    """Certificate Delta_ij = alpha^3/(8 alpha_LB) (|r_i|^2 + |r_j|^2 + |r_i - r_j|^2)."""
    r = [residual_norm(fac, i, omega, P[i], revision) for i in range(3)]
    scale = alpha ** 3 / (8.0 * stability.alpha_lb)
    D = np.zeros((3, 3))
    for i in range(3):
        for j in range(i, 3):
            cross = residual_difference_norm(fac, i, j, omega, P[i], P[j])
            D[i, j] = D[j, i] = scale * (r[i] ** 2 + r[j] ** 2 + cross ** 2)
    return ErrorCertificate(float(omega), D)


def certify_sweep(rom, fac, stability, freqs):
    """Certificates for a frequency sweep, reusing one batched reduced solve."""
    from .pod import batched_online_solve

    P = batched_online_solve(rom.ops, freqs)
    alpha = rom.fom.materials.alpha
    return [
        compute_delta(fac, stability, w, [P[i][n] for i in range(3)], alpha, rom.basis.revision).delta
        for n, w in enumerate(freqs)
    ]


def inf_sup_constant(A, S, rel_tol=1e-10, max_iter=2000, seed=0):
    """Smallest generalized singular value of complex symmetric A against S.

    Inverse power iteration on A^H S^-1 A x = lambda S x; returns sqrt(lambda_min).
    """
    A = sp.csc_matrix(A)
    S = sp.csc_matrix(S)
    n = A.shape[0]
    luA = spla.splu(A.astype(complex))
    luS = spla.splu(S)

    def solve_S(v):
        return luS.solve(v.real) + 1j * luS.solve(v.imag)

    # A^-H v = conj(A^-1 conj(v)) because A^T = A
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam_old = np.inf
    for it in range(1, max_iter + 1):
        # (A^H S^-1 A)^-1 S x = A^-1 S A^-H S x
        y = np.conj(luA.solve(np.conj(S @ x)))
        y = luA.solve(S @ y)
        x = y / np.sqrt(np.real(np.vdot(y, S @ y)))
        Ax = A @ x
        lam = float(np.real(np.vdot(Ax, solve_S(Ax))))
        if abs(lam_old - lam) <= rel_tol * abs(lam):
            return float(np.sqrt(lam)), it
        lam_old = lam
    raise NonConvergence(max_iter, abs(lam_old - lam) / abs(lam), "inf-sup inverse iteration did not converge")


def estimate_alpha_lb(fom, omegas, safety=0.5, rel_tol=1e-10, max_iter=2000):
    """Minimum over probe frequencies of the inf-sup proxy, times ``safety``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if len(omegas) == 0:
        raise ValueError("probe set is empty")
    S = fom.norm_matrix()
    vals = []
    for w in omegas:
        beta, _ = inf_sup_constant(fom.system_matrix(w), S, rel_tol, max_iter)
        vals.append(beta)
    return StabilityConstant(safety * min(vals), "eigen_estimated", tuple(zip(omegas.tolist(), vals)))
