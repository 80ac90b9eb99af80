"""PODP reduced-order model: snapshots, truncated bases, projected operators,
online solves and the matrix-method precompute for O(M^2) tensor sweeps."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mmio
from .errors import (
    DimensionMismatch,
    MissingPostprocData,
    NonConvergence,
    NonPositiveFrequency,
    SingularReducedSystem,
    SnapshotFailure,
)
from .fom import assemble_source, solve_full_order
from .linalg import tsvd
from .mpt import PAIRS, fmm_blocks, im_blocks

RCOND_MIN = 1e-15


def _check_frequencies(freqs):
    freqs = np.asarray(freqs, dtype=float)
    if freqs.ndim != 1 or len(freqs) == 0:
        raise ValueError("at least one frequency is required")
    if np.any(freqs <= 0):
        raise NonPositiveFrequency("frequencies must be positive")
    if np.any(np.diff(freqs) < 0):
        raise ValueError("frequencies must be ascending")
    return freqs


def solve_many(fom, frequencies, rel_tol=1e-8, parallel=1):
    """Full-order solutions, shape (n_freq, 3, N_d).

    Work items are (frequency, direction) pairs; results are collected in
    input order, so the output does not depend on ``parallel``.
    """
    freqs = np.asarray(frequencies, dtype=float)
    tasks = [(n, w, i) for n, w in enumerate(freqs) for i in range(3)]

    def run(task):
        n, w, i = task
        try:
            return solve_full_order(fom, i, w, rel_tol), None
        except NonConvergence as exc:
            return None, (n, w, i, exc)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    failures = [err for _, err in results if err is not None]
    if failures:
        raise SnapshotFailure(failures)
    out = np.empty((len(freqs), 3, fom.n_dofs), dtype=complex)
    for (n, _, i), (x, _) in zip(tasks, results):
        out[n, i] = x
    return out


@dataclass(frozen=True)
class SnapshotSet:
    frequencies: np.ndarray
    D: np.ndarray  # (3, N_d, N)
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.D.shape[0] != 3 or self.D.shape[2] != len(self.frequencies):
            raise DimensionMismatch("snapshot columns must match the frequency list")

    @property
    def N(self):
        return len(self.frequencies)

    def merged(self, other):
        """Union of two snapshot sets, columns re-sorted by frequency."""
        f = np.concatenate([self.frequencies, other.frequencies])
        D = np.concatenate([self.D, other.D], axis=2)
        order = np.argsort(f, kind="stable")
        return SnapshotSet(f[order], D[:, :, order], self.rel_tol)


def build_snapshots(fom, frequencies, rel_tol=1e-8, parallel=1):
    freqs = _check_frequencies(frequencies)
    sols = solve_many(fom, freqs, rel_tol, parallel)
    return SnapshotSet(freqs, np.ascontiguousarray(sols.transpose(1, 2, 0)), rel_tol)


@dataclass(frozen=True)
class ReducedBasis:
    U: tuple  # three (N_d, M_i) arrays
    sigma: tuple
    tol_sigma: float
    frequencies: np.ndarray = None

    @property
    def M(self):
        return tuple(u.shape[1] for u in self.U)

    @property
    def revision(self):
        h = hashlib.sha1()
        for u in self.U:
            h.update(np.ascontiguousarray(u).tobytes())
        return h.hexdigest()[:16]


def build_reduced_basis(snapshots, tol_sigma=1e-6, max_modes=None):
    Us, sig = [], []
    for i in range(3):
        res = tsvd(snapshots.D[i], tol_sigma, max_modes)
        Us.append(res.basis)
        sig.append(res.sigma)
    return ReducedBasis(tuple(Us), tuple(sig), tol_sigma, snapshots.frequencies)


@dataclass(frozen=True)
class ReducedOperators:
    K: tuple
    C: tuple
    M: tuple
    f: tuple  # U_i^H (C o_i + t_i)
    epsilon: float
    revision: str

    def system(self, i, omega):
        return self.K[i] - 1j * omega * self.C[i] + self.epsilon * self.M[i]

    def rhs(self, i, omega):
        return 1j * omega * self.f[i]


def _project(U, A, V):
    return np.conj(U).T @ (A @ V)


def project_operators(fom, basis):
    K, C, M, f = [], [], [], []
    for i, U in enumerate(basis.U):
        if U.shape[0] != fom.n_dofs:
            raise DimensionMismatch(f"basis {i} has {U.shape[0]} rows, model has {fom.n_dofs}")
        K.append(_project(U, fom.K, U))
        C.append(_project(U, fom.C, U))
        M.append(_project(U, fom.M, U))
        f.append(np.conj(U).T @ fom.source_factor(i))
    return ReducedOperators(tuple(K), tuple(C), tuple(M), tuple(f), fom.epsilon, basis.revision)


def _backward_error(A, x, b):
    r = A @ x - b
    denom = np.linalg.norm(A, 2) * np.linalg.norm(x) + np.linalg.norm(b)
    return float(np.linalg.norm(r) / denom) if denom > 0 else 0.0


def online_solve(ops, omega, direction=None, return_residual=False):
    """Reduced coefficients p_i for each direction (or one ``direction``).

    The reported residual is the normwise backward error
    ||A p - b|| / (||A|| ||p|| + ||b||).
    """
    if not omega > 0:
        raise NonPositiveFrequency(f"omega must be positive, got {omega}")
    dirs = range(3) if direction is None else [direction]
    ps, res = [], []
    for i in dirs:
        A = ops.system(i, omega)
        b = ops.rhs(i, omega)
        try:
            p = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise SingularReducedSystem(omega, i) from None
        if not np.all(np.isfinite(p)) or 1.0 / np.linalg.cond(A) < RCOND_MIN:
            raise SingularReducedSystem(omega, i)
        ps.append(p)
        res.append(_backward_error(A, p, b))
    out = ps if direction is None else ps[0]
    if return_residual:
        return out, (res if direction is None else res[0])
    return out


def reconstruct(basis, i, p):
    U = basis.U[i]
    p = np.asarray(p)
    if p.shape != (U.shape[1],):
        raise DimensionMismatch(f"expected {U.shape[1]} reduced coefficients, got {p.shape}")
    return U @ p


@dataclass(frozen=True)
class MmPrecompute:
    K: dict  # (i, j) -> U_i^H K U_j
    C: dict
    h: dict  # (i, j) -> o_i^T C2 U_j
    tau: dict  # (i, j) -> t_i^T U_j
    sigma: np.ndarray  # 3x3 fixed block
    alpha: float
    revision: str


def mm_precompute(fom, basis):
    if fom.o is None or fom.s is None or fom.t is None or fom.c is None:
        raise MissingPostprocData("o_i, s_i, t_i and c_ij are required for the matrix method")
    KU = [fom.K @ U for U in basis.U]
    CU = [fom.C @ U for U in basis.U]
    C2U = [fom.C2 @ U for U in basis.U]
    K, C, h, tau = {}, {}, {}, {}
    for i in range(3):
        Uh = np.conj(basis.U[i]).T
        for j in range(3):
            K[i, j] = Uh @ KU[j]
            C[i, j] = Uh @ CU[j]
            h[i, j] = fom.o[i] @ C2U[j]
            tau[i, j] = fom.t[i] @ basis.U[j]
    O, S = fom.o, fom.s
    SO = S @ O.T
    sigma = O @ (fom.C1 @ O.T) + fom.c + SO + SO.T
    return MmPrecompute(K, C, h, tau, np.real(sigma), fom.materials.alpha, basis.revision)


def mpt_mm(pre, p_i, p_j, omega, i, j):
    """(R_ij, I_ij) from reduced coefficients; cost O(M_i M_j)."""
    if p_i.shape != (pre.K[i, j].shape[0],) or p_j.shape != (pre.K[i, j].shape[1],):
        raise DimensionMismatch("reduced coefficient lengths do not match the precompute")
    a3 = pre.alpha ** 3
    pic = np.conj(p_i)
    R = -0.25 * a3 * np.real(pic @ pre.K[i, j] @ p_j)
    var = (
        pic @ pre.C[i, j] @ p_j
        + pre.h[i, j] @ p_j
        + np.conj(pre.h[j, i] @ p_i)
        + pre.tau[i, j] @ p_j
        + np.conj(pre.tau[j, i] @ p_i)
    )
    I = 0.25 * omega * a3 * (pre.sigma[i, j] + np.real(var))
    return float(R), float(I)


def batched_online_solve(ops, freqs):
    """Reduced solutions for all frequencies: list of (n_freq, M_i) arrays."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise NonPositiveFrequency("frequencies must be positive")
    w = freqs[:, None, None]
    P = []
    for i in range(3):
        A = ops.K[i][None] - 1j * w * ops.C[i][None] + ops.epsilon * ops.M[i][None]
        b = 1j * freqs[:, None] * ops.f[i][None]
        try:
            p = np.linalg.solve(A, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise SingularReducedSystem(float("nan"), i) from None
        bad = ~np.all(np.isfinite(p), axis=1)
        if np.any(bad):
            raise SingularReducedSystem(float(freqs[np.argmax(bad)]), i)
        P.append(p)
    return P


def mm_blocks_batched(pre, P, freqs):
    """R and I arrays (n_freq, 3, 3) from batched reduced solutions."""
    freqs = np.asarray(freqs, dtype=float)
    nf = len(freqs)
    a3 = pre.alpha ** 3
    R = np.zeros((nf, 3, 3))
    I = np.zeros((nf, 3, 3))
    Pc = [np.conj(p) for p in P]
    for i, j in PAIRS:
        kr = np.einsum("fm,mn,fn->f", Pc[i], pre.K[i, j], P[j])
        var = (
            np.einsum("fm,mn,fn->f", Pc[i], pre.C[i, j], P[j])
            + P[j] @ pre.h[i, j]
            + np.conj(P[i] @ pre.h[j, i])
            + P[j] @ pre.tau[i, j]
            + np.conj(P[i] @ pre.tau[j, i])
        )
        R[:, i, j] = R[:, j, i] = -0.25 * a3 * kr.real
        I[:, i, j] = I[:, j, i] = 0.25 * freqs * a3 * (pre.sigma[i, j] + var.real)
    return R, I


@dataclass
class PodRom:
    """Snapshots, basis, projected operators and the MM precompute, kept in sync."""

    fom: object
    snapshots: SnapshotSet
    tol_sigma: float = 1e-6
    max_modes: int = None
    basis: ReducedBasis = field(init=False)
    ops: ReducedOperators = field(init=False)
    pre: MmPrecompute = field(init=False)
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        self._rebuild()

    def _rebuild(self):
        import time

        t0 = time.perf_counter()
        self.basis = build_reduced_basis(self.snapshots, self.tol_sigma, self.max_modes)
        self.ops = project_operators(self.fom, self.basis)
        self.pre = mm_precompute(self.fom, self.basis)
        self.timings["svd_projection"] = self.timings.get("svd_projection", 0.0) + time.perf_counter() - t0

    @classmethod
    def build(cls, fom, frequencies, tol_sigma=1e-6, rel_tol=1e-8, parallel=1, max_modes=None):
        import time

        t0 = time.perf_counter()
        snaps = build_snapshots(fom, frequencies, rel_tol, parallel)
        t_solve = time.perf_counter() - t0
        rom = cls(fom, snaps, tol_sigma, max_modes)
        rom.timings["offline_solve"] = t_solve
        return rom

    def add_snapshots(self, frequencies, parallel=1):
        import time

        t0 = time.perf_counter()
        new = build_snapshots(self.fom, frequencies, self.snapshots.rel_tol, parallel)
        self.timings["offline_solve"] = self.timings.get("offline_solve", 0.0) + time.perf_counter() - t0
        self.snapshots = self.snapshots.merged(new)
        self._rebuild()

    @property
    def M(self):
        return self.basis.M

    def solve(self, omega):
        return online_solve(self.ops, omega)

    def reconstruct_all(self, omega):
        return np.stack([reconstruct(self.basis, i, p) for i, p in enumerate(self.solve(omega))])

    def mm_sweep(self, freqs):
        P = batched_online_solve(self.ops, freqs)
        return mm_blocks_batched(self.pre, P, freqs)

    def signature(self, freqs, method="MM"):
        from .mpt import assemble_signature

        return assemble_signature(self.fom, freqs, method=method, rom=self)


def rom_blocks(rom, freqs, method="MM", timings=None):
    """R and I arrays (n_freq, 3, 3) from reduced solutions.

    MM works on the reduced coefficients directly; FMM and IM first
    reconstruct q = U p. ``timings`` (if given) receives the online solve and
    post-processing wall times.
    """
    import time

    freqs = np.asarray(freqs, dtype=float)
    t0 = time.perf_counter()
    P = batched_online_solve(rom.ops, freqs)
    t1 = time.perf_counter()
    if method == "MM":
        R, I = mm_blocks_batched(rom.pre, P, freqs)
    else:
        blocks = fmm_blocks if method == "FMM" else im_blocks
        R = np.empty((len(freqs), 3, 3))
        I = np.empty((len(freqs), 3, 3))
        for n, w in enumerate(freqs):
            Q = np.stack([rom.basis.U[i] @ P[i][n] for i in range(3)])
            R[n], I[n] = blocks(rom.fom, Q, w)
    t2 = time.perf_counter()
    if timings is not None:
        timings["online_solve"] = timings.get("online_solve", 0.0) + t1 - t0
        timings["postprocessing"] = timings.get("postprocessing", 0.0) + t2 - t1
    return R, I


# ---------------------------------------------------------------------------
# directory serialisation

def save_reduced(directory, basis, ops):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(3):
        mmio.write_array(d / f"U{i + 1}.mtx", basis.U[i])
        mmio.write_array(d / f"K{i + 1}.mtx", ops.K[i])
        mmio.write_array(d / f"C{i + 1}.mtx", ops.C[i])
        mmio.write_array(d / f"M{i + 1}.mtx", ops.M[i])
        mmio.write_array(d / f"f{i + 1}.mtx", ops.f[i])
        mmio.write_array(d / f"sigma{i + 1}.mtx", basis.sigma[i])
    header = {
        "tol_sigma": basis.tol_sigma,
        "M": list(basis.M),
        "frequencies": [float(w) for w in basis.frequencies] if basis.frequencies is not None else None,
        "epsilon": ops.epsilon,
    }
    (d / "reduced.json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def load_reduced(directory):
    d = Path(directory)
    header = json.loads((d / "reduced.json").read_text(encoding="utf-8"))
    U, K, C, M, f, sig = [], [], [], [], [], []
    for i in range(3):
        U.append(mmio.read(d / f"U{i + 1}.mtx"))
        K.append(mmio.read(d / f"K{i + 1}.mtx"))
        C.append(mmio.read(d / f"C{i + 1}.mtx"))
        M.append(mmio.read(d / f"M{i + 1}.mtx"))
        f.append(mmio.read_vector(d / f"f{i + 1}.mtx"))
        sig.append(mmio.read_vector(d / f"sigma{i + 1}.mtx"))
        if U[-1].shape[1] != header["M"][i]:
            raise DimensionMismatch(f"U{i + 1} has {U[-1].shape[1]} columns, header says {header['M'][i]}")
    freqs = header.get("frequencies")
    basis = ReducedBasis(tuple(U), tuple(sig), header["tol_sigma"], None if freqs is None else np.array(freqs))
    ops = ReducedOperators(tuple(K), tuple(C), tuple(M), tuple(f), header["epsilon"], basis.revision)
    return basis, ops


def residual_vector(fom, ops_or_basis, i, omega, p):
    """Explicit full-order residual r_i - A U_i p (test oracle)."""
    U = ops_or_basis.U[i]
    return assemble_source(fom, i, omega) - fom.system_matrix(omega) @ (U @ p)
