"""Magnetic polarizability tensor assembly and post-processing.

Three evaluation routes are provided for the omega-dependent blocks:
quadrature of the defining integrals (IM), sparse matrix algebra on the
full coefficient vectors (FMM), and the reduced precomputed blocks (MM,
see :mod:`mptrom.pod`).
"""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CoincidentPositions,
    DimensionMismatch,
    ImaginaryResidueWarning,
    MissingPostprocData,
    MissingTheta0,
    NotSymmetric,
    UnsupportedForIngestedModel,
    ZeroReference,
)
from .linalg import eig3_sym
from .radial import sphere_quadrature

PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
PAIR_LABELS = ("11", "22", "33", "12", "13", "23")
SYMMETRY_TOL = 1e-10


def _symmetrize(A, name):
    A = np.asarray(A, dtype=float)
    norm = np.linalg.norm(A)
    defect = np.linalg.norm(A - A.T)
    if norm > 0 and defect > SYMMETRY_TOL * norm:
        raise NotSymmetric(f"{name} block symmetry defect {defect / norm:.2e}")
    return 0.5 * (A + A.T), (defect / norm if norm > 0 else 0.0)


@dataclass(frozen=True)
class MptTensor:
    omega: float
    N0: np.ndarray
    R: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        defects = {}
        for name in ("N0", "R", "I"):
            sym, d = _symmetrize(getattr(self, name), name)
            object.__setattr__(self, name, sym)
            defects[name] = d
        object.__setattr__(self, "defects", defects)

    @property
    def R_tilde(self):
        return self.N0 + self.R

    @property
    def complex(self):
        return self.R_tilde + 1j * self.I


@dataclass(frozen=True)
class SpectralSignature:
    frequencies: np.ndarray
    tensors: tuple
    method: str
    certificates: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if len(f) != len(self.tensors):
            raise DimensionMismatch("one tensor per frequency required")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if self.certificates is not None and len(self.certificates) != len(f):
            raise DimensionMismatch("one certificate per frequency required")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "tensors", tuple(self.tensors))
        if self.certificates is not None:
            object.__setattr__(self, "certificates", tuple(np.asarray(c) for c in self.certificates))

    def __len__(self):
        return len(self.frequencies)

    @property
    def R_tilde(self):
        return np.array([t.R_tilde for t in self.tensors])

    @property
    def I(self):
        return np.array([t.I for t in self.tensors])

    @property
    def complex(self):
        return np.array([t.complex for t in self.tensors])


# ---------------------------------------------------------------------------
# FMM: sparse-matrix post-processing

def compute_N0(fom, o_vectors=None):
    """omega-independent tensor N0 from the theta~(0) coefficient vectors."""
    O = fom.o if o_vectors is None else np.asarray(o_vectors)
    if O is None:
        raise MissingTheta0("theta~(0) solutions are not available")
    a3 = fom.materials.alpha ** 3
    vol_B = fom.volume_B_alpha / a3
    quad = O @ (fom.K @ O.T)
    N0 = a3 * ((1.0 - 1.0 / fom.materials.mu_r) * vol_B * np.eye(3) + 0.25 * quad)
    return 0.5 * (N0 + N0.T)


def compute_R_fmm(fom, q_i, q_j):
    if q_i.shape != (fom.n_dofs,) or q_j.shape != (fom.n_dofs,):
        raise DimensionMismatch("coefficient vectors must have length N_d")
    val = np.vdot(q_i, fom.K @ q_j)
    scale = abs(val)
    if q_i is q_j and scale > 0 and abs(val.imag) > 1e-9 * scale:
        warnings.warn(f"discarding imaginary residue {val.imag:.3e}", ImaginaryResidueWarning, stacklevel=2)
    return -0.25 * fom.materials.alpha ** 3 * val.real


def compute_I_fmm(fom, q_i, q_j, o_i, o_j, omega, i, j):
    if fom.s is None or fom.t is None or fom.c is None:
        raise MissingPostprocData("s_i, t_i and c_ij are required")
    s, t = fom.s, fom.t
    fixed = o_i @ (fom.C1 @ o_j) + fom.c[i, j] + s[i] @ o_j + s[j] @ o_i
    var = (
        np.vdot(q_i, fom.C @ q_j)
        + o_i @ (fom.C2 @ q_j)
        + o_j @ (fom.C2 @ np.conj(q_i))
        + t[i] @ q_j
        + t[j] @ np.conj(q_i)
    )
    return 0.25 * omega * fom.materials.alpha ** 3 * (fixed + var.real)


def fmm_blocks(fom, Q, omega):
    """R and I (3x3) for the three solution vectors stacked as rows of Q."""
    if fom.o is None:
        raise MissingTheta0("theta~(0) solutions are not available")
    a3 = fom.materials.alpha ** 3
    Qc = np.conj(Q)
    R = -0.25 * a3 * np.real(Qc @ (fom.K @ Q.T))
    O, T = fom.o, fom.t
    fixed = _fixed_block(fom)
    OC2 = (fom.C2.T @ O.T).T  # rows o_i^T C2
    var = Qc @ (fom.C @ Q.T) + OC2 @ Q.T + (OC2 @ Qc.T).T + T @ Q.T + (T @ Qc.T).T
    I = 0.25 * omega * a3 * (fixed + np.real(var))
    return R, I


def _fixed_block(fom):
    key = "fixed_block"
    if key not in fom._cache:
        O, S = fom.o, fom.s
        SO = S @ O.T
        fom._cache[key] = O @ (fom.C1 @ O.T) + fom.c + SO + SO.T
    return fom._cache[key]


# ---------------------------------------------------------------------------
# IM: quadrature of the defining integrals on the radial model

class RadialIntegrator:
    """Element-by-element quadrature of the tensor integrands.

    Fields are rebuilt in 3D at (radial Gauss point) x (direction) pairs from
    the coefficient vectors, then dotted and summed with r^2 dr dOmega weights.
    """

    def __init__(self, fom, disc, n_theta=4, n_phi=8, extra_points=3):
        self.alpha = fom.materials.alpha
        self.mu_r = fom.materials.mu_r
        self.nu_tilde = fom.materials.nu_tilde
        self.n = disc.mesh.n_dofs
        r, w, inside, E, D = disc.radial_points(extra_points)
        self.r, self.inside, self.E, self.D = r, inside, E, D
        dirs, wdir = sphere_quadrature(n_theta, n_phi)
        self.dirs = dirs
        self.wdir = wdir
        self.wr = w * r * r
        self.mu_inv = np.where(inside, 1.0 / self.mu_r, 1.0)
        # X[a, k] = e_k x d_a
        eye = np.eye(3)
        self.X = np.stack([np.cross(eye[k], dirs) for k in range(3)], axis=1)

    def _radial(self, q):
        q = np.asarray(q)
        if q.shape != (3 * self.n,):
            raise DimensionMismatch(f"expected length {3 * self.n}, got {q.shape}")
        G = q.reshape(3, self.n)
        g = (self.E @ G.T).T  # (3, nq)
        dg = (self.D @ G.T).T
        return g, dg

    def field(self, q):
        g, _ = self._radial(q)
        return np.einsum("kq,akc->qac", g, self.X)

    def curl(self, q):
        g, dg = self._radial(q)
        a = dg + g / self.r
        b = dg - g / self.r
        out = np.einsum("kq,kc->qc", a, np.eye(3))[:, None, :]
        radial = np.einsum("kq,ak->qa", b, self.dirs)
        return out - radial[:, :, None] * self.dirs[None, :, :]

    def uniform_field(self, i):
        """e_i x xi = r (e_i x xi_hat)."""
        return self.r[:, None, None] * self.X[None, :, i, :]

    def _integrate(self, f, weight):
        return np.einsum("qa,q,a->", f, weight, self.wdir)

    def R(self, q_i, q_j):
        ci, cj = self.curl(q_i), self.curl(q_j)
        val = self._integrate(np.einsum("qac,qac->qa", np.conj(ci), cj), self.mu_inv * self.wr)
        return -0.25 * self.alpha ** 3 * val.real

    def total_field(self, q, o, i):
        return self.field(q) + self.field(o) + self.uniform_field(i)

    def I(self, q_i, q_j, o_i, o_j, omega, i, j):
        ti = self.total_field(q_i, o_i, i)
        tj = self.total_field(q_j, o_j, j)
        nu = omega * self.nu_tilde
        val = self._integrate(np.einsum("qac,qac->qa", np.conj(ti), tj), nu * self.inside * self.wr)
        return 0.25 * self.alpha ** 3 * val.real

    def N0(self, O):
        curls = [self.curl(o) for o in O]
        vol = self._integrate(np.ones((len(self.r), len(self.wdir))), self.inside * self.wr)
        out = np.zeros((3, 3))
        for i, j in PAIRS:
            v = self._integrate(np.einsum("qac,qac->qa", curls[i], curls[j]), self.mu_inv * self.wr)
            out[i, j] = out[j, i] = 0.25 * v.real
        out += np.eye(3) * vol * (1.0 - 1.0 / self.mu_r)
        return self.alpha ** 3 * out

    def blocks(self, Q, O, omega):
        curls = [self.curl(q) for q in Q]
        totals = [self.total_field(Q[i], O[i], i) for i in range(3)]
        nu = omega * self.nu_tilde
        wk = self.mu_inv * self.wr
        wc = nu * self.inside * self.wr
        R = np.zeros((3, 3))
        I = np.zeros((3, 3))
        a3 = self.alpha ** 3
        for i, j in PAIRS:
            r = self._integrate(np.einsum("qac,qac->qa", np.conj(curls[i]), curls[j]), wk).real
            c = self._integrate(np.einsum("qac,qac->qa", np.conj(totals[i]), totals[j]), wc).real
            R[i, j] = R[j, i] = -0.25 * a3 * r
            I[i, j] = I[j, i] = 0.25 * a3 * c
        return R, I


def _integrator(fom):
    if fom.im_evaluator is None:
        raise UnsupportedForIngestedModel("model carries no quadrature data for the integral method")
    return fom.im_evaluator


def compute_R_im(fom, q_i, q_j):
    return _integrator(fom).R(q_i, q_j)


def compute_I_im(fom, q_i, q_j, o_i, o_j, omega, i, j):
    return _integrator(fom).I(q_i, q_j, o_i, o_j, omega, i, j)


def im_blocks(fom, Q, omega):
    return _integrator(fom).blocks(Q, fom.o, omega)


# ---------------------------------------------------------------------------
# sweeps

def assemble_signature(fom, frequencies, method="FMM", rel_tol=1e-8, rom=None, parallel=1):
    """MPT spectral signature over ``frequencies``.

    Solutions come from full-order solves, or from ``rom`` (a
    :class:`mptrom.pod.PodRom`) when given. ``method`` selects IM, FMM or MM;
    MM needs a ROM.
    """
    freqs = np.asarray(frequencies, dtype=float)
    if len(freqs) == 0:
        raise ValueError("no frequencies given")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("frequencies must be strictly ascending")
    method = method.upper()
    if method not in ("IM", "FMM", "MM"):
        raise ValueError(f"unknown method {method!r}")
    if method == "MM" and rom is None:
        raise ValueError("the matrix method requires a reduced-order model")
    N0 = compute_N0(fom)

    if rom is not None:
        from .pod import rom_blocks

        R, I = rom_blocks(rom, freqs, method)
        tensors = [MptTensor(w, N0, R[n], I[n]) for n, w in enumerate(freqs)]
    else:
        from .pod import solve_many

        sols = solve_many(fom, freqs, rel_tol, parallel)
        tensors = []
        for n, w in enumerate(freqs):
            R, I = _blocks(fom, sols[n], w, method)
            tensors.append(MptTensor(w, N0, R, I))
    return SpectralSignature(freqs, tensors, method)


def _blocks(fom, Q, omega, method):
    if method == "IM":
        return im_blocks(fom, Q, omega)
    return fmm_blocks(fom, Q, omega)


# ---------------------------------------------------------------------------
# analytic reference for the sphere

def _ratio_j1_j0(z):
    """j1(z) / j0(z) for complex z."""
    if abs(z) < 1.0:
        z2 = z * z
        j0 = j1 = 0.0
        term = 1.0 + 0j
        # ascending series: j0 = sum (-z^2)^n / (2n+1)!, j1 = z sum (-z^2)^n (2n+2)/(2n+3)!
        for n in range(20):
            j0 += term / math.factorial(2 * n + 1)
            j1 += term * (2 * n + 2) / math.factorial(2 * n + 3)
            term *= -z2
        return z * j1 / j0
    # closed form j1/j0 = 1/z - cot z, with cot evaluated through exp(2iz), Im z >= 0
    if z.imag < 0:
        return -_ratio_j1_j0(-z)
    e = np.exp(2j * z)
    cot = 1j * (e + 1.0) / (e - 1.0)
    return 1.0 / z - cot


def wait_sphere_oracle(materials, omega):
    """Isotropic MPT eigenvalue of a conducting permeable sphere of radius alpha."""
    mu = materials.mu_r
    a3 = materials.alpha ** 3
    if omega == 0:
        return complex(4.0 * np.pi * a3 * (mu - 1.0) / (mu + 2.0))
    if omega < 0:
        raise ValueError("omega must be non-negative")
    nu = omega * materials.nu_tilde
    k = np.sqrt(1j * nu * mu)
    rho = _ratio_j1_j0(complex(k))
    P = ((2.0 * mu + 1.0) * rho - k) / ((mu - 1.0) * rho + k)
    return complex(2.0 * np.pi * a3 * P)


def frobenius_error(approx, exact, abs_floor=0.0):
    """||approx - exact||_F / ||exact||_F with tensors compared as R~ + iI."""
    A = approx.complex if isinstance(approx, MptTensor) else np.asarray(approx)
    X = np.asarray(exact)
    if X.ndim == 0:
        X = X * np.eye(3)
    ref = np.linalg.norm(X)
    denom = max(ref, abs_floor)
    if denom == 0:
        raise ZeroReference("exact tensor is zero")
    return float(np.linalg.norm(A - X) / denom)


def scale_tensor(signature, s):
    """Signature of the object scaled by s: omega -> omega / s^2, tensors * s^3."""
    if not s > 0:
        raise ValueError("scale factor must be positive")
    s3 = s ** 3
    s2 = s ** 2
    tensors = [MptTensor(t.omega / s2, t.N0 * s3, t.R * s3, t.I * s3) for t in signature.tensors]
    certs = None
    if signature.certificates is not None:
        certs = [c * s3 for c in signature.certificates]
    return SpectralSignature(signature.frequencies / s2, tensors, signature.method, certs, dict(signature.meta))


def tensor_invariants(t):
    """Ascending eigenvalues of R~ and of I."""
    return eig3_sym(t.R_tilde), eig3_sym(t.I)


# ---------------------------------------------------------------------------
# dipole coil model

@dataclass(frozen=True)
class DipoleCoil:
    position: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        mom = np.asarray(self.moment, dtype=float)
        if pos.shape != (3,) or mom.shape != (3,):
            raise DimensionMismatch("position and moment must be 3-vectors")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(mom))):
            raise ValueError("non-finite coil data")
        if not np.any(mom):
            raise ValueError("dipole moment must be nonzero")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "moment", mom)


def laplace_hessian(x, z):
    """Hessian in x of G(x, z) = 1 / (4 pi |x - z|)."""
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    r = np.linalg.norm(d)
    if r == 0:
        raise CoincidentPositions("field point coincides with source")
    u = d / r
    return (3.0 * np.outer(u, u) - np.eye(3)) / (4.0 * np.pi * r ** 3)


def dipole_field(coil, z):
    """Free-space field at z of a magnetic dipole."""
    return laplace_hessian(z, coil.position) @ coil.moment


def predict_voltage(exciter, sensor, z, t):
    M = t.complex if isinstance(t, MptTensor) else np.asarray(t)
    H0 = dipole_field(exciter, z)
    Hms = dipole_field(sensor, z)
    return complex(Hms @ M @ H0)


# ---------------------------------------------------------------------------
# export / import

def csv_header(with_certificates=False):
    cols = ["omega"] + [f"re{p}" for p in PAIR_LABELS] + [f"im{p}" for p in PAIR_LABELS]
    if with_certificates:
        cols += [f"d{p}" for p in PAIR_LABELS]
    return cols


def _pairs(A):
    return [A[i, j] for i, j in PAIRS]


def write_signature_csv(path, signature):
    certs = signature.certificates
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(csv_header(certs is not None))
    for n, t in enumerate(signature.tensors):
        row = [t.omega] + _pairs(t.R_tilde) + _pairs(t.I)
        if certs is not None:
            row += _pairs(certs[n])
        w.writerow([repr(float(x)) for x in row])
    Path(path).write_text(out.getvalue(), encoding="utf-8", newline="")


def _from_pairs(vals):
    A = np.zeros((3, 3))
    for (i, j), v in zip(PAIRS, vals):
        A[i, j] = A[j, i] = v
    return A


def read_signature_csv(path, method="FMM"):
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    if header == csv_header(False):
        certified = False
    elif header == csv_header(True):
        certified = True
    else:
        raise ValueError(f"{path}: unexpected header {','.join(header)}")
    freqs, tensors, certs = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            vals = [float(x) for x in row]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
        w = vals[0]
        Rt = _from_pairs(vals[1:7])
        I = _from_pairs(vals[7:13])
        freqs.append(w)
        tensors.append(MptTensor(w, Rt, np.zeros((3, 3)), I))
        if certified:
            certs.append(_from_pairs(vals[13:19]))
    return SpectralSignature(np.array(freqs), tensors, method, certs if certified else None)


def signature_to_json(signature):
    d = {
        "method": signature.method,
        "frequencies": [float(w) for w in signature.frequencies],
        "R_tilde": [t.R_tilde.tolist() for t in signature.tensors],
        "I": [t.I.tolist() for t in signature.tensors],
        "N0": signature.tensors[0].N0.tolist() if len(signature) else None,
    }
    if signature.certificates is not None:
        d["certificates"] = [np.asarray(c).tolist() for c in signature.certificates]
    return json.dumps(d, indent=1)


def write_invariants_csv(path, signature):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["omega", "re_eig1", "re_eig2", "re_eig3", "im_eig1", "im_eig2", "im_eig3"])
    for t in signature.tensors:
        er, ei = tensor_invariants(t)
        w.writerow([repr(float(x)) for x in [t.omega, *er, *ei]])
    Path(path).write_text(out.getvalue(), encoding="utf-8", newline="")
