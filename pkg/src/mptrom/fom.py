"""Full-order models: materials, skin depth, boundary-layer grading, the
built-in radial sphere discretisation, full-order solves and matrix ingest."""

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import mmio
from .errors import (
    DimensionMismatch,
    InsufficientResolutionWarning,
    InvalidGrading,
    MissingPostprocData,
    MptromError,
    NonConvergence,
    NonPositiveFrequency,
    ParseError,
    SymmetryViolation,
    ThinObjectViolation,
    UnsupportedForIngestedModel,
)
from .linalg import cg_solve, symmetry_defect
from .radial import FOUR_PI_3, RadialDiscretisation, RadialMesh

MU0 = 4.0e-7 * np.pi
SCHEMES = ("uniform", "geometric_decreasing", "geometric_increasing")


class NotPositiveSemidefinite(MptromError, ValueError):
    pass


@dataclass(frozen=True)
class MaterialParams:
    alpha: float
    sigma_star: float
    mu_r: float
    epsilon: float = 1e-10
    mu0: float = MU0

    def __post_init__(self):
        for name in ("alpha", "sigma_star", "mu_r", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def nu_tilde(self):
        """alpha^2 mu0 sigma*, so that nu = omega * nu_tilde."""
        return self.alpha ** 2 * self.mu0 * self.sigma_star

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "sigma_star": self.sigma_star,
            "mu_r": self.mu_r,
            "epsilon": self.epsilon,
        }


def skin_depth(omega, materials):
    """Skin depth in metres: sqrt(2 / (omega sigma* mu0 mu_r))."""
    if not omega > 0:
        raise NonPositiveFrequency(f"omega must be positive, got {omega}")
    m = materials
    return np.sqrt(2.0 / (omega * m.sigma_star * m.mu0 * m.mu_r))


def nondim_skin_depth(omega, materials):
    """tau = sqrt(2 / (mu_r nu)) = delta / alpha."""
    if not omega > 0:
        raise NonPositiveFrequency(f"omega must be positive, got {omega}")
    nu = omega * materials.nu_tilde
    return np.sqrt(2.0 / (materials.mu_r * nu))


def layer_thicknesses(scheme, L, tau, half_extent=1.0):
    """Layer thicknesses t_1..t_L, t_1 touching the conductor surface."""
    if scheme not in SCHEMES:
        raise InvalidGrading(f"unknown scheme {scheme!r}")
    if int(L) != L or L < 1:
        raise InvalidGrading("layer count must be a positive integer")
    if not tau > 0:
        raise InvalidGrading("tau must be positive")
    L = int(L)
    if L == 1:
        t = np.array([float(tau)])
    elif scheme == "uniform":
        t = np.full(L, tau / L)
    elif scheme == "geometric_decreasing":
        t = (tau / (2.0 ** L - 1.0)) * 2.0 ** np.arange(L)
    else:
        t = tau * 2.0 ** np.arange(L)
    if scheme == "geometric_increasing" and t.sum() > half_extent:
        raise ThinObjectViolation(
            f"geometric increasing layers total {t.sum():.4g} exceed half extent {half_extent}"
        )
    return t


@dataclass(frozen=True)
class MeshGrading:
    scheme: str
    L: int
    tau: float
    thicknesses: np.ndarray = None

    def __post_init__(self):
        t = layer_thicknesses(self.scheme, self.L, self.tau)
        object.__setattr__(self, "thicknesses", t)

    @classmethod
    def for_target(cls, scheme, L, omega_target, materials):
        return cls(scheme, L, float(nondim_skin_depth(omega_target, materials)))


@dataclass(frozen=True, eq=False)
class FullOrderModel:
    """Immutable bundle of the omega-independent FEM matrices and vectors.

    ``C``, ``C1``, ``C2``, ``s``, ``t`` and ``c`` carry the weight
    nu~ = alpha^2 mu0 sigma*, so ``A[omega] = K - i omega C + epsilon M``.
    Rows of ``o``, ``s``, ``t`` are the three excitation directions.
    """

    K: sp.csr_matrix
    C: sp.csr_matrix
    M: sp.csr_matrix
    C1: sp.csr_matrix
    C2: sp.csr_matrix
    o: np.ndarray
    s: np.ndarray
    t: np.ndarray
    c: np.ndarray
    materials: MaterialParams
    volume_B_alpha: float
    shared_basis: bool = True
    S: sp.csr_matrix = None
    im_evaluator: object = None
    metadata: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self):
        return self.K.shape[0]

    @property
    def epsilon(self):
        return self.materials.epsilon

    @property
    def supports_assembly(self):
        return self.metadata.get("source") == "radial_sphere"

    def system_matrix(self, omega):
        return (self.K - 1j * omega * self.C + self.epsilon * self.M).tocsr()

    def source_factor(self, i):
        """omega-independent part of the source: C o_i + t_i."""
        if self.o is None or self.t is None:
            raise MissingPostprocData("o_i and t_i are required for the source term")
        key = ("chat", i)
        if key not in self._cache:
            self._cache[key] = self.C @ self.o[i] + self.t[i]
        return self._cache[key]

    def norm_matrix(self):
        """SPD matrix defining the Y^(hp) inner product."""
        if self.S is not None:
            return self.S
        if "S_warned" not in self._cache:
            warnings.warn("no norm matrix supplied; falling back to S = K + M_reg", stacklevel=2)
            self._cache["S_warned"] = True
        return (self.K + self.M).tocsr()


def radial_vertices(thicknesses, n_interior, n_exterior, outer_radius, ratio=1.5):
    """Element vertices: coarse interior, graded layers under r = 1, geometric exterior."""
    t = np.asarray(thicknesses, dtype=float)
    depth = t.sum()
    if depth >= 1.0:
        raise ThinObjectViolation(f"layers of total thickness {depth:.4g} fill the unit sphere")
    if n_interior < 1 or n_exterior < 1:
        raise InvalidGrading("interior and exterior element counts must be >= 1")
    if not outer_radius > 1.0:
        raise InvalidGrading("outer radius must exceed the unit conductor radius")
    inner = np.linspace(0.0, 1.0 - depth, n_interior + 1)
    layers = 1.0 - np.cumsum(t)[::-1][1:]
    h0 = (outer_radius - 1.0) * (ratio - 1.0) / (ratio ** n_exterior - 1.0)
    ext = 1.0 + h0 * (ratio ** np.arange(1, n_exterior + 1) - 1.0) / (ratio - 1.0)
    ext[-1] = outer_radius
    return np.concatenate([inner, layers, [1.0], ext])


def build_radial_sphere_fom(
    materials,
    grading,
    order_p=3,
    outer_radius=1000.0,
    n_interior=8,
    n_exterior=24,
    exterior_ratio=1.5,
    theta0_tol=1e-12,
):
    """Discretise the unit sphere problem in the radially reduced setting.

    The three excitation directions occupy three identical diagonal blocks;
    theta~(0) solutions are computed and attached before returning.
    """
    if order_p < 1:
        raise InvalidGrading("order_p must be >= 1")
    verts = radial_vertices(grading.thicknesses, n_interior, n_exterior, outer_radius, exterior_ratio)
    if order_p == 1:
        n_in_skin = int(np.count_nonzero((verts < 1.0) & (verts >= 1.0 - grading.tau * (1 + 1e-12))))
        if n_in_skin < 2:
            warnings.warn(
                "fewer than 2 elements within one skin depth of the surface at order 1",
                InsufficientResolutionWarning,
                stacklevel=2,
            )
    mesh = RadialMesh(verts, order_p)
    disc = RadialDiscretisation(mesh, materials.mu_r, materials.nu_tilde)
    n = mesh.n_dofs

    def blocks(a):
        return sp.block_diag([a, a, a], format="csr")

    def vec(v):
        out = np.zeros((3, 3 * n))
        for i in range(3):
            out[i, i * n:(i + 1) * n] = v
        return out

    C = blocks(disc.c)
    t = vec(disc.t)
    from .mpt import RadialIntegrator

    fom = FullOrderModel(
        K=blocks(disc.k),
        C=C,
        M=blocks(disc.m_ext),
        C1=C,
        C2=C,
        o=None,
        s=t,
        t=t,
        c=np.eye(3) * disc.c_scalar,
        materials=materials,
        volume_B_alpha=materials.alpha ** 3 * FOUR_PI_3,
        shared_basis=True,
        S=blocks(disc.k + disc.m_full),
        metadata={
            "source": "radial_sphere",
            "order_p": order_p,
            "scheme": grading.scheme,
            "L": grading.L,
            "tau": grading.tau,
            "thicknesses": [float(x) for x in grading.thicknesses],
            "outer_radius": float(outer_radius),
            "n_interior": n_interior,
            "n_exterior": n_exterior,
            "n_radial_dofs": n,
        },
    )
    fom._cache["radial"] = disc
    o = np.stack([solve_theta0(fom, i, theta0_tol) for i in range(3)])
    out = replace(fom, o=o, _cache={"radial": disc})
    object.__setattr__(out, "im_evaluator", RadialIntegrator(out, disc))
    return out


def solve_theta0(fom, i, rel_tol=1e-12):
    """Coefficients o_i of theta~(0)_i from the nu = 0 regularised problem."""
    if not fom.supports_assembly:
        raise UnsupportedForIngestedModel("theta0 solve needs the generating discretisation")
    key = ("o", i, rel_tol)
    if key in fom._cache:
        return fom._cache[key]
    disc = fom._cache["radial"]
    n = disc.mesh.n_dofs
    rhs = np.zeros(fom.n_dofs)
    rhs[i * n:(i + 1) * n] = disc.rhs0
    # one sparse LU of the single real block; the magnetostatic system is too
    # ill-conditioned at fine resolution for CG to reach rel_tol reliably
    block = (disc.k + fom.epsilon * disc.m_ext).tocsc()
    o = np.zeros(fom.n_dofs)
    o[i * n:(i + 1) * n] = spla.splu(block).solve(disc.rhs0)
    res = np.linalg.norm((fom.K + fom.epsilon * fom.M) @ o - rhs) / np.linalg.norm(rhs)
    if res > rel_tol:
        raise NonConvergence(1, res, f"theta0 solve residual {res:.2e} exceeds {rel_tol:.1e}")
    fom._cache[key] = o
    return o


def assemble_source(fom, i, omega):
    """r_i[omega] = i omega (C o_i + t_i)."""
    return 1j * omega * fom.source_factor(i)


def solve_full_order(fom, i, omega, rel_tol=1e-8, max_iter=None, preconditioner="jacobi"):
    if not omega > 0:
        raise NonPositiveFrequency(f"omega must be positive, got {omega}")
    A = fom.system_matrix(omega)
    x, _ = cg_solve(A, assemble_source(fom, i, omega), rel_tol, max_iter, preconditioner)
    return x


# ingest / export ------------------------------------------------------------

def export_fom(fom, directory):
    """Write matrices, vectors and a JSON manifest; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mats = {"K": fom.K, "C": fom.C, "M": fom.M}
    if not fom.shared_basis:
        mats["C1"] = fom.C1
        mats["C2"] = fom.C2
    if fom.S is not None:
        mats["S"] = fom.S
    manifest = {"n_dofs": fom.n_dofs, "matrices": {}, "vectors": {}}
    for name, A in mats.items():
        mmio.write_sparse(d / f"{name}.mtx", A, symmetric=name != "C2")
        manifest["matrices"][name] = f"{name}.mtx"
    names = ["o", "s"] + ([] if fom.shared_basis else ["t"])
    for nm in names:
        arr = getattr(fom, nm)
        for i in range(3):
            fname = f"{nm}{i + 1}.mtx"
            mmio.write_array(d / fname, arr[i])
            manifest["vectors"][f"{nm}{i + 1}"] = fname
    manifest["c_ij"] = [float(x) for x in np.asarray(fom.c).ravel()]
    manifest["materials"] = fom.materials.to_dict()
    manifest["volume_B_alpha"] = float(fom.volume_B_alpha)
    manifest["shared_basis"] = bool(fom.shared_basis)
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _check_symmetric(name, A):
    defect, i, j = symmetry_defect(A)
    scale = abs(A).max() if A.nnz else 0.0
    if defect > 1e-12 * scale:
        raise SymmetryViolation(i, j, defect, name)


def _check_psd(name, A, rng):
    scale = abs(A).max() if A.nnz else 0.0
    for _ in range(16):
        x = rng.standard_normal(A.shape[0])
        rq = float(np.real(x @ (A @ x))) / float(x @ x)
        if rq < -1e-10 * scale:
            raise NotPositiveSemidefinite(f"{name}: Rayleigh quotient {rq:.3e} < 0")


def load_fom_from_files(manifest_path):
    """Build a validated FullOrderModel from a JSON manifest."""
    manifest_path = Path(manifest_path)
    try:
        man = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(manifest_path, 0, str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ParseError(manifest_path, exc.lineno, exc.msg) from None
    base = manifest_path.parent

    def need(obj, key, where):
        if key not in obj:
            raise ParseError(manifest_path, 0, f"missing key {where}{key!r}")
        return obj[key]

    n = int(need(man, "n_dofs", ""))
    mats = need(man, "matrices", "")
    vecs = need(man, "vectors", "")
    shared = bool(man.get("shared_basis", False))

    def load_mat(key):
        A = mmio.read(base / mats[key])
        if not sp.issparse(A):
            A = sp.csr_matrix(A)
        if A.shape != (n, n):
            raise DimensionMismatch(f"{key}: shape {A.shape} != ({n}, {n})")
        return A.tocsr()

    K, C, M = (load_mat(k) for k in ("K", "C", "M"))
    C1 = load_mat("C1") if "C1" in mats else None
    C2 = load_mat("C2") if "C2" in mats else None
    S = load_mat("S") if "S" in mats else None

    def load_vecs(prefix, required=True):
        if not all(f"{prefix}{i}" in vecs for i in (1, 2, 3)):
            if required:
                raise ParseError(manifest_path, 0, f"missing vectors {prefix}1..{prefix}3")
            return None
        out = []
        for i in (1, 2, 3):
            v = mmio.read_vector(base / vecs[f"{prefix}{i}"])
            if v.shape != (n,):
                raise DimensionMismatch(f"{prefix}{i}: length {v.shape[0]} != {n}")
            out.append(np.real(v) if not np.any(np.imag(v)) else v)
        return np.stack(out)

    o = load_vecs("o")
    s = load_vecs("s")
    t = load_vecs("t", required=not shared)
    if t is None:
        t = s
    if shared:
        C1 = C if C1 is None else C1
        C2 = C if C2 is None else C2
    if C1 is None or C2 is None:
        raise ParseError(manifest_path, 0, "C1 and C2 are required unless shared_basis is true")

    c = np.asarray(need(man, "c_ij", ""), dtype=float)
    if c.shape != (9,):
        raise DimensionMismatch("c_ij must hold 9 values")
    mat = need(man, "materials", "")
    materials = MaterialParams(
        alpha=float(mat["alpha"]),
        sigma_star=float(mat["sigma_star"]),
        mu_r=float(mat["mu_r"]),
        epsilon=float(mat.get("epsilon", 1e-10)),
    )

    for name, A in (("K", K), ("C", C), ("M", M), ("C1", C1)) + ((("S", S),) if S is not None else ()):
        _check_symmetric(name, A)
    rng = np.random.default_rng(0)
    for name, A in (("C", C), ("M", M)) + ((("S", S),) if S is not None else ()):
        _check_psd(name, A, rng)

    return FullOrderModel(
        K=K, C=C, M=M, C1=C1, C2=C2, o=o, s=s, t=t, c=c.reshape(3, 3),
        materials=materials,
        volume_B_alpha=float(need(man, "volume_B_alpha", "")),
        shared_basis=shared,
        S=S,
        metadata={"source": "manifest", "manifest": str(manifest_path), "sources": man.get("sources")},
    )
