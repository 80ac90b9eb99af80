"""1D hp finite elements for the radially reduced sphere problem.

A field of the form ``theta(xi) = g(r) (e_k x xi_hat)`` is a divergence-free
l = 1 toroidal field. Substituting it into the curl-curl forms and integrating
over the unit sphere of directions gives

    k(u, v) = int mu~^-1 [ (8pi/3)(u' r + u)(v' r + v) + (16pi/3) u v ] dr
    c(u, v) = nu~ (8pi/3) int_0^1 u v r^2 dr
    m(u, v) = (8pi/3) int_1^R u v r^2 dr

Fields for different k are orthogonal in all three forms, so the 3D Galerkin
system on span{phi_n(r) (e_k x xi_hat)} is block diagonal with three identical
blocks.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

FOUR_PI_3 = 4.0 * np.pi / 3.0
EIGHT_PI_3 = 8.0 * np.pi / 3.0
SIXTEEN_PI_3 = 16.0 * np.pi / 3.0


def gll_nodes(p):
    """Gauss-Lobatto-Legendre nodes on [-1, 1] for order p."""
    if p == 1:
        return np.array([-1.0, 1.0])
    inner = legendre.legroots(legendre.legder([0] * p + [1]))
    return np.concatenate(([-1.0], np.sort(inner.real), [1.0]))


class LagrangeBasis:
    """Nodal basis of order p on the reference element [-1, 1]."""

    def __init__(self, p):
        self.p = p
        self.nodes = gll_nodes(p)
        V = legendre.legvander(self.nodes, p)
        self._coef = np.linalg.inv(V)  # column k: Legendre coefficients of phi_k

    def eval(self, x):
        """Values and derivatives, each shaped (len(x), p+1)."""
        x = np.asarray(x, dtype=float)
        V = legendre.legvander(x, self.p)
        dV = np.stack(
            [legendre.legval(x, legendre.legder(np.eye(self.p + 1)[j])) for j in range(self.p + 1)],
            axis=1,
        )
        return V @ self._coef, dV @ self._coef


@dataclass(frozen=True)
class RadialMesh:
    """Element vertices on [0, R] with the conductor occupying [0, 1]."""

    vertices: np.ndarray
    p: int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v[0] != 0.0 or np.any(np.diff(v) <= 0):
            raise ValueError("vertices must start at 0 and increase strictly")
        if not np.any(np.isclose(v, 1.0, rtol=0, atol=1e-14)):
            raise ValueError("r = 1 must be a mesh vertex")

    @property
    def n_elements(self):
        return len(self.vertices) - 1

    @property
    def outer_radius(self):
        return float(self.vertices[-1])

    @property
    def n_dofs(self):
        # continuous nodal dofs minus the two Dirichlet ends
        return self.n_elements * self.p - 1

    def element_is_conductor(self):
        mid = 0.5 * (self.vertices[:-1] + self.vertices[1:])
        return mid < 1.0

    def element_dofs(self, e):
        """Global dof indices of element e's local nodes; -1 marks a Dirichlet node."""
        idx = e * self.p + np.arange(self.p + 1) - 1
        last = self.n_elements * self.p - 1
        idx[(idx < 0) | (idx >= last)] = -1
        return idx

    def surface_dof(self):
        e = int(np.argmin(np.abs(self.vertices - 1.0)))
        return e * self.p - 1


@dataclass
class RadialDiscretisation:
    """Assembled per-direction radial operators for one mesh and material set."""

    mesh: RadialMesh
    mu_r: float
    nu_tilde: float
    k: sp.csr_matrix = field(init=False)
    c: sp.csr_matrix = field(init=False)
    m_ext: sp.csr_matrix = field(init=False)
    m_full: sp.csr_matrix = field(init=False)
    t: np.ndarray = field(init=False)
    rhs0: np.ndarray = field(init=False)

    def __post_init__(self):
        self.basis = LagrangeBasis(self.mesh.p)
        self._assemble()

    def _quadrature(self, npts):
        xq, wq = legendre.leggauss(npts)
        phi, dphi = self.basis.eval(xq)
        return xq, wq, phi, dphi

    def _assemble(self):
        mesh, p = self.mesh, self.mesh.p
        n = mesh.n_dofs
        xq, wq, phi, dphi = self._quadrature(p + 2)
        inside = mesh.element_is_conductor()
        rows, cols = [], []
        vk, vc, vme, vmf = [], [], [], []
        t = np.zeros(n)
        rhs0 = np.zeros(n)
        for e in range(mesh.n_elements):
            a, b = mesh.vertices[e], mesh.vertices[e + 1]
            h = b - a
            r = a + 0.5 * h * (xq + 1.0)
            w = 0.5 * h * wq
            g = phi  # (nq, p+1)
            dg = dphi * (2.0 / h)
            mu_inv = 1.0 / self.mu_r if inside[e] else 1.0
            flux = dg * r[:, None] + g  # g' r + g
            ke = mu_inv * (
                EIGHT_PI_3 * flux.T @ (w[:, None] * flux) + SIXTEEN_PI_3 * g.T @ (w[:, None] * g)
            )
            mass = EIGHT_PI_3 * g.T @ ((w * r * r)[:, None] * g)
            ce = self.nu_tilde * mass if inside[e] else np.zeros_like(mass)
            mee = np.zeros_like(mass) if inside[e] else mass
            dofs = mesh.element_dofs(e)
            live = dofs >= 0
            ld = dofs[live]
            sub = np.ix_(live, live)
            rr, cc = np.meshgrid(ld, ld, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vk.append(ke[sub].ravel())
            vc.append(ce[sub].ravel())
            vme.append(mee[sub].ravel())
            vmf.append(mass[sub].ravel())
            if inside[e]:
                # (e_i x xi) is g = r in the toroidal ansatz
                te = self.nu_tilde * EIGHT_PI_3 * g.T @ (w * r ** 3)
                t[ld] += te[live]
            # -2 int mu~^-1 e_i . curl w  ->  -(16pi/3) int mu~^-1 (r^2 v)' dr
            d_r2v = 2.0 * r[:, None] * g + (r * r)[:, None] * dg
            r0e = -SIXTEEN_PI_3 * mu_inv * d_r2v.T @ w
            rhs0[ld] += r0e[live]
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)

        def build(vals):
            M = sp.coo_matrix((np.concatenate(vals), (rows, cols)), shape=(n, n)).tocsr()
            M.sum_duplicates()
            M.eliminate_zeros()
            # exact symmetry: average with transpose
            return ((M + M.T) * 0.5).tocsr()

        self.k = build(vk)
        self.c = build(vc)
        self.m_ext = build(vme)
        self.m_full = build(vmf)
        self.t = t
        self.rhs0 = rhs0

    @property
    def c_scalar(self):
        """int_B nu~ |e_i x xi|^2 = nu~ 8pi/15."""
        return self.nu_tilde * 8.0 * np.pi / 15.0

    # field reconstruction for quadrature post-processing ------------------

    def radial_points(self, extra=3):
        """Gauss points per element with weights, element ids and conductor flags."""
        mesh = self.mesh
        xq, wq = legendre.leggauss(mesh.p + extra)
        phi, dphi = self.basis.eval(xq)
        inside = mesh.element_is_conductor()
        R, W, P, DP, IDX, IN = [], [], [], [], [], []
        for e in range(mesh.n_elements):
            a, b = mesh.vertices[e], mesh.vertices[e + 1]
            h = b - a
            R.append(a + 0.5 * h * (xq + 1.0))
            W.append(0.5 * h * wq)
            P.append(phi)
            DP.append(dphi * (2.0 / h))
            IDX.append(np.tile(mesh.element_dofs(e), (len(xq), 1)))
            IN.append(np.full(len(xq), inside[e]))
        r = np.concatenate(R)
        w = np.concatenate(W)
        phi = np.concatenate(P)
        dphi = np.concatenate(DP)
        idx = np.concatenate(IDX)
        inside = np.concatenate(IN)
        # sparse evaluation operators: g(r_q) = E @ coeffs, g'(r_q) = D @ coeffs
        nq = len(r)
        live = idx >= 0
        qi = np.repeat(np.arange(nq), phi.shape[1]).reshape(phi.shape)
        E = sp.csr_matrix((phi[live], (qi[live], idx[live])), shape=(nq, self.mesh.n_dofs))
        D = sp.csr_matrix((dphi[live], (qi[live], idx[live])), shape=(nq, self.mesh.n_dofs))
        return r, w, inside, E, D


def sphere_quadrature(n_theta=4, n_phi=8):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), trapezoid in phi.

    Exact for polynomials in the direction components of total degree
    < min(2 n_theta, n_phi). Returns (directions (n, 3), weights summing to 4 pi).
    """
    ct, wt = legendre.leggauss(n_theta)
    ph = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - ct ** 2)
    dirs = np.stack(
        [
            np.outer(st, np.cos(ph)).ravel(),
            np.outer(st, np.sin(ph)).ravel(),
            np.outer(ct, np.ones(n_phi)).ravel(),
        ],
        axis=1,
    )
    weights = np.outer(wt, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return dirs, weights
