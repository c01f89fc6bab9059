"""Clamped 1D rod: finite-element spaces, static slaves and bending operators.

The transverse deflections live in cubic Hermite elements (conforming for the
fourth-order bending terms, clamped value and slope at both ends); the axial
and torsion fields are static slaves of the deflections.  Because the first
and fourth limit equations force the axial force N to be constant and the
torque rate to equal the source, the static solve treats (N0, T0) as two
scalar unknowns fixed by the clamped mean conditions int u' = int w' = 0 and
reconstructs u, w by quadrature; N is constant to machine precision and the
weak P2 residual of the solution vanishes identically.

The bending residual assembled here is the exact gradient of the semidiscrete
elastic energy (with u, w eliminated), evaluated with the same 4-point Gauss
rule, so finite differences of the energy reproduce it to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cell import EffectiveStiffness
from .errors import MeshError, SolverError

# 4-point Gauss-Legendre on [0, 1]: exact through degree 7, which covers every
# assembled product (the worst is v'^2 * u-test' of degree 7).
_GPTS, _GWTS = np.polynomial.legendre.leggauss(4)
_GPTS = 0.5 * (_GPTS + 1.0)
_GWTS = 0.5 * _GWTS


@dataclass(frozen=True)
class RodMesh1D:
    L: float
    n_elem: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.L <= 0:
            raise MeshError(f"rod length must be positive, got {self.L}")
        if self.n_elem < 2:
            raise MeshError(f"n_elem must be >= 2, got {self.n_elem}")
        object.__setattr__(self, "nodes", np.linspace(0.0, self.L, self.n_elem + 1))

    @property
    def dx(self) -> float:
        return self.L / self.n_elem


def _locate(mesh: RodMesh1D, x):
    x = np.asarray(x, dtype=float)
    e = np.clip((x / mesh.dx).astype(int), 0, mesh.n_elem - 1)
    s = (x - mesh.nodes[e]) / mesh.dx
    return e, s


class HermiteSpace:
    """Clamped cubic Hermite space: (value, slope) dofs at interior nodes."""

    def __init__(self, mesh: RodMesh1D):
        self.mesh = mesh
        self.dim = 2 * (mesh.n_elem - 1)

    def _shapes(self, s, deriv):
        dx = self.mesh.dx
        one = np.ones_like(s)
        if deriv == 0:
            return np.stack(
                [1 - 3 * s**2 + 2 * s**3, dx * (s - 2 * s**2 + s**3),
                 3 * s**2 - 2 * s**3, dx * (s**3 - s**2)], axis=-1)
        if deriv == 1:
            return np.stack(
                [(-6 * s + 6 * s**2) / dx, one - 4 * s + 3 * s**2,
                 (6 * s - 6 * s**2) / dx, 3 * s**2 - 2 * s], axis=-1)
        if deriv == 2:
            return np.stack(
                [(-6 + 12 * s) / dx**2, (-4 + 6 * s) / dx,
                 (6 - 12 * s) / dx**2, (6 * s - 2) / dx], axis=-1)
        raise ValueError(f"deriv must be 0, 1 or 2, got {deriv}")

    def eval_matrix(self, x, deriv: int = 0) -> np.ndarray:
        """Rows map coefficients to the deriv-th derivative at the points x."""
        e, s = _locate(self.mesh, x)
        H = self._shapes(s, deriv)
        out = np.zeros((len(np.atleast_1d(x)), self.dim))
        # local dofs: (value, slope) at the element's left and right node;
        # boundary nodes are clamped and carry no dof.
        for k, node in enumerate((e, e + 1)):
            interior = (node >= 1) & (node <= self.mesh.n_elem - 1)
            idx = 2 * (node - 1)
            rows = np.nonzero(interior)[0]
            out[rows, idx[interior]] += H[rows, 2 * k]
            out[rows, idx[interior] + 1] += H[rows, 2 * k + 1]
        return out

    def interpolate(self, value, slope) -> np.ndarray:
        """Hermite interpolant from value/slope callables (clamped ends)."""
        xi = self.mesh.nodes[1:-1]
        c = np.empty(self.dim)
        c[0::2] = np.asarray(value(xi), dtype=float)
        c[1::2] = np.asarray(slope(xi), dtype=float)
        return c


class P2Space:
    """Clamped quadratic Lagrange space (interior vertex + midpoint dofs)."""

    def __init__(self, mesh: RodMesh1D):
        self.mesh = mesh
        n = mesh.n_elem
        self.dim = 2 * n - 1
        mids = mesh.nodes[:-1] + 0.5 * mesh.dx
        # All P2 nodes in order, boundary vertices included (clamped to 0).
        self.nodes_all = np.sort(np.concatenate([mesh.nodes, mids]))

    def _dof(self, vertex=None, midpoint=None):
        if vertex is not None:
            return vertex - 1
        return (self.mesh.n_elem - 1) + midpoint

    def eval_matrix(self, x, deriv: int = 0) -> np.ndarray:
        e, s = _locate(self.mesh, x)
        dx = self.mesh.dx
        if deriv == 0:
            sh = np.stack([(1 - s) * (1 - 2 * s), 4 * s * (1 - s), s * (2 * s - 1)], axis=-1)
        elif deriv == 1:
            sh = np.stack([(4 * s - 3) / dx, (4 - 8 * s) / dx, (4 * s - 1) / dx], axis=-1)
        else:
            raise ValueError("P2 supports deriv 0 or 1")
        out = np.zeros((len(np.atleast_1d(x)), self.dim))
        rows = np.arange(out.shape[0])
        left_ok = e >= 1
        out[rows[left_ok], e[left_ok] - 1] += sh[left_ok, 0]
        out[rows, (self.mesh.n_elem - 1) + e] += sh[:, 1]
        right_ok = e + 1 <= self.mesh.n_elem - 1
        out[rows[right_ok], e[right_ok]] += sh[right_ok, 2]
        return out

    def values_at_nodes(self, coeffs) -> np.ndarray:
        """Values on nodes_all (zeros prepended/appended at the clamped ends)."""
        return self.eval_matrix(self.nodes_all) @ coeffs

    def interpolate(self, values_on_nodes) -> np.ndarray:
        """Coefficients from values on nodes_all (clamped ends dropped)."""
        values_on_nodes = np.asarray(values_on_nodes, dtype=float)
        n = self.mesh.n_elem
        c = np.empty(self.dim)
        c[: n - 1] = values_on_nodes[2:-1:2]      # interior vertices
        c[n - 1 :] = values_on_nodes[1::2]        # element midpoints
        return c


@dataclass
class RodSpaces:
    mesh: RodMesh1D
    hermite: HermiteSpace
    p2: P2Space
    xq: np.ndarray      # all Gauss points, element-major, shape (4 n,)
    wq: np.ndarray

    @property
    def L(self) -> float:
        return self.mesh.L


def build_spaces(L: float, n_elem: int) -> RodSpaces:
    mesh = RodMesh1D(L, n_elem)
    xq = (mesh.nodes[:-1, None] + mesh.dx * _GPTS[None, :]).ravel()
    wq = np.tile(mesh.dx * _GWTS, mesh.n_elem)
    return RodSpaces(mesh=mesh, hermite=HermiteSpace(mesh), p2=P2Space(mesh), xq=xq, wq=wq)


def gauss_integrate_to(mesh: RodMesh1D, f, points) -> np.ndarray:
    """Antiderivative int_0^p f at each requested point (4-pt Gauss segments).

    Segments never straddle element boundaries, so the result is exact for
    per-element polynomials up to degree 7.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    cuts = np.unique(np.concatenate([mesh.nodes, points]))
    a, b = cuts[:-1], cuts[1:]
    xg = a[:, None] + (b - a)[:, None] * _GPTS[None, :]
    seg = ((b - a)[:, None] * _GWTS[None, :] * np.asarray(f(xg.ravel())).reshape(xg.shape)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return cum[np.searchsorted(cuts, points)]


class TransverseFields:
    """Evaluators (value, slope, curvature) for the pair (v2, v3).

    Either Hermite coefficient vectors or analytic callables; callables allow
    exact quadrature of fields that are not representable in the FE space.
    """

    def __init__(self, v2, v2p, v2pp, v3, v3p, v3pp):
        self.v2, self.v2p, self.v2pp = v2, v2p, v2pp
        self.v3, self.v3p, self.v3pp = v3, v3p, v3pp

    @classmethod
    def from_coeffs(cls, space: HermiteSpace, c2, c3) -> "TransverseFields":
        c2 = np.zeros(space.dim) if c2 is None else np.asarray(c2, dtype=float)
        c3 = np.zeros(space.dim) if c3 is None else np.asarray(c3, dtype=float)

        def make(c, d):
            return lambda x: space.eval_matrix(np.atleast_1d(x), d) @ c

        return cls(make(c2, 0), make(c2, 1), make(c2, 2), make(c3, 0), make(c3, 1), make(c3, 2))

    @classmethod
    def from_callables(cls, v2=None, v2p=None, v2pp=None, v3=None, v3p=None, v3pp=None):
        zero = lambda x: np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
        args = [f if f is not None else zero for f in (v2, v2p, v2pp, v3, v3p, v3pp)]
        return cls(*args)


@dataclass
class RodState:
    """1D coefficient set: Hermite deflections/velocities, P2 axial/torsion."""

    v2: np.ndarray
    v3: np.ndarray
    vel2: np.ndarray
    vel3: np.ndarray
    u: np.ndarray | None = None   # interior P2 nodal values (static slave)
    w: np.ndarray | None = None

    @classmethod
    def zeros(cls, spaces: RodSpaces) -> "RodState":
        d, dp = spaces.hermite.dim, spaces.p2.dim
        return cls(np.zeros(d), np.zeros(d), np.zeros(d), np.zeros(d), np.zeros(dp), np.zeros(dp))


@dataclass
class StaticSolution:
    """Axial/torsion slaves for given transverse fields.

    N is spatially constant by construction; T(x) = T0 + int_0^x sigma.
    """

    N: float
    T0: float
    r: np.ndarray        # at the Gauss points
    tau: np.ndarray
    s: np.ndarray        # int_0^x sigma at the Gauss points
    u: np.ndarray        # P2 coefficients (interpolant of the exact slave)
    w: np.ndarray

    def T(self) -> np.ndarray:
        return self.T0 + self.s


def _field_values(f, x):
    """Evaluate None | scalar | callable | pre-sampled array on points x."""
    x = np.atleast_1d(x)
    if f is None:
        return np.zeros_like(x)
    if callable(f):
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full_like(x, float(arr))
    if arr.shape != x.shape:
        raise SolverError(f"sampled field has shape {arr.shape}, expected {x.shape}")
    return arr


class RodProblem:
    """Bending operators for one rod/effective-stiffness pair."""

    def __init__(self, spaces: RodSpaces, stiffness: EffectiveStiffness | np.ndarray):
        self.spaces = spaces
        self.Q = np.asarray(stiffness.Q if hasattr(stiffness, "Q") else stiffness, dtype=float)
        if self.Q.shape != (4, 4):
            raise SolverError("effective stiffness must be 4x4")
        self.M2 = self.Q[np.ix_([0, 3], [0, 3])]
        if np.linalg.det(self.M2) <= 0:
            raise SolverError("stretch/twist stiffness block is singular")
        self.M2inv = np.linalg.inv(self.M2)
        self.Cm = self.Q[np.ix_([0, 3], [1, 2])]       # (r,tau) rows, kappa columns
        Qb = self.Q[np.ix_([1, 2], [1, 2])]
        Qc = self.Q[np.ix_([1, 2], [0, 3])]
        self.S_bend = Qb - Qc @ self.M2inv @ self.Cm   # condensed bending block

        h = spaces.hermite
        self.B0 = h.eval_matrix(spaces.xq, 0)
        self.B1 = h.eval_matrix(spaces.xq, 1)
        self.B2 = h.eval_matrix(spaces.xq, 2)
        self.mass1 = self.B0.T @ (spaces.wq[:, None] * self.B0)
        self._geo = self.B1.T @ (spaces.wq[:, None] * self.B1)

    # -- static slaves -------------------------------------------------------

    def _static_core(self, v2p, v2pp, v3p, v3pp, s):
        """(N0, T0, r, tau) at the Gauss points from strain samples there."""
        wq, L = self.spaces.wq, self.spaces.L
        g = 0.5 * (v2p**2 + v3p**2)
        c = self.Cm @ np.vstack([v2pp, v3pp])          # rows: (r-eq, tau-eq)
        rhs = np.array([(wq * c[0]).sum(), (wq * (c[1] - s)).sum()])
        rhs += self.M2 @ np.array([(wq * g).sum(), 0.0])
        N0, T0 = rhs / L
        rt = self.M2inv @ (np.vstack([np.full_like(s, N0), T0 + s]) - c)
        return float(N0), float(T0), rt[0], rt[1]

    def solve_static(self, fields: TransverseFields, sigma=None) -> StaticSolution:
        """Solve the axial and torsion equations for given transverse fields.

        sigma is the torsion source (None, scalar or callable of x).
        """
        sp = self.spaces
        xq = sp.xq
        v2p, v2pp = fields.v2p(xq), fields.v2pp(xq)
        v3p, v3pp = fields.v3p(xq), fields.v3pp(xq)
        s = gauss_integrate_to(sp.mesh, lambda x: _field_values(sigma, x), xq) if sigma is not None else np.zeros_like(xq)
        N0, T0, r, tau = self._static_core(v2p, v2pp, v3p, v3pp, s)

        def u_prime(x):
            v2px, v3px = fields.v2p(x), fields.v3p(x)
            cx = self.Cm @ np.vstack([fields.v2pp(x), fields.v3pp(x)])
            sx = gauss_integrate_to(sp.mesh, lambda y: _field_values(sigma, y), x) if sigma is not None else 0.0
            rx = self.M2inv[0, 0] * (N0 - cx[0]) + self.M2inv[0, 1] * (T0 + sx - cx[1])
            return rx - 0.5 * (v2px**2 + v3px**2)

        def w_prime(x):
            cx = self.Cm @ np.vstack([fields.v2pp(x), fields.v3pp(x)])
            sx = gauss_integrate_to(sp.mesh, lambda y: _field_values(sigma, y), x) if sigma is not None else 0.0
            return self.M2inv[1, 0] * (N0 - cx[0]) + self.M2inv[1, 1] * (T0 + sx - cx[1])

        u_vals = gauss_integrate_to(sp.mesh, u_prime, sp.p2.nodes_all)
        w_vals = gauss_integrate_to(sp.mesh, w_prime, sp.p2.nodes_all)
        return StaticSolution(
            N=N0, T0=T0, r=r, tau=tau, s=s,
            u=sp.p2.interpolate(u_vals), w=sp.p2.interpolate(w_vals),
        )

    def static_weak_residual(self, sol: StaticSolution, sigma=None):
        """Residual of the two static equations against every P2 test function."""
        sp = self.spaces
        P1 = sp.p2.eval_matrix(sp.xq, 1)
        P0 = sp.p2.eval_matrix(sp.xq, 0)
        res_u = P1.T @ (sp.wq * np.full_like(sol.r, sol.N))
        res_w = P1.T @ (sp.wq * sol.T()) + P0.T @ (sp.wq * _field_values(sigma, sp.xq))
        return res_u, res_w

    # -- bending operators ----------------------------------------------------

    def _quad_fields(self, c2, c3):
        return self.B1 @ c2, self.B2 @ c2, self.B1 @ c3, self.B2 @ c3

    def generalized_strain(self, c2, c3, sigma=None):
        """eps = (r, kappa2, kappa3, tau) at the Gauss points for coefficients."""
        v2p, v2pp, v3p, v3pp = self._quad_fields(c2, c3)
        s = (
            gauss_integrate_to(self.spaces.mesh, lambda x: _field_values(sigma, x), self.spaces.xq)
            if sigma is not None
            else np.zeros_like(self.spaces.xq)
        )
        N0, T0, r, tau = self._static_core(v2p, v2pp, v3p, v3pp, s)
        return np.vstack([r, v2pp, v3pp, tau]), N0, T0

    def bending_residual(self, c2, c3, forcing_quad=(None, None), rho=(None, None), sigma=None):
        """Weak residual functional over the two Hermite test spaces.

        For each test function phi the assembled value is
        -(v_k' N + rho_k, phi') - ((Q eps)_k, phi'') + (f_k, phi).
        forcing_quad carries the f2, f3 samples at the Gauss points.
        """
        wq = self.spaces.wq
        eps, N0, _ = self.generalized_strain(c2, c3, sigma)
        qeps = self.Q @ eps
        v2p, v3p = self.B1 @ c2, self.B1 @ c3
        out = np.empty(2 * self.spaces.hermite.dim)
        d = self.spaces.hermite.dim
        rho2, rho3 = (_field_values(r, self.spaces.xq) for r in rho)
        f2, f3 = forcing_quad
        for k, (vp, rh, fk, row) in enumerate(((v2p, rho2, f2, 1), (v3p, rho3, f3, 2))):
            rk = -self.B1.T @ (wq * (N0 * vp + rh)) - self.B2.T @ (wq * qeps[row])
            if fk is not None:
                rk = rk + self.B0.T @ (wq * fk)
            out[k * d : (k + 1) * d] = rk
        return out

    def elastic_energy(self, c2, c3, sigma=None) -> float:
        eps, _, _ = self.generalized_strain(c2, c3, sigma)
        return 0.5 * float((self.spaces.wq * np.einsum("iq,ij,jq->q", eps, self.Q, eps)).sum())

    def kinetic_energy(self, p2, p3) -> float:
        return 0.5 * float(p2 @ self.mass1 @ p2 + p3 @ self.mass1 @ p3)

    def hessian(self, c2, c3, sigma=None) -> np.ndarray:
        """Exact tangent of -bending_residual (elastic Hessian).

        Consists of the condensed bending block, the geometric N-term and one
        rank-1 coupling through the constant axial force; the remaining global
        responses vanish because int phi'' = 0 on the clamped Hermite space.
        """
        wq = self.spaces.wq
        _, N0, _ = self.generalized_strain(c2, c3, sigma)
        d = self.spaces.hermite.dim
        H = np.zeros((2 * d, 2 * d))
        for a in range(2):
            for b in range(2):
                H[a * d : (a + 1) * d, b * d : (b + 1) * d] = self.S_bend[a, b] * (
                    self.B2.T @ (wq[:, None] * self.B2)
                )
        H[:d, :d] += N0 * self._geo
        H[d:, d:] += N0 * self._geo
        v2p, v3p = self.B1 @ c2, self.B1 @ c3
        a_vec = np.concatenate([self.B1.T @ (wq * v2p), self.B1.T @ (wq * v3p)])
        H += (self.Q[0, 0] / self.spaces.L) * np.outer(a_vec, a_vec)
        return H

    # -- linearized spectrum ---------------------------------------------------

    def linearized_modes(self, count: int, component: int | None = None):
        """Generalized eigenpairs of (bending stiffness, mass) around zero.

        component 2 or 3 restricts to one deflection (valid when the condensed
        bending block is diagonal); None solves the coupled pencil.
        """
        d = self.spaces.hermite.dim
        Kb = self.B2.T @ (self.spaces.wq[:, None] * self.B2)
        if component is None:
            K = np.kron(self.S_bend, Kb)
            M = np.kron(np.eye(2), self.mass1)
        else:
            i = component - 2
            K = self.S_bend[i, i] * Kb
            M = self.mass1
        if count > K.shape[0]:
            raise SolverError(f"requested {count} eigenvalues of a {K.shape[0]}-dim operator")
        vals, vecs = sla.eigh(K, M)
        return vals[:count], vecs[:, :count]

    def linearized_spectrum(self, count: int, component: int | None = None) -> np.ndarray:
        """Eigenvalues omega^2 of the linearized bending operator."""
        return self.linearized_modes(count, component)[0]

    def first_period(self) -> float:
        """Fundamental linearized period (timestep guidance)."""
        w2 = self.linearized_spectrum(1)[0]
        return 2.0 * np.pi / np.sqrt(w2)
