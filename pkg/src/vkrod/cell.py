"""Cross-section cell problem: correctors, effective stiffness, stress moments.

For a generalized strain eps = (r, kappa2, kappa3, tau) the in-plane relaxation
minimizes

    int_S Q( c(eps, x') | d2 psi | d3 psi ) dx'

over psi in the constrained space V = {int psi = 0, int psi . (0,-x3,x2) = 0},
where the loaded first column is c = (r - kappa2 x2 - kappa3 x3, -tau x3, tau x2).
Vector P1 elements with the four scalar constraints enforced by Lagrange
multipliers give a symmetric saddle system solved by a sparse direct
factorization shared across the four unit loads.

The minimum value q(eps) is a quadratic form; its matrix Q_eff (one half of the
Hessian) maps generalized strains to generalized forces with the convention

    E0_11 = (Q_eff eps)_1,   E2_11 = -(Q_eff eps)_2,
    E3_11 = -(Q_eff eps)_3,  E2_31 - E3_21 = (Q_eff eps)_4,

where E0, E2, E3 are the unweighted and x2-/x3-weighted section averages of the
stress E = L(strain).  The averaged stress E0 is diagonal up to solver
tolerance: all rows other than the axial one vanish at the minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .material import MaterialModel
from .mesh2d import CrossSectionMesh, GeometryReport

#: order of the generalized strain components
STRAIN_COMPONENTS = ("stretch", "curvature2", "curvature3", "twist")

UNIT_STRAINS = np.eye(4)


def strain_first_column(eps, x2, x3):
    """Loaded first column c(eps, x') at points (x2, x3); shapes broadcast."""
    r, k2, k3, tau = eps
    c = np.zeros(np.broadcast(x2, x3).shape + (3,))
    c[..., 0] = r - k2 * x2 - k3 * x3
    c[..., 1] = -tau * x3
    c[..., 2] = tau * x2
    return c


def _basis_strains(mesh: CrossSectionMesh):
    """Strain matrices of the 27 = 9 local P1 dofs per triangle: (m, 9, 3, 3).

    Local dof a = 3*node + comp contributes d2 phi_node in entry (comp, 1) and
    d3 phi_node in entry (comp, 2); the loaded first column stays zero.
    """
    g = mesh.p1_gradients()                      # (m, 3, 2)
    m = len(mesh.triangles)
    B = np.zeros((m, 9, 3, 3))
    for n in range(3):
        for c in range(3):
            a = 3 * n + c
            B[:, a, c, 1] = g[:, n, 0]
            B[:, a, c, 2] = g[:, n, 1]
    return B


def _load_columns(mesh: CrossSectionMesh):
    """First-column strain fields of the four unit loads at quad points.

    Returns (pts, w, C) with C of shape (4, m, q, 3, 3).
    """
    pts, w = mesh.quad_points()
    x2, x3 = pts[..., 0], pts[..., 1]
    C = np.zeros((4,) + x2.shape + (3, 3))
    for i in range(4):
        C[i, ..., :, 0] = strain_first_column(UNIT_STRAINS[i], x2, x3)
    return pts, w, C


@dataclass
class CellSystem:
    """Assembled saddle ingredients: Hessian 2K, four unit loads, constraints."""

    hessian: sp.csc_matrix      # 2K, symmetric positive semidefinite
    loads: np.ndarray           # (4, ndof): gradient at psi = 0 is loads[i]
    constraints: np.ndarray     # (4, ndof)
    ndof: int


def assemble_cell_system(mesh: CrossSectionMesh, material: MaterialModel) -> CellSystem:
    m = len(mesh.triangles)
    ndof = 3 * len(mesh.nodes)
    B = _basis_strains(mesh)
    LB = material.apply_L(B.reshape(-1, 3, 3)).reshape(m, 9, 3, 3)
    areas = mesh.areas

    k_loc = np.einsum("taij,tbij,t->tab", LB, B, areas)

    dofs = (3 * mesh.triangles[:, :, None] + np.arange(3)[None, None, :]).reshape(m, 9)
    rows = np.broadcast_to(dofs[:, :, None], (m, 9, 9)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (m, 9, 9)).ravel()
    # Hessian of J(psi) = psi^T K psi + 2 b^T psi is 2K.
    hess = sp.coo_matrix((2.0 * k_loc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsc()

    pts, w, C = _load_columns(mesh)
    LC = material.apply_L(C.reshape(-1, 3, 3)).reshape(C.shape)
    # b_i[a] = int L(C_i) : M_a; gradient at zero is 2 b_i.
    b_loc = np.einsum("ltqij,taij,tq->lta", LC, B, w)
    loads = np.zeros((4, ndof))
    for i in range(4):
        np.add.at(loads[i], dofs.ravel(), 2.0 * b_loc[i].ravel())

    # Constraint rows: three mean values and the in-plane rotation moment.
    phi_q = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])  # phi_node at midpoints
    x2, x3 = pts[..., 0], pts[..., 1]
    cons = np.zeros((4, ndof))
    int_phi = np.einsum("tq,qn->tn", w, phi_q)         # int phi_node per triangle
    for c in range(3):
        np.add.at(cons[c], dofs[:, c::3].ravel(), int_phi.ravel())
    mom2 = np.einsum("tq,tq,qn->tn", w, x2, phi_q)
    mom3 = np.einsum("tq,tq,qn->tn", w, x3, phi_q)
    np.add.at(cons[3], dofs[:, 1::3].ravel(), (-mom3).ravel())
    np.add.at(cons[3], dofs[:, 2::3].ravel(), mom2.ravel())

    return CellSystem(hessian=hess, loads=loads, constraints=cons, ndof=ndof)


@dataclass
class CorrectorBasis:
    """Minimizers for the four unit generalized strains.

    psi[i] has shape (n_nodes, 3); multipliers[i] are the four Lagrange
    multipliers of solve i (all ~0 on normalized meshes, where the quotiented
    rigid directions are orthogonal to the loads).
    """

    psi: np.ndarray
    multipliers: np.ndarray
    el_residual: float          # max weak Euler-Lagrange residual, relative
    constraint_residual: float  # max constraint violation

    def combine(self, eps) -> np.ndarray:
        """Corrector for an arbitrary eps (the minimizer is linear in eps)."""
        return np.einsum("i,inc->nc", np.asarray(eps, dtype=float), self.psi)


def solve_correctors(mesh: CrossSectionMesh, material: MaterialModel) -> CorrectorBasis:
    if not mesh.is_connected():
        raise SolverError("cross-section mesh is not connected")
    sys = assemble_cell_system(mesh, material)
    n, nc = sys.ndof, 4
    C = sp.csr_matrix(sys.constraints)
    saddle = sp.bmat([[sys.hessian, C.T], [C, None]], format="csc")
    try:
        lu = spla.splu(saddle)
    except RuntimeError as e:
        raise SolverError(f"singular saddle system: {e}") from e

    psi = np.zeros((4, len(mesh.nodes), 3))
    lam = np.zeros((4, nc))
    el_res = 0.0
    con_res = 0.0
    for i in range(4):
        rhs = np.concatenate([-sys.loads[i], np.zeros(nc)])
        sol = lu.solve(rhs)
        x, lam[i] = sol[:n], sol[n:]
        grad = sys.hessian @ x + sys.loads[i] + sys.constraints.T @ lam[i]
        scale = max(np.abs(sys.loads[i]).max(), 1.0)
        el_res = max(el_res, np.abs(grad).max() / scale)
        con_res = max(con_res, np.abs(sys.constraints @ x).max())
        psi[i] = x.reshape(-1, 3)
    return CorrectorBasis(psi=psi, multipliers=lam, el_residual=el_res, constraint_residual=con_res)


def _gradient_strain(mesh: CrossSectionMesh, psi_values: np.ndarray) -> np.ndarray:
    """(0 | d2 psi | d3 psi) per triangle for nodal values psi_values (n, 3)."""
    g = mesh.p1_gradients()
    vals = psi_values[mesh.triangles]           # (m, 3, 3comp)
    S = np.zeros((len(mesh.triangles), 3, 3))
    S[:, :, 1] = np.einsum("tnc,tn->tc", vals, g[:, :, 0])
    S[:, :, 2] = np.einsum("tnc,tn->tc", vals, g[:, :, 1])
    return S


def cell_strain(mesh: CrossSectionMesh, eps, psi_values: np.ndarray) -> np.ndarray:
    """Full strain (c(eps) | d2 psi | d3 psi) at the quad points: (m, q, 3, 3)."""
    pts, _ = mesh.quad_points()
    S = np.zeros(pts.shape[:2] + (3, 3))
    S[..., :, 0] = strain_first_column(eps, pts[..., 0], pts[..., 1])
    S += _gradient_strain(mesh, psi_values)[:, None]
    return S


def cell_energy(mesh: CrossSectionMesh, material: MaterialModel, eps, psi_values: np.ndarray) -> float:
    """Direct quadrature of int_S Q(strain); equals eps.Q_eff.eps at the minimizer."""
    _, w = mesh.quad_points()
    S = cell_strain(mesh, eps, psi_values)
    return float((material.quadratic_form(S) * w).sum())


@dataclass
class EffectiveStiffness:
    """Symmetric positive definite 4x4 stiffness over (r, kappa2, kappa3, tau)."""

    Q: np.ndarray
    geometry: GeometryReport
    el_residual: float
    constraint_residual: float
    correctors: CorrectorBasis = field(repr=False)

    def force(self, eps) -> np.ndarray:
        """Generalized force (axial force, -bending moments, torque row)."""
        return self.Q @ np.asarray(eps, dtype=float)

    @property
    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.Q).min())

    def as_dict(self):
        return {
            "Q_eff": [[float(x) for x in row] for row in self.Q],
            "components": list(STRAIN_COMPONENTS),
            "geometry": self.geometry.as_dict(),
            "el_residual": self.el_residual,
            "constraint_residual": self.constraint_residual,
            "smallest_eigenvalue": self.smallest_eigenvalue,
        }


def effective_stiffness(
    mesh: CrossSectionMesh,
    material: MaterialModel,
    correctors: CorrectorBasis | None = None,
) -> EffectiveStiffness:
    if correctors is None:
        correctors = solve_correctors(mesh, material)
    _, w = mesh.quad_points()
    S = np.stack([cell_strain(mesh, UNIT_STRAINS[i], correctors.psi[i]) for i in range(4)])
    LS = material.apply_L(S.reshape(-1, 3, 3)).reshape(S.shape)
    # Polarization identity: Q_ij = int L(S_i) : S_j; symmetric up to roundoff.
    Q = np.einsum("ltqab,jtqab,tq->lj", LS, S, w, optimize=True)
    Q = 0.5 * (Q + Q.T)
    return EffectiveStiffness(
        Q=Q,
        geometry=mesh.moments(),
        el_residual=correctors.el_residual,
        constraint_residual=correctors.constraint_residual,
        correctors=correctors,
    )


@dataclass
class StressMoments:
    """Per-element stress (at centroids) and its section moments."""

    element_stress: np.ndarray  # (m, 3, 3), affine stress sampled at centroids
    moment0: np.ndarray         # int_S E
    moment2: np.ndarray         # int_S E x2
    moment3: np.ndarray         # int_S E x3


def stress_and_moments(
    mesh: CrossSectionMesh,
    material: MaterialModel,
    eps,
    correctors: CorrectorBasis,
) -> StressMoments:
    eps = np.asarray(eps, dtype=float)
    if correctors.psi.shape[1] != len(mesh.nodes):
        raise SolverError("corrector basis does not match the mesh")
    alpha = correctors.combine(eps)
    pts, w = mesh.quad_points()
    S = cell_strain(mesh, eps, alpha)
    E = material.apply_L(S.reshape(-1, 3, 3)).reshape(S.shape)
    x2, x3 = pts[..., 0], pts[..., 1]
    return StressMoments(
        element_stress=E.mean(axis=1),
        moment0=np.einsum("tqij,tq->ij", E, w),
        moment2=np.einsum("tqij,tq->ij", E, w * x2),
        moment3=np.einsum("tqij,tq->ij", E, w * x3),
    )
