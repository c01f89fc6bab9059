import math

import numpy as np
import pytest

from vkrod.errors import MeshError, SolverError
from vkrod.rod1d import (
    RodProblem,
    TransverseFields,
    build_spaces,
    gauss_integrate_to,
)

# clamped-clamped Euler-Bernoulli: first root of cos(bL) cosh(bL) = 1
BETA1_L = 4.730040744862704


@pytest.fixture(scope="module")
def spaces32():
    return build_spaces(1.0, 32)


@pytest.fixture(scope="module")
def problem32(spaces32, disk16_stiffness):
    return RodProblem(spaces32, disk16_stiffness)


def quartic_bump_fields():
    return TransverseFields.from_callables(
        v2=lambda x: x**2 * (1 - x) ** 2,
        v2p=lambda x: 2 * x * (1 - x) ** 2 - 2 * x**2 * (1 - x),
        v2pp=lambda x: 2 * (1 - x) ** 2 - 8 * x * (1 - x) + 2 * x**2,
    )


def euler_bernoulli_stiffness(n_elem, L, EI):
    """Independent oracle: classic 4x4 Hermite element bending matrices."""
    dx = L / n_elem
    ke = (EI / dx**3) * np.array(
        [
            [12, 6 * dx, -12, 6 * dx],
            [6 * dx, 4 * dx**2, -6 * dx, 2 * dx**2],
            [-12, -6 * dx, 12, -6 * dx],
            [6 * dx, 2 * dx**2, -6 * dx, 4 * dx**2],
        ]
    )
    ndof = 2 * (n_elem + 1)
    K = np.zeros((ndof, ndof))
    for e in range(n_elem):
        i = 2 * e
        K[i : i + 4, i : i + 4] += ke
    keep = np.arange(2, ndof - 2)
    return K[np.ix_(keep, keep)]


class TestSpaces:
    def test_dimension_counting(self):
        sp = build_spaces(1.0, 2)
        assert sp.hermite.dim == 2
        assert sp.p2.dim == 3

    def test_p2_dimension_general(self):
        for n in (2, 5, 9):
            assert build_spaces(1.0, n).p2.dim == 2 * n - 1

    def test_node_layout(self):
        sp = build_spaces(2.0, 4)
        assert np.allclose(sp.mesh.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_bad_arguments(self):
        with pytest.raises(MeshError):
            build_spaces(1.0, 1)
        with pytest.raises(MeshError):
            build_spaces(-1.0, 4)

    def test_hermite_roundtrip(self, spaces32):
        # any member of the space is reproduced from its nodal values/slopes
        h = spaces32.hermite
        rng = np.random.default_rng(0)
        c = rng.standard_normal(h.dim)
        c2 = h.interpolate(
            lambda x: h.eval_matrix(x, 0) @ c,
            lambda x: h.eval_matrix(x, 1) @ c,
        )
        assert np.abs(c - c2).max() < 1e-12

    def test_p2_reproduces_quadratics(self, spaces32):
        p2 = spaces32.p2
        coeffs = p2.interpolate(p2.nodes_all * (1.0 - p2.nodes_all))
        x = np.linspace(0, 1, 117)
        assert np.abs(p2.eval_matrix(x, 0) @ coeffs - x * (1 - x)).max() < 1e-12
        assert np.abs(p2.eval_matrix(x, 1) @ coeffs - (1 - 2 * x)).max() < 1e-12

    def test_hermite_clamped_at_ends(self, spaces32):
        h = spaces32.hermite
        ends = np.array([0.0, spaces32.L])
        assert np.abs(h.eval_matrix(ends, 0)).max() == 0.0
        assert np.abs(h.eval_matrix(ends, 1)).max() == 0.0

    def test_gauss_antiderivative_exact_for_polys(self, spaces32):
        pts = np.linspace(0, 1, 23)
        F = gauss_integrate_to(spaces32.mesh, lambda x: 5 * x**4, pts)
        assert np.abs(F - pts**5).max() < 1e-13


class TestStaticSolve:
    def test_zero_fields(self, problem32):
        sol = problem32.solve_static(TransverseFields.from_callables())
        assert sol.N == 0.0
        assert np.abs(sol.u).max() == 0.0
        assert np.abs(sol.w).max() == 0.0
        assert np.abs(sol.T()).max() == 0.0

    def test_axial_force_closed_form(self, problem32, disk16_stiffness):
        # N = (E_Y/L) int 1/2 v2'^2 with int v2'^2 = 2/105 (symbolic quadrature)
        sol = problem32.solve_static(quartic_bump_fields())
        E_Y = disk16_stiffness.Q[0, 0]
        assert sol.N == pytest.approx(E_Y / 105.0, abs=1e-12)

    def test_torsion_slave_zero_without_source(self, problem32):
        sol = problem32.solve_static(quartic_bump_fields())
        assert np.abs(sol.w).max() < 1e-14
        assert np.abs(sol.tau).max() < 1e-14

    def test_weak_residuals_vanish(self, problem32):
        sol = problem32.solve_static(quartic_bump_fields())
        res_u, res_w = problem32.static_weak_residual(sol)
        assert np.abs(res_u).max() < 1e-12
        assert np.abs(res_w).max() < 1e-12

    def test_torsion_source_quadrature_oracle(self, problem32, disk16_stiffness):
        from scipy.integrate import quad

        sigma = lambda x: np.sin(np.pi * x)
        sol = problem32.solve_static(quartic_bump_fields(), sigma=sigma)
        res_u, res_w = problem32.static_weak_residual(sol, sigma=sigma)
        assert np.abs(res_u).max() < 1e-12
        assert np.abs(res_w).max() < 1e-11

        # independent oracle for w: tau = (T0 + s)/Q44 with int tau = 0
        Q44 = disk16_stiffness.Q[3, 3]
        s = lambda x: (1.0 - np.cos(np.pi * x)) / np.pi
        T0 = -quad(s, 0.0, 1.0)[0]
        x_probe = problem32.spaces.p2.nodes_all
        w_oracle = np.array([quad(lambda y: (T0 + s(y)) / Q44, 0.0, xx)[0] for xx in x_probe])
        w_vals = problem32.spaces.p2.eval_matrix(x_probe, 0) @ sol.w
        assert np.abs(w_vals - w_oracle).max() < 1e-9

    def test_axial_force_from_coefficients(self, problem32, spaces32, disk16_stiffness):
        # Hermite interpolant of the quartic: N agrees at the interpolation-error level
        h = spaces32.hermite
        c2 = h.interpolate(
            lambda x: x**2 * (1 - x) ** 2,
            lambda x: 2 * x * (1 - x) ** 2 - 2 * x**2 * (1 - x),
        )
        sol = problem32.solve_static(TransverseFields.from_coeffs(h, c2, None))
        assert sol.N == pytest.approx(disk16_stiffness.Q[0, 0] / 105.0, rel=1e-5)

    def test_singular_stiffness_rejected(self, spaces32):
        Q = np.zeros((4, 4))
        with pytest.raises(SolverError):
            RodProblem(spaces32, Q)


class TestBendingResidual:
    def test_zero_state(self, problem32):
        d = problem32.spaces.hermite.dim
        r = problem32.bending_residual(np.zeros(d), np.zeros(d))
        assert np.abs(r).max() == 0.0

    def test_euler_bernoulli_oracle(self, problem32, spaces32, disk16_stiffness):
        # with the N v' term removed the residual is the (negative) EB operator
        rng = np.random.default_rng(3)
        d = spaces32.hermite.dim
        c2 = rng.standard_normal(d)
        r = problem32.bending_residual(c2, np.zeros(d))
        sol_N = problem32.generalized_strain(c2, np.zeros(d))[1]
        v2p = problem32.B1 @ c2
        geo = problem32.B1.T @ (spaces32.wq * (sol_N * v2p))
        K_eb = euler_bernoulli_stiffness(32, 1.0, disk16_stiffness.Q[1, 1])
        expected = -(K_eb @ c2)
        assert np.abs(r[:d] + geo - expected).max() <= 1e-10 * np.abs(expected).max()

    def test_residual_is_energy_gradient(self, problem32):
        rng = np.random.default_rng(8)
        d = problem32.spaces.hermite.dim
        c2, c3 = 0.2 * rng.standard_normal(d), 0.2 * rng.standard_normal(d)
        r = problem32.bending_residual(c2, c3)
        delta = 1e-6
        for j in rng.choice(2 * d, size=12, replace=False):
            e = np.zeros(2 * d)
            e[j] = delta
            ep = problem32.elastic_energy(c2 + e[:d], c3 + e[d:])
            em = problem32.elastic_energy(c2 - e[:d], c3 - e[d:])
            grad_fd = (ep - em) / (2 * delta)
            assert r[j] == pytest.approx(-grad_fd, rel=1e-6, abs=1e-9)

    def test_hessian_matches_fd(self, problem32):
        rng = np.random.default_rng(13)
        d = problem32.spaces.hermite.dim
        c2, c3 = 0.3 * rng.standard_normal(d), 0.3 * rng.standard_normal(d)
        H = problem32.hessian(c2, c3)
        assert np.abs(H - H.T).max() < 1e-10 * np.abs(H).max()
        delta = 1e-6
        for j in rng.choice(2 * d, size=8, replace=False):
            e = np.zeros(2 * d)
            e[j] = delta
            rp = problem32.bending_residual(c2 + e[:d], c3 + e[d:])
            rm = problem32.bending_residual(c2 - e[:d], c3 - e[d:])
            col_fd = -(rp - rm) / (2 * delta)
            assert np.abs(H[:, j] - col_fd).max() <= 1e-5 * max(np.abs(col_fd).max(), 1.0)

    def test_coupled_stiffness_paths(self, spaces32):
        # full 4x4 coupling exercises the (r, tau) elimination and rank-1 term
        rng = np.random.default_rng(17)
        A = rng.standard_normal((4, 4))
        Q = A @ A.T + 4.0 * np.eye(4)
        prob = RodProblem(spaces32, Q)
        d = spaces32.hermite.dim
        c2, c3 = 0.1 * rng.standard_normal(d), 0.1 * rng.standard_normal(d)
        sigma = lambda x: 0.3 * np.cos(np.pi * x)
        H = prob.hessian(c2, c3, sigma=sigma)
        delta = 1e-6
        for j in rng.choice(2 * d, size=6, replace=False):
            e = np.zeros(2 * d)
            e[j] = delta
            rp = prob.bending_residual(c2 + e[:d], c3 + e[d:], sigma=sigma)
            rm = prob.bending_residual(c2 - e[:d], c3 - e[d:], sigma=sigma)
            col_fd = -(rp - rm) / (2 * delta)
            assert np.abs(H[:, j] - col_fd).max() <= 2e-5 * max(np.abs(col_fd).max(), 1.0)
        sol = prob.solve_static(TransverseFields.from_coeffs(spaces32.hermite, c2, c3), sigma=sigma)
        res_u, res_w = prob.static_weak_residual(sol, sigma=sigma)
        assert np.abs(res_u).max() < 1e-10
        assert np.abs(res_w).max() < 1e-10


class TestSpectrum:
    def test_first_eigenvalue_oracle(self, problem32, disk16_stiffness):
        w2 = problem32.linearized_spectrum(1, component=2)[0]
        exact = BETA1_L**4 * disk16_stiffness.Q[1, 1]
        assert w2 == pytest.approx(exact, rel=1e-4)

    def test_linearity_in_stiffness(self, spaces32, disk16_stiffness):
        w2 = RodProblem(spaces32, disk16_stiffness.Q).linearized_spectrum(4)
        w2_double = RodProblem(spaces32, 2.0 * disk16_stiffness.Q).linearized_spectrum(4)
        assert np.allclose(w2_double, 2.0 * w2, rtol=1e-12)

    def test_positive_increasing(self, problem32):
        w2 = problem32.linearized_spectrum(8)
        assert w2[0] > 0
        assert np.all(np.diff(w2) >= -1e-9 * w2[-1])

    def test_convergence_order(self, disk16_stiffness):
        exact = BETA1_L**4 * disk16_stiffness.Q[1, 1]
        errs = []
        for n in (8, 16, 32):
            prob = RodProblem(build_spaces(1.0, n), disk16_stiffness)
            errs.append(abs(prob.linearized_spectrum(1, component=2)[0] - exact) / exact)
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.9
        assert errs[2] < errs[1] < errs[0]

    def test_count_validation(self, problem32):
        with pytest.raises(SolverError):
            problem32.linearized_spectrum(10_000)
