import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vkrod.errors import ConfigError
from vkrod.material import MaterialModel, isotropic_hooke, linearization_slope, sym

from conftest import random_rotation

E11 = np.outer([1.0, 0, 0], [1.0, 0, 0])


def fd_quadratic_form(mat, A, delta=1e-5):
    """Oracle: D^2 W(Id)[A, A] from second differences of the energy."""
    Wp = mat.energy_density(np.eye(3) + delta * A)
    Wm = mat.energy_density(np.eye(3) - delta * A)
    return (Wp + Wm) / delta**2


def fd_hooke(mat, A, delta=1e-6):
    """Oracle: L(A) from central differences of the stress at the identity."""
    return (mat.stress(np.eye(3) + delta * A) - mat.stress(np.eye(3) - delta * A)) / (2 * delta)


matrices = st.builds(
    lambda flat: np.array(flat, dtype=float).reshape(3, 3),
    st.lists(st.floats(-10, 10), min_size=9, max_size=9),
)


class TestEnergy:
    def test_zero_at_identity(self, mat):
        assert mat.energy_density(np.eye(3)) == 0.0

    def test_zero_on_rotation(self, mat):
        c, s = np.cos(0.3), np.sin(0.3)
        R = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
        assert abs(mat.energy_density(R)) < 1e-14

    def test_small_uniaxial_stretch(self, mat):
        # W = 1/2 Q(e1 x e1) 1e-6 + O(1e-9) = 1.5e-6 + O(1e-9)
        W = mat.energy_density(np.eye(3) + 1e-3 * E11)
        assert W == pytest.approx(1.5e-6, abs=5e-9)
        # Taylor against the finite-difference quadratic form (cubic term ~1e-3 rel)
        assert W == pytest.approx(0.5 * fd_quadratic_form(mat, E11) * 1e-6, rel=3e-3)

    def test_frame_indifference(self, mat):
        rng = np.random.default_rng(7)
        for _ in range(20):
            F = np.eye(3) + 0.4 * rng.standard_normal((3, 3))
            R = random_rotation(rng)
            W, WR = mat.energy_density(F), mat.energy_density(R @ F)
            assert abs(WR - W) <= 1e-12 * max(abs(W), 1.0)

    def test_nonnegative_batch(self, mat):
        rng = np.random.default_rng(3)
        F = np.eye(3) + 0.5 * rng.standard_normal((50, 3, 3))
        assert np.all(mat.energy_density(F) >= 0.0)

    def test_nonfinite_rejected(self, mat):
        F = np.eye(3).copy()
        F[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            mat.energy_density(F)


class TestStress:
    def test_zero_at_identity(self, mat):
        assert np.allclose(mat.stress(np.eye(3)), 0.0)

    def test_zero_on_rotations(self, mat):
        rng = np.random.default_rng(11)
        R = np.stack([random_rotation(rng) for _ in range(100)])
        assert np.abs(mat.stress(R)).max() < 1e-12

    def test_quadratic_remainder(self, mat):
        A = np.outer([1, 0, 0], [0, 1, 0]) + np.outer([0, 1, 0], [1, 0, 0])
        LA = mat.apply_L(A)
        for d in (1e-2, 1e-3):
            err = np.linalg.norm(mat.stress(np.eye(3) + d * A) - d * LA)
            assert err <= 8.0 * d**2

    def test_fd_hessian_oracle(self, mat):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((3, 3))
        assert np.allclose(mat.apply_L(A), fd_hooke(mat, A), atol=1e-8)

    def test_times_FT_symmetric(self, mat):
        rng = np.random.default_rng(1)
        for _ in range(100):
            F = np.eye(3) + 0.5 * rng.standard_normal((3, 3))
            P = mat.stress(F) @ F.T
            assert np.abs(P - P.T).max() <= 1e-12 * max(np.abs(P).max(), 1.0)

    def test_linearized_mode(self):
        m = MaterialModel(lam=1.0, mu=1.0, mode="linearized")
        rng = np.random.default_rng(2)
        F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        assert np.allclose(m.stress(F), m.apply_L(F - np.eye(3)))

    def test_linearization_slope(self, mat):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((3, 3))
        assert linearization_slope(mat, A) >= 0.99


class TestHookeMap:
    @given(matrices)
    @settings(max_examples=50)
    def test_kills_skew(self, A):
        m = MaterialModel(lam=1.0, mu=1.0)
        S = 0.5 * (A - A.T)
        assert np.abs(m.apply_L(S)).max() <= 1e-12 * max(np.abs(S).max(), 1.0)

    @given(matrices)
    @settings(max_examples=50)
    def test_depends_on_sym_part_only(self, A):
        m = MaterialModel(lam=1.0, mu=1.0)
        assert np.allclose(m.apply_L(A), m.apply_L(sym(A)), atol=1e-12)

    @given(matrices)
    @settings(max_examples=50)
    def test_quadratic_form_lower_bound(self, A):
        m = MaterialModel(lam=1.0, mu=1.0)
        # Q(A) >= 2 mu |sym A|^2, with equality iff sym A = 0
        q = m.quadratic_form(A)
        s2 = np.sum(sym(A) ** 2)
        assert q >= 2.0 * m.mu * s2 - 1e-9 * max(s2, 1.0)

    def test_unit_stretch_value(self, mat):
        assert mat.quadratic_form(E11) == pytest.approx(3.0, abs=1e-14)
        assert fd_quadratic_form(mat, E11) == pytest.approx(3.0, rel=1e-6)

    def test_output_symmetric(self, mat):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((3, 3))
        LA = mat.apply_L(A)
        assert np.allclose(LA, LA.T)


class TestVoigtInput:
    def test_matches_isotropic(self):
        iso = MaterialModel(lam=1.3, mu=0.7)
        voigt = MaterialModel(hooke_voigt=isotropic_hooke(1.3, 0.7))
        rng = np.random.default_rng(6)
        F = np.eye(3) + 0.2 * rng.standard_normal((5, 3, 3))
        assert np.allclose(iso.stress(F), voigt.stress(F))
        assert np.allclose(iso.energy_density(F), voigt.energy_density(F))

    def test_rejects_asymmetric(self):
        C = isotropic_hooke(1.0, 1.0)
        C[0, 1] += 0.5
        with pytest.raises(ConfigError, match="symmetric"):
            MaterialModel(hooke_voigt=C)

    def test_rejects_indefinite(self):
        C = -np.eye(6)
        with pytest.raises(ConfigError, match="positive semidefinite"):
            MaterialModel(hooke_voigt=C)

    def test_rejects_bad_isotropic_parameters(self):
        with pytest.raises(ConfigError, match="mu"):
            MaterialModel(lam=1.0, mu=0.0)
        with pytest.raises(ConfigError, match="lambda"):
            MaterialModel(lam=-0.5, mu=1.0)
