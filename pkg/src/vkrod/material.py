"""Frame-indifferent stored energy, stress and linearization at the identity.

The density is Saint Venant-Kirchhoff built on a symmetric quadratic form:

    W(F) = 1/2 Q(E),   E = 1/2 (F^T F - Id),   Q(A) = L(A) : A,

where L is the isotropic Hooke map ``A -> 2 mu sym(A) + lambda tr(A) Id`` or
any user-supplied positive semidefinite 6x6 Voigt matrix.  The exact stress is
``DW(F) = F L(E)``; `linearized` mode replaces it by ``L(F - Id)``, which
satisfies a global Lipschitz bound at the identity exactly.

All operations accept stacked inputs with shape (..., 3, 3) and are pure
functions of immutable data (thread-safe).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Voigt ordering (11, 22, 33, 23, 13, 12) with engineering shear strains;
# _VOIGT_FLAT indexes the row-major 3x3 flattening.
_VOIGT_FLAT = np.array([0, 4, 8, 5, 2, 1])
_SHEAR_SCALE = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

STRESS_MODES = ("nonlinear", "linearized")


def isotropic_hooke(lam: float, mu: float) -> np.ndarray:
    """6x6 Voigt matrix of A -> 2 mu sym(A) + lambda tr(A) Id."""
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] += 2.0 * mu
    C[np.arange(3, 6), np.arange(3, 6)] = mu
    return C


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _to_voigt_strain(S):
    # S symmetric; engineering convention doubles the shear entries.
    flat = S.reshape(S.shape[:-2] + (9,))
    return flat[..., _VOIGT_FLAT] * _SHEAR_SCALE


def _from_voigt_stress(s):
    out = np.empty(s.shape[:-1] + (9,))
    out[..., 0], out[..., 4], out[..., 8] = s[..., 0], s[..., 1], s[..., 2]
    out[..., 5] = out[..., 7] = s[..., 3]
    out[..., 2] = out[..., 6] = s[..., 4]
    out[..., 1] = out[..., 3] = s[..., 5]
    return out.reshape(s.shape[:-1] + (3, 3))


def _check_finite(F, name):
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (3, 3):
        raise ValueError(f"{name} must have shape (..., 3, 3), got {F.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError(f"{name} contains non-finite entries")
    return F


@dataclass(frozen=True)
class MaterialModel:
    """Stored energy density W, stress DW and Hooke map for one material.

    lam, mu     isotropic Lame parameters (ignored when hooke_voigt is given)
    mode        'nonlinear' (exact DW) or 'linearized' (DW replaced by L(F-Id))
    hooke_voigt optional 6x6 Voigt matrix for the quadratic form
    """

    lam: float = 1.0
    mu: float = 1.0
    mode: str = "nonlinear"
    hooke_voigt: np.ndarray | None = None
    _C: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in STRESS_MODES:
            raise ConfigError(f"material.stress_mode must be one of {STRESS_MODES}, got {self.mode!r}")
        if self.hooke_voigt is not None:
            C = np.asarray(self.hooke_voigt, dtype=float)
            if C.shape != (6, 6):
                raise ConfigError("material.hooke_voigt must be a 6x6 matrix")
            if not np.allclose(C, C.T, rtol=0.0, atol=1e-12 * max(1.0, abs(C).max())):
                raise ConfigError("material.hooke_voigt must be symmetric")
            eigs = np.linalg.eigvalsh(0.5 * (C + C.T))
            if eigs.min() < -1e-12 * max(1.0, eigs.max()):
                raise ConfigError("material.hooke_voigt must be positive semidefinite")
        else:
            if not self.mu > 0.0:
                raise ConfigError(f"material.mu must be positive, got {self.mu}")
            if self.lam < 0.0:
                raise ConfigError(f"material.lambda must be nonnegative, got {self.lam}")
            C = isotropic_hooke(self.lam, self.mu)
        object.__setattr__(self, "_C", 0.5 * (C + C.T))

    # -- linearization at the identity ------------------------------------

    def apply_L(self, A) -> np.ndarray:
        """Hooke map L(A) = D^2 W(Id)[A, .]; kills the skew part of A."""
        A = _check_finite(A, "A")
        return _from_voigt_stress(_to_voigt_strain(sym(A)) @ self._C.T)

    def quadratic_form(self, A) -> float | np.ndarray:
        """Q(A) = L(A) : A = L(sym A) : sym A >= 0."""
        A = _check_finite(A, "A")
        v = _to_voigt_strain(sym(A))
        q = np.einsum("...i,ij,...j->...", v, self._C, v)
        return q if q.ndim else float(q)

    # -- finite-strain quantities ------------------------------------------

    def green_strain(self, F) -> np.ndarray:
        F = _check_finite(F, "F")
        return 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(3))

    def energy_density(self, F) -> float | np.ndarray:
        """W(F) = 1/2 Q(E) with E the Green strain; zero exactly on SO(3)."""
        w = 0.5 * self.quadratic_form(self.green_strain(F))
        return w

    def stress(self, F) -> np.ndarray:
        """DW(F); `linearized` mode returns L(F - Id) instead."""
        F = _check_finite(F, "F")
        if self.mode == "linearized":
            return self.apply_L(F - np.eye(3))
        return F @ self.apply_L(self.green_strain(F))

    @property
    def young_modulus(self) -> float:
        """E_Y = mu (3 lambda + 2 mu) / (lambda + mu) for the isotropic case."""
        if self.hooke_voigt is not None:
            raise ValueError("Young's modulus shortcut is defined for the isotropic parameters only")
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    @property
    def poisson_ratio(self) -> float:
        if self.hooke_voigt is not None:
            raise ValueError("Poisson ratio shortcut is defined for the isotropic parameters only")
        return self.lam / (2.0 * (self.lam + self.mu))


def linearization_slope(material: MaterialModel, A, deltas=(1e-1, 1e-2, 1e-3, 1e-4)) -> float:
    """Log-log slope of delta -> ||DW(Id + delta A)/delta - L(A)||.

    Slope ~ 1 certifies differentiability of DW at the identity (the stress is
    consistent with its linearization at first order).
    """
    A = np.asarray(A, dtype=float)
    LA = material.apply_L(A)
    errs = []
    for d in deltas:
        R = material.stress(np.eye(3) + d * A) / d - LA
        errs.append(np.linalg.norm(R))
    logd = np.log(np.asarray(deltas))
    loge = np.log(np.asarray(errs))
    slope = np.polyfit(logd, loge, 1)[0]
    return float(slope)
