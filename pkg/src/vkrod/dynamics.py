"""Implicit-midpoint integration of the transverse wave system.

The semidiscrete system is M dv/dt = p, M dp/dt = R(v, t) with R the bending
residual (u and w re-solved statically at every evaluation, including the
midpoint stage).  Implicit midpoint is symplectic and time-reversible; it
conserves the quadratic part of the energy exactly and keeps the cubic
Kirchhoff drift bounded at O(dt^2), so the ledger exposes the rho/sigma
dissipation channels without numerical damping on top.

Ledger convention: work collects the external power f . dv plus the
dissipation channels -(rho_k, d v_k') and (T, d tau); for f = rho = sigma = 0
kinetic + elastic is conserved up to Newton tolerance and the O(dt^2) bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NewtonError
from .rod1d import RodProblem, RodState, TransverseFields, _field_values

__all__ = [
    "SimulationConfig",
    "ForcingModel",
    "DissipationFields",
    "EnergyLedger",
    "Trajectory",
    "Integrator",
    "initial_state",
]


@dataclass(frozen=True)
class SimulationConfig:
    dt: float
    t_final: float
    newton_tol: float = 1e-11
    newton_max: int = 30
    output_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dynamics.dt must be positive, got {self.dt}")
        if self.newton_tol <= 0:
            raise ConfigError(f"dynamics.newton_tol must be positive, got {self.newton_tol}")
        if self.output_stride < 1:
            raise ConfigError("io.stride must be >= 1")


@dataclass
class ForcingModel:
    """Transverse loads f2, f3 as callables (t, x) -> values; f1 is zero by construction."""

    f2: object = None
    f3: object = None

    def at(self, t, x):
        out = []
        for f in (self.f2, self.f3):
            if f is None:
                out.append(None)
            elif callable(f):
                out.append(np.broadcast_to(np.asarray(f(t, x), dtype=float), x.shape).copy())
            else:
                out.append(np.full_like(x, float(f)))
        return tuple(out)


@dataclass
class DissipationFields:
    """Torsion-oscillation limit channels rho2, rho3, sigma on (0, L)."""

    rho2: object = None
    rho3: object = None
    sigma: object = None

    @property
    def is_zero(self) -> bool:
        return self.rho2 is None and self.rho3 is None and self.sigma is None


@dataclass
class EnergyLedger:
    """Per-step kinetic/elastic energies and cumulative injected work."""

    t: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    elastic: list = field(default_factory=list)
    work: list = field(default_factory=list)

    def record(self, t, kin, ela, work):
        self.t.append(float(t))
        self.kinetic.append(float(kin))
        self.elastic.append(float(ela))
        self.work.append(float(work))

    def total(self) -> np.ndarray:
        return np.asarray(self.kinetic) + np.asarray(self.elastic)

    def balance_defect(self) -> np.ndarray:
        """E(t) - E(0) - W(t); bounded by Newton accumulation + O(dt^2) cubic terms."""
        tot = self.total()
        return tot - tot[0] - np.asarray(self.work)

    def arrays(self):
        return (np.asarray(self.t), np.asarray(self.kinetic), np.asarray(self.elastic), np.asarray(self.work))


@dataclass
class Snapshot:
    t: float
    state: RodState
    N: float
    T_nodes: np.ndarray
    u_nodes: np.ndarray   # at the vertex nodes, clamped ends included
    w_nodes: np.ndarray
    v2_nodes: np.ndarray
    v3_nodes: np.ndarray
    vel2_nodes: np.ndarray
    vel3_nodes: np.ndarray


@dataclass
class Trajectory:
    x_nodes: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)


class Integrator:
    """One rod problem + forcing/dissipation inputs, stepped by implicit midpoint."""

    def __init__(self, problem: RodProblem, cfg: SimulationConfig,
                 forcing: ForcingModel | None = None,
                 dissipation: DissipationFields | None = None):
        self.problem = problem
        self.cfg = cfg
        self.forcing = forcing or ForcingModel()
        self.diss = dissipation or DissipationFields()
        d = problem.spaces.hermite.dim
        self.d = d
        self.mass = sla.block_diag(problem.mass1, problem.mass1)
        xq = problem.spaces.xq
        self._rho = (
            _field_values(self.diss.rho2, xq) if self.diss.rho2 is not None else None,
            _field_values(self.diss.rho3, xq) if self.diss.rho3 is not None else None,
        )
        # sigma is time-independent, so its antiderivative can be frozen now
        self._sigma_s = (
            _sigma_antiderivative(problem, self.diss.sigma, xq)
            if self.diss.sigma is not None
            else None
        )

    # -- force evaluation -----------------------------------------------------

    def _residual(self, y, t):
        d = self.d
        fq = self.forcing.at(t, self.problem.spaces.xq)
        return self.problem.bending_residual(
            y[:d], y[d:], forcing_quad=fq, rho=self._rho, sigma=self.diss.sigma
        )

    def _forcing_load(self, t):
        """Assembled load vector of f(t, .) against the Hermite values."""
        sp = self.problem.spaces
        f2, f3 = self.forcing.at(t, sp.xq)
        load = np.zeros(2 * self.d)
        if f2 is not None:
            load[: self.d] = self.problem.B0.T @ (sp.wq * f2)
        if f3 is not None:
            load[self.d :] = self.problem.B0.T @ (sp.wq * f3)
        return load

    # -- stepping ---------------------------------------------------------------

    def step(self, state: RodState, t: float, dt: float | None = None):
        """One implicit-midpoint step from time t; returns (state, work_increment).

        Newton iterates on the midpoint configuration with the exact elastic
        tangent; failure to reach newton_tol within newton_max raises
        NewtonError (the usual cause is a too-large dt).
        """
        dt = self.cfg.dt if dt is None else dt
        d = self.d
        y0 = np.concatenate([state.v2, state.v3])
        p0 = np.concatenate([state.vel2, state.vel3])
        t_mid = t + 0.5 * dt

        y = y0 + 0.5 * dt * p0
        scale = max(1.0, np.abs(y0).max())
        converged = False
        for _ in range(self.cfg.newton_max):
            G = self.mass @ (y - y0 - 0.5 * dt * p0) - 0.25 * dt * dt * self._residual(y, t_mid)
            J = self.mass + 0.25 * dt * dt * self.problem.hessian(y[:d], y[d:], self.diss.sigma)
            delta = sla.solve(J, -G, assume_a="sym")
            y = y + delta
            if np.abs(delta).max() <= self.cfg.newton_tol * scale:
                converged = True
                break
        if not converged:
            raise NewtonError(
                f"implicit midpoint stage did not converge in {self.cfg.newton_max} iterations "
                f"(dt={dt:g}); reduce the timestep"
            )

        p_mid = 2.0 * (y - y0) / dt
        y1 = 2.0 * y - y0
        p1 = 2.0 * p_mid - p0

        work = self._work_increment(y0, y1, y, p_mid, t_mid, dt)
        new = RodState(v2=y1[:d], v3=y1[d:], vel2=p1[:d], vel3=p1[d:])
        return new, work

    def _work_increment(self, y0, y1, y_mid, p_mid, t_mid, dt):
        sp = self.problem.spaces
        d = self.d
        work = dt * float(self._forcing_load(t_mid) @ p_mid)
        rho2, rho3 = self._rho
        if rho2 is not None:
            work -= float((sp.wq * rho2 * (self.problem.B1 @ (y1[:d] - y0[:d]))).sum())
        if rho3 is not None:
            work -= float((sp.wq * rho3 * (self.problem.B1 @ (y1[d:] - y0[d:]))).sum())
        if self.diss.sigma is not None:
            _, _, T0m = self.problem.generalized_strain(y_mid[:d], y_mid[d:], self.diss.sigma)
            eps1, _, _ = self.problem.generalized_strain(y1[:d], y1[d:], self.diss.sigma)
            eps0, _, _ = self.problem.generalized_strain(y0[:d], y0[d:], self.diss.sigma)
            # (T, d tau) = -(sigma, d w) after integration by parts (clamped w).
            T_mid = T0m + self._sigma_s
            work += float((sp.wq * T_mid * (eps1[3] - eps0[3])).sum())
        return work

    def energies(self, state: RodState):
        kin = self.problem.kinetic_energy(state.vel2, state.vel3)
        ela = self.problem.elastic_energy(state.v2, state.v3, self.diss.sigma)
        return kin, ela

    def _snapshot(self, t, state: RodState) -> Snapshot:
        sp = self.problem.spaces
        fields = TransverseFields.from_coeffs(sp.hermite, state.v2, state.v3)
        sol = self.problem.solve_static(fields, self.diss.sigma)
        nodes = sp.mesh.nodes
        Hv = sp.hermite.eval_matrix(nodes, 0)
        P0 = sp.p2.eval_matrix(nodes, 0)
        T_nodes = sol.T0 + (
            0.0 * nodes
            if self.diss.sigma is None
            else _sigma_antiderivative(self.problem, self.diss.sigma, nodes)
        )
        state = RodState(
            v2=state.v2, v3=state.v3, vel2=state.vel2, vel3=state.vel3,
            u=sol.u, w=sol.w,
        )
        return Snapshot(
            t=t, state=state, N=sol.N, T_nodes=T_nodes,
            u_nodes=P0 @ sol.u, w_nodes=P0 @ sol.w,
            v2_nodes=Hv @ state.v2, v3_nodes=Hv @ state.v3,
            vel2_nodes=Hv @ state.vel2, vel3_nodes=Hv @ state.vel3,
        )

    def run(self, initial: RodState):
        """Integrate to t_final; returns (Trajectory, EnergyLedger).

        The trajectory is sampled every output_stride steps (plus the initial
        and final states); the ledger is filled at every step.
        """
        cfg = self.cfg
        n_steps = int(round(cfg.t_final / cfg.dt))
        if n_steps < 1:
            raise ConfigError("t_final shorter than one timestep")
        ledger = EnergyLedger()
        traj = Trajectory(x_nodes=self.problem.spaces.mesh.nodes.copy())

        state = initial
        kin, ela = self.energies(state)
        cumulative = 0.0
        ledger.record(0.0, kin, ela, cumulative)
        traj.snapshots.append(self._snapshot(0.0, state))
        for n in range(n_steps):
            t = n * cfg.dt
            state, dwork = self.step(state, t)
            cumulative += dwork
            kin, ela = self.energies(state)
            ledger.record(t + cfg.dt, kin, ela, cumulative)
            if (n + 1) % cfg.output_stride == 0 or n == n_steps - 1:
                traj.snapshots.append(self._snapshot(t + cfg.dt, state))
        return traj, ledger


def _sigma_antiderivative(problem: RodProblem, sigma, points):
    from .rod1d import gauss_integrate_to

    return gauss_integrate_to(problem.spaces.mesh, lambda x: _field_values(sigma, x), points)


def initial_state(problem: RodProblem, v2=None, v3=None, vel2=None, vel3=None) -> RodState:
    """Build a RodState from coefficients, (value, slope) pairs or L2 data.

    Deflections: coefficient vectors or (value, slope) callable pairs, Hermite
    interpolated.  Velocities: coefficient vectors or plain callables,
    L2-projected onto the Hermite space.
    """
    sp = problem.spaces
    h = sp.hermite

    def deflection(arg):
        if arg is None:
            return np.zeros(h.dim)
        if isinstance(arg, tuple):
            return h.interpolate(*arg)
        return np.asarray(arg, dtype=float)

    def velocity(arg):
        if arg is None:
            return np.zeros(h.dim)
        if callable(arg):
            vals = np.asarray(arg(sp.xq), dtype=float)
            rhs = problem.B0.T @ (sp.wq * vals)
            return sla.solve(problem.mass1, rhs, assume_a="pos")
        return np.asarray(arg, dtype=float)

    return RodState(v2=deflection(v2), v3=deflection(v3), vel2=velocity(vel2), vel3=velocity(vel3))
