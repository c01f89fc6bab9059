import numpy as np
import pytest

from vkrod.dynamics import (
    DissipationFields,
    ForcingModel,
    Integrator,
    SimulationConfig,
    initial_state,
)
from vkrod.errors import NewtonError
from vkrod.rod1d import RodProblem, RodState, build_spaces


@pytest.fixture(scope="module")
def problem(disk8_stiffness):
    return RodProblem(build_spaces(1.0, 16), disk8_stiffness)


@pytest.fixture(scope="module")
def mode1(problem):
    """First bending mode, scaled to unit peak deflection."""
    w2, modes = problem.linearized_modes(1, component=2)
    c = modes[:, 0]
    vals = problem.spaces.hermite.eval_matrix(problem.spaces.mesh.nodes, 0) @ c
    return c / vals[np.abs(vals).argmax()], float(np.sqrt(w2[0]))


def test_zero_state_is_fixed_point(problem):
    cfg = SimulationConfig(dt=0.01, t_final=0.05)
    integ = Integrator(problem, cfg)
    state, work = integ.step(RodState.zeros(problem.spaces), 0.0)
    assert np.abs(state.v2).max() == 0.0
    assert np.abs(state.vel2).max() == 0.0
    assert work == 0.0


def test_eigenmode_phase_space_rotation(problem, mode1):
    # midpoint rotates a linear oscillator by theta = 2 atan(omega dt / 2) per step
    mode, omega = mode1
    amp = 1e-3
    dt = 2 * np.pi / omega / 64
    cfg = SimulationConfig(dt=dt, t_final=dt)
    integ = Integrator(problem, cfg)
    state = initial_state(problem, v2=amp * mode)
    theta = 2.0 * np.arctan(0.5 * omega * dt)
    n = 48
    for k in range(n):
        state, _ = integ.step(state, k * dt)
    expected = amp * np.cos(n * theta) * mode
    assert np.abs(state.v2 - expected).max() <= 1e-4 * amp
    # discrete frequency approximates omega at second order in dt
    assert abs(theta / dt - omega) <= omega**3 * dt**2 / 12.0 * 1.2


def test_local_order_richardson(problem, mode1):
    mode, _ = mode1
    y0 = initial_state(problem, v2=0.3 * mode, vel3=lambda x: 0.2 * np.sin(np.pi * x))
    # the asymptotic range needs dt below the stiffest discrete mode's period
    w2_all = problem.linearized_spectrum(2 * problem.spaces.hermite.dim)
    t_min = 2 * np.pi / np.sqrt(w2_all[-1])

    def one_vs_two(dt):
        cfg = SimulationConfig(dt=dt, t_final=dt)
        integ = Integrator(problem, cfg)
        big, _ = integ.step(y0, 0.0)
        half, _ = integ.step(y0, 0.0, dt=dt / 2)
        half, _ = integ.step(half, dt / 2, dt=dt / 2)
        return np.linalg.norm(
            np.concatenate([big.v2 - half.v2, big.v3 - half.v3, big.vel2 - half.vel2, big.vel3 - half.vel3])
        )

    e1 = one_vs_two(t_min / 8)
    e2 = one_vs_two(t_min / 16)
    order = np.log2(e1 / e2)
    assert order >= 2.9


def test_conservation_short(problem, mode1):
    mode, omega = mode1
    period = 2 * np.pi / omega
    cfg = SimulationConfig(dt=period / 200, t_final=2 * period)
    integ = Integrator(problem, cfg)
    traj, ledger = integ.run(initial_state(problem, v2=1e-3 * mode))
    tot = ledger.total()
    assert np.abs(tot - tot[0]).max() / tot[0] <= 1e-8
    assert np.abs(ledger.balance_defect()).max() <= 1e-9 * tot[0]


def test_forced_time_average_matches_static(problem, mode1):
    # undamped oscillation around the static solution: the time average over
    # whole fundamental periods approaches the linear static deflection
    mode, omega = mode1
    period = 2 * np.pi / omega
    f2 = lambda t, x: 0.01 * np.ones_like(x)
    cfg = SimulationConfig(dt=period / 120, t_final=10 * period)
    integ = Integrator(problem, cfg, ForcingModel(f2=f2))
    traj, _ = integ.run(RodState.zeros(problem.spaces))

    d = problem.spaces.hermite.dim
    K = problem.hessian(np.zeros(d), np.zeros(d))[:d, :d]
    load = problem.B0.T @ (problem.spaces.wq * f2(0.0, problem.spaces.xq))
    v_static = np.linalg.solve(K, load)

    snaps = traj.snapshots[1:]
    avg = np.mean([s.state.v2 for s in snaps], axis=0)
    scale = np.abs(v_static).max()
    assert np.abs(avg - v_static).max() <= 0.02 * scale


def test_rho_channel_work_identity(problem, mode1):
    # rho is time-independent, so its cumulative work must equal
    # -int rho (v'(T) - v'(0)) dx exactly; the ledger must balance
    mode, omega = mode1
    period = 2 * np.pi / omega
    rho2 = lambda x: 0.05 * np.ones_like(x)
    cfg = SimulationConfig(dt=period / 150, t_final=1.5 * period)
    integ = Integrator(problem, cfg, dissipation=DissipationFields(rho2=rho2))
    state0 = initial_state(problem, v2=1e-2 * mode)
    traj, ledger = integ.run(state0)

    v2_final = traj.snapshots[-1].state.v2
    sp = problem.spaces
    dv2p = problem.B1 @ (v2_final - state0.v2)
    w_oracle = -float((sp.wq * rho2(sp.xq) * dv2p).sum())
    assert ledger.work[-1] == pytest.approx(w_oracle, abs=1e-12)
    assert abs(ledger.work[-1]) > 0
    tot = ledger.total()
    # defect = cubic Kirchhoff remainder, O(amp^4 dt^2) relative
    assert np.abs(ledger.balance_defect()).max() <= 1e-7 * max(tot[0], 1e-30)
    # energy change carries the sign of the channel work
    assert np.sign(tot[-1] - tot[0]) == np.sign(ledger.work[-1])


def test_sigma_channel_balances_with_coupled_stiffness(problem, mode1):
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 4))
    Q = A @ A.T + 4.0 * np.eye(4)
    prob = RodProblem(problem.spaces, Q)
    w2 = prob.linearized_spectrum(1)[0]
    period = 2 * np.pi / np.sqrt(w2)
    cfg = SimulationConfig(dt=period / 200, t_final=period)
    sigma = lambda x: 0.2 * np.sin(np.pi * x)
    integ = Integrator(prob, cfg, dissipation=DissipationFields(sigma=sigma))
    mode = prob.linearized_modes(1)[1][:, 0]
    d = prob.spaces.hermite.dim
    st0 = initial_state(prob, v2=1e-3 * mode[:d], v3=1e-3 * mode[d:])
    _, ledger = integ.run(st0)
    scale = max(ledger.total().max(), 1e-30)
    assert np.abs(ledger.balance_defect()).max() <= 1e-9 * scale


def test_time_reversal(problem, mode1):
    mode, omega = mode1
    dt = 2 * np.pi / omega / 50
    cfg = SimulationConfig(dt=dt, t_final=dt)
    integ = Integrator(problem, cfg)
    st = initial_state(problem, v2=0.05 * mode)
    fwd, _ = integ.step(st, 0.0)
    back, _ = integ.step(fwd, dt, dt=-dt)
    scale = np.abs(st.v2).max()
    for a, b in ((back.v2, st.v2), (back.vel2, st.vel2)):
        assert np.abs(a - b).max() <= 1e-10 * scale


def test_clamped_constraints_every_step(problem, mode1):
    mode, omega = mode1
    cfg = SimulationConfig(dt=0.01, t_final=0.1, output_stride=1)
    integ = Integrator(problem, cfg)
    traj, _ = integ.run(initial_state(problem, v2=0.2 * mode))
    ends = np.array([0.0, problem.spaces.L])
    B0 = problem.spaces.hermite.eval_matrix(ends, 0)
    B1 = problem.spaces.hermite.eval_matrix(ends, 1)
    for snap in traj.snapshots:
        assert np.abs(B0 @ snap.state.v2).max() == 0.0
        assert np.abs(B1 @ snap.state.v2).max() == 0.0
        assert snap.u_nodes[0] == snap.u_nodes[-1] == 0.0
        assert snap.w_nodes[0] == snap.w_nodes[-1] == 0.0


def test_velocity_projection_is_l2(problem):
    # projecting a member of the space is the identity
    rng = np.random.default_rng(2)
    c = rng.standard_normal(problem.spaces.hermite.dim)
    f = lambda x: problem.spaces.hermite.eval_matrix(x, 0) @ c
    st = initial_state(problem, vel2=f)
    assert np.abs(st.vel2 - c).max() < 1e-10

    # general field: residual orthogonal to the space
    g = lambda x: np.sin(3 * np.pi * x) * x
    st = initial_state(problem, vel2=g)
    sp = problem.spaces
    resid = g(sp.xq) - problem.B0 @ st.vel2
    assert np.abs(problem.B0.T @ (sp.wq * resid)).max() < 1e-12


def test_newton_failure_raises(problem, mode1):
    mode, omega = mode1
    period = 2 * np.pi / omega
    cfg = SimulationConfig(dt=50 * period, t_final=100 * period, newton_max=4)
    integ = Integrator(problem, cfg)
    st = initial_state(problem, v2=2.0 * mode, vel2=lambda x: 5.0 * np.sin(np.pi * x))
    with pytest.raises(NewtonError, match="reduce the timestep"):
        integ.step(st, 0.0)


def test_energy_quadratic_scaling(problem, mode1):
    mode, _ = mode1
    e1 = problem.elastic_energy(1e-4 * mode, np.zeros_like(mode))
    e2 = problem.elastic_energy(2e-4 * mode, np.zeros_like(mode))
    assert e2 / e1 == pytest.approx(4.0, rel=1e-6)


def test_run_output_stride(problem):
    cfg = SimulationConfig(dt=0.01, t_final=0.1, output_stride=5)
    integ = Integrator(problem, cfg)
    traj, ledger = integ.run(RodState.zeros(problem.spaces))
    assert len(ledger.t) == 11
    assert [s.t for s in traj.snapshots] == pytest.approx([0.0, 0.05, 0.1])
