import numpy as np
import pytest

from qbmor.problems import gen_burgers, gen_synthetic_dae
from qbmor.simulate import InputSignal, Trajectory, compare, simulate_dae, simulate_ode
from qbmor.system_model import QbOdeSystem, project_ode
from qbmor.tensor_kron import HessianTensor


def test_zero_input_zero_trajectory():
    sys = gen_burgers(8, 0.5)
    traj = simulate_ode(sys, InputSignal.zero(1), 1.0, 0.01)
    assert np.allclose(traj.states, 0.0) and np.allclose(traj.outputs, 0.0)


def test_scalar_linear_closed_form():
    # x' = -x + u with u = 1: x(t) = 1 - exp(-t)
    sys = QbOdeSystem(E=np.eye(1), A=-np.eye(1), H=HessianTensor.zero(1),
                      N=(np.zeros((1, 1)),), B=np.ones((1, 1)), C=np.ones((1, 1)))
    u = InputSignal(1, lambda t: 1.0, lambda t: 0.0)
    traj = simulate_ode(sys, u, 1.0, 1e-3)
    assert traj.outputs[-1, 0] == pytest.approx(1.0 - np.exp(-1.0), abs=5e-3)


def test_first_order_self_convergence():
    sys = gen_burgers(16, 0.1)
    u = InputSignal.preset_cavity(1)
    base = 0.01
    ref = simulate_ode(sys, u, 1.0, base / 64.0)
    errors = []
    for dt in (base, base / 2.0):
        traj = simulate_ode(sys, u, 1.0, dt)
        step = round(dt / (base / 64.0))
        diff = traj.outputs - ref.outputs[::step]
        errors.append(np.sqrt(dt) * np.linalg.norm(diff))  # discrete L2
    ratio = errors[0] / errors[1]
    assert 1.8 <= ratio <= 2.2


def test_first_order_self_convergence_dae():
    sys = gen_synthetic_dae(12, 3, m=2, p=2, seed=2, quad_scale=0.1)
    u = InputSignal.preset_cavity(2)
    base = 0.01
    ref = simulate_dae(sys, u, 1.0, base / 64.0)
    errors = []
    for dt in (base, base / 2.0):
        traj = simulate_dae(sys, u, 1.0, dt)
        step = round(dt / (base / 64.0))
        diff = traj.outputs - ref.outputs[::step]
        errors.append(np.sqrt(dt) * np.linalg.norm(diff))
    ratio = errors[0] / errors[1]
    assert 1.8 <= ratio <= 2.2


def test_reduced_identity_projection_bit_identical():
    sys = gen_burgers(12, 0.2)
    red = project_ode(sys, np.eye(12), np.eye(12))
    u = InputSignal.preset_cavity(1)
    a = simulate_ode(sys, u, 1.0, 0.01)
    b = simulate_ode(red, u, 1.0, 0.01)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.outputs, b.outputs)


def test_input_channel_mismatch():
    sys = gen_burgers(8, 0.5)
    with pytest.raises(ValueError, match="channels"):
        simulate_ode(sys, InputSignal.zero(2), 1.0, 0.01)


def test_dae_zero_input():
    sys = gen_synthetic_dae(12, 3, m=2, p=2, seed=0, quad_scale=0.1)
    traj = simulate_dae(sys, InputSignal.zero(2), 1.0, 0.01)
    assert np.allclose(traj.states, 0.0)
    assert np.allclose(traj.constraint_residual, 0.0)


def test_dae_constraint_residual_bound():
    sys = gen_synthetic_dae(16, 4, m=2, p=2, seed=5, quad_scale=0.1)
    traj = simulate_dae(sys, InputSignal.preset_cavity(2), 3.0, 0.01)
    v = traj.states[:, :16]
    assert traj.constraint_residual.max() <= 1e-8 * np.abs(v).max()


def test_dae_inconsistent_initial_velocity():
    sys = gen_synthetic_dae(12, 3, m=2, p=2, seed=1)
    bad = np.ones(12)
    with pytest.raises(ValueError, match="inconsistent"):
        simulate_dae(sys, InputSignal.zero(2), 1.0, 0.01, v0=bad)


def test_compare_identical():
    sys = gen_burgers(8, 0.5)
    traj = simulate_ode(sys, InputSignal.preset_cavity(1), 1.0, 0.01)
    rep = compare(traj, traj)
    assert rep["aggregate_relative_l2"] == 0.0
    assert rep["max_abs"] == 0.0


def test_compare_scaled():
    sys = gen_burgers(8, 0.5)
    traj = simulate_ode(sys, InputSignal.preset_cavity(1), 1.0, 0.01)
    scaled = Trajectory(t=traj.t, states=traj.states,
                        outputs=traj.outputs * (1.0 + 1e-3), inputs=traj.inputs)
    rep = compare(traj, scaled)
    assert rep["aggregate_relative_l2"] == pytest.approx(1e-3, rel=1e-10)


def test_compare_grid_mismatch():
    sys = gen_burgers(8, 0.5)
    a = simulate_ode(sys, InputSignal.zero(1), 1.0, 0.01)
    b = simulate_ode(sys, InputSignal.zero(1), 1.0, 0.02)
    with pytest.raises(ValueError, match="grid"):
        compare(a, b)


def test_trajectory_csv_roundtrip(tmp_path):
    sys = gen_synthetic_dae(10, 2, m=2, p=2, seed=3, quad_scale=0.1)
    traj = simulate_dae(sys, InputSignal.preset_cavity(2), 1.0, 0.01)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    t, u, y, cres = Trajectory.read_csv(path)
    assert np.array_equal(t, traj.t)
    assert np.array_equal(u, traj.inputs)
    assert np.array_equal(y, traj.outputs)
    assert np.array_equal(cres, traj.constraint_residual)


def test_preset_cavity_value_and_derivative():
    u = InputSignal.preset_cavity(2)
    assert np.allclose(u.sample(0.0), 0.0)
    t = 1.3
    w = 2.0 * np.pi / 5.0
    expect = 2.0 * t * t * np.exp(-t / 2.0) * np.sin(w * t)
    assert u.sample(t)[0] == pytest.approx(expect)
    h = 1e-6
    fd = (u.sample(t + h)[0] - u.sample(t - h)[0]) / (2.0 * h)
    assert u.derivative(t)[0] == pytest.approx(fd, abs=1e-8)


def test_table_input_interpolation_and_derivative():
    t = np.linspace(0.0, 2.0, 201)
    U = np.column_stack([np.sin(t), np.cos(t)])
    u = InputSignal.from_table(t, U)
    assert u.sample(0.505)[0] == pytest.approx(np.sin(0.505), abs=1e-4)
    assert u.derivative(1.0)[0] == pytest.approx(np.cos(1.0), abs=1e-3)
