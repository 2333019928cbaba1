import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jetcodesign.dynamics import FlightModel, discretize, linearize
from jetcodesign.mpc import (ControlWeights, FailureReason, MpcConfig, ReferenceWindow, build_qp,
                             mpc_step, save_sim_log, simulate_closed_loop)
from jetcodesign.qp import solve_qp
from jetcodesign.trajectory import ReferenceTrajectory, hover_trajectory

DATA = Path(__file__).parent / "data"


def hover_setup(robot, offset=(0.0, 0.0, 0.0)):
    fm = FlightModel(robot)
    x, u = fm.hover()
    lin = discretize(linearize(fm, x, u, np.zeros(3)), 0.1)
    x = x.copy()
    x[0:3] += offset
    return fm, lin, x, u


def test_qp_dimensions(baseline):
    fm, lin, x, u = hover_setup(baseline)
    qp = build_qp(fm, lin, ControlWeights(), x, ReferenceWindow.constant(np.zeros(3), 10), u)
    assert qp.H.shape == (80, 80) and qp.g.shape == (80,)
    assert np.array_equal(qp.H, qp.H.T)
    assert np.all(np.linalg.eigvalsh(qp.H) > -1e-9 * np.abs(qp.H).max())
    # throttle in [0, 1], joints within their travel
    n_j = fm.n_j
    assert np.all(qp.lower.reshape(10, 8)[:, n_j:] == 0) and np.all(qp.upper.reshape(10, 8)[:, n_j:] == 1)
    assert np.allclose(qp.upper.reshape(10, 8)[:, :n_j], 0.2)


def test_hover_is_a_fixed_point(baseline):
    fm, lin, x, u = hover_setup(baseline)
    u0, sol = mpc_step(fm, lin, ControlWeights(), x, ReferenceWindow.constant(np.zeros(3), 10), u)
    assert sol.optimal and np.abs(u0 - u).max() < 1e-6


def test_input_only_weights_return_hover_inputs(baseline):
    fm, lin, x, u = hover_setup(baseline, offset=(0.3, -0.2, 0.1))
    tiny = ControlWeights(1e-12, 1e-12, 1e-12, 1e-12, 1e-12, 1e-12, 10.0, 100.0)
    qp = build_qp(fm, lin, tiny, x, ReferenceWindow.constant(np.zeros(3), 10), u)
    sol = solve_qp(qp)
    assert sol.optimal and np.abs(sol.z - np.tile(u, 10)).max() < 1e-6


def test_low_com_raises_throttle(baseline):
    fm, lin, x, u = hover_setup(baseline, offset=(0.0, 0.0, -0.1))
    u0, _ = mpc_step(fm, lin, ControlWeights(), x, ReferenceWindow.constant(np.zeros(3), 10), u)
    assert u0[fm.n_j:].mean() > u[fm.n_j:].mean()


def test_heavy_rate_penalty_holds_throttle(baseline):
    fm, lin, x, u = hover_setup(baseline, offset=(0.0, 0.0, -0.1))
    w = dataclasses.replace(ControlWeights(), w_uth=1e9)
    u0, _ = mpc_step(fm, lin, w, x, ReferenceWindow.constant(np.zeros(3), 10), u)
    assert np.abs(u0[fm.n_j:] - u[fm.n_j:]).max() < 1e-5


@settings(max_examples=15)
@given(lam=st.floats(1e-2, 1e2), seed=st.integers(0, 1000))
def test_weight_scaling_leaves_argmin(baseline, lam, seed):
    rng = np.random.default_rng(seed)
    fm, lin, x, u = hover_setup(baseline, offset=tuple(rng.uniform(-0.3, 0.3, 3)))
    w = ControlWeights.from_log10(rng.uniform(-1, 2, 8))
    window = ReferenceWindow.constant(np.zeros(3), 10)
    a = solve_qp(build_qp(fm, lin, w, x, window, u))
    b = solve_qp(build_qp(fm, lin, w.scaled(lam), x, window, u))
    assert a.optimal and b.optimal
    assert np.abs(a.z - b.z).max() < 1e-4


def test_weights_validation():
    with pytest.raises(ValueError):
        ControlWeights(w_x=0.0)
    w = ControlWeights.from_log10(np.zeros(8))
    assert np.all(w.as_array() == 1.0)


def test_hover_regression_against_golden(baseline):
    golden = json.loads((DATA / "hover_golden.json").read_text())
    traj = hover_trajectory((0.0, 0.0, 1.0), 5.0, 0.1)
    r = simulate_closed_loop(baseline, ControlWeights(), traj)
    err = np.linalg.norm(r.states[:, 0:3] - traj.x_ref, axis=1).max()
    assert not r.failed and err < 0.05
    assert len(r) == golden["samples"]
    assert abs(err - golden["max_position_error"]) <= 1e-9 + 1e-6 * golden["max_position_error"]


def test_circuit_tracks(baseline, circuit):
    r = simulate_closed_loop(baseline, ControlWeights(), circuit)
    assert not r.failed and len(r) == len(circuit)
    assert np.linalg.norm(r.states[:, 0:3] - circuit.x_ref, axis=1).max() < 0.5
    assert r.states.shape == (len(r), 26) and r.inputs.shape == (len(r), 8)


def test_teleport_trips_error_threshold(baseline):
    x = np.zeros((30, 3))
    x[15:, 0] = 10.0
    traj = ReferenceTrajectory(0.1, np.arange(30) * 0.1, x, np.zeros_like(x))
    r = simulate_closed_loop(baseline, ControlWeights(), traj)
    assert r.failed and r.failure_reason is FailureReason.ERROR_THRESHOLD and r.failure_step == 15


def test_infeasible_model_fails_at_step_zero(baseline):
    weak = tuple(dataclasses.replace(t, t_max=10.0) for t in baseline.thrusters)
    robot = dataclasses.replace(baseline, thrusters=weak)
    r = simulate_closed_loop(robot, ControlWeights(), hover_trajectory((0, 0, 0), 1.0, 0.1))
    assert r.failed and r.failure_reason is FailureReason.QP_FAILURE
    assert r.failure_step == 0 and len(r) == 0


def test_qp_cap_failure_maps_to_qp_failure(baseline):
    cfg = MpcConfig(qp_max_iter=1)
    traj = hover_trajectory((0, 0, 0), 1.0, 0.1)
    traj.x_ref[1:] += (0.0, 0.0, 0.5)
    r = simulate_closed_loop(baseline, ControlWeights(), traj, cfg)
    assert r.failed and r.failure_reason is FailureReason.QP_FAILURE


def test_closed_loop_is_deterministic(tmp_path, baseline, circuit):
    short = ReferenceTrajectory(0.1, circuit.t[:60], circuit.x_ref[:60], circuit.v_ref[:60])
    a = simulate_closed_loop(baseline, ControlWeights(), short)
    b = simulate_closed_loop(baseline, ControlWeights(), short)
    for name in ("t", "states", "inputs", "forces", "torques"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    save_sim_log(a, tmp_path / "a.csv", 4)
    save_sim_log(b, tmp_path / "b.csv", 4)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
