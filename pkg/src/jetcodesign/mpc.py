"""Linear MPC over the centroidal flight model and closed-loop simulation.

Stage cost (per predicted step, terminal step included)::

    1/2 w_x |x_com - x_ref|^2 + 1/2 w_l |l - m v_ref|^2
  + 1/2 w_phi |phi - phi_ref|^2 + 1/2 w_omega |w|^2
  + 1/2 w_ds |delta_s|^2 + 1/2 w_uth |u_th[k] - u_th[k-1]|^2
  + w_ex |e_x|^2 + w_ephi |e_phi|^2

The inputs over the horizon are condensed into a single box-constrained QP.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np

from .dynamics import (DELTA_S_MAX, FlightModel, LinearizedModel, discretize, integrate,
                       linearize)
from .errors import DimensionMismatch, GimbalLock, NoEquilibrium, StepFailed
from .qp import QpProblem, QpSolution, QpStatus, scaled_lipschitz, solve_qp
from .trajectory import ReferenceTrajectory

WEIGHT_NAMES = ("w_x", "w_l", "w_phi", "w_omega", "w_ex", "w_ephi", "w_ds", "w_uth")


@dataclass(frozen=True)
class ControlWeights:
    w_x: float = 100.0
    w_l: float = 1.0
    w_phi: float = 100.0
    w_omega: float = 1.0
    w_ex: float = 1.0
    w_ephi: float = 1.0
    w_ds: float = 10.0
    w_uth: float = 100.0

    def __post_init__(self):
        for name in WEIGHT_NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in WEIGHT_NAMES], float)

    @classmethod
    def from_array(cls, values) -> "ControlWeights":
        return cls(*(float(v) for v in values))

    @classmethod
    def from_log10(cls, values) -> "ControlWeights":
        return cls.from_array(10.0 ** np.asarray(values, float))

    def scaled(self, factor: float) -> "ControlWeights":
        return ControlWeights.from_array(self.as_array() * factor)

    def to_dict(self):
        return {n: getattr(self, n) for n in WEIGHT_NAMES}


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    dt: float = 0.1
    relinearize_every: int = 10
    delta_s_max: float = DELTA_S_MAX
    error_threshold: float = 2.5
    qp_max_iter: int = 2000
    discretization: str = "euler"
    substeps: int = 5

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class FailureReason(str, Enum):
    NONE = "None"
    QP_FAILURE = "QpFailure"
    GIMBAL_LOCK = "GimbalLock"
    ERROR_THRESHOLD = "ErrorThreshold"


@dataclass
class ReferenceWindow:
    """Reference samples for the current step and the ``N`` predicted steps.

    ``x_ref`` and ``v_ref`` have ``N + 1`` rows; row 0 is the current sample.
    """

    x_ref: np.ndarray
    v_ref: np.ndarray
    phi_ref: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_trajectory(cls, traj: ReferenceTrajectory, index: int, horizon: int):
        x, v = traj.window(index, horizon + 1)
        return cls(x, v, np.asarray(traj.phi_ref, float))

    @classmethod
    def constant(cls, position, horizon: int):
        x = np.tile(np.asarray(position, float), (horizon + 1, 1))
        return cls(x, np.zeros_like(x))


def _tracked_rows(fm: FlightModel) -> np.ndarray:
    lay = fm.layout
    idx = list(range(0, 12))
    idx += list(range(lay.e_x.start, lay.e_phi.stop))
    return np.array(idx)


def _output_weights(weights: ControlWeights) -> np.ndarray:
    w = weights
    # integral terms carry no 1/2 in the cost, hence the factor 2
    return np.repeat([w.w_x, w.w_l, w.w_phi, w.w_omega, 2 * w.w_ex, 2 * w.w_ephi], 3)


def _reference_sensitivity(fm: FlightModel) -> np.ndarray:
    """d xdot / d (x_ref, phi_ref): exact, the model is affine in the reference."""
    lay = fm.layout
    E = np.zeros((lay.n_x, 6))
    E[lay.e_x, 0:3] = -np.eye(3)
    E[lay.e_phi, 3:6] = -np.eye(3)
    return E


class CondensedModel:
    """Horizon prediction matrices and the weight-dependent Hessian.

    Valid for one discrete linearization and one weight set; the MPC loop
    rebuilds it at every relinearization.
    """

    def __init__(self, fm: FlightModel, lin: LinearizedModel, weights: ControlWeights,
                 horizon: int, delta_s_max: float = DELTA_S_MAX, ref_gain: np.ndarray | None = None):
        if lin.dt <= 0:
            raise DimensionMismatch("CondensedModel needs a discrete-time linearization")
        lay = fm.layout
        n_x, n_u, N = lay.n_x, lay.n_u, horizon
        if lin.A.shape != (n_x, n_x) or lin.B.shape != (n_x, n_u) or lin.c.shape != (n_x,):
            raise DimensionMismatch(
                f"linear model shapes {lin.A.shape}, {lin.B.shape}, {lin.c.shape} do not match n_x={n_x}, n_u={n_u}")
        if N < 1:
            raise DimensionMismatch("horizon must be >= 1")
        self.fm = fm
        self.lin = lin
        self.weights = weights
        self.N = N
        self.n_x, self.n_u = n_x, n_u
        self.ref_gain = lin.dt * _reference_sensitivity(fm) if ref_gain is None else ref_gain

        Ad, Bd = lin.A, lin.B
        # Su[j] maps stacked inputs to predicted state x_{j+1}
        Su = np.zeros((N, n_x, N * n_u))
        Su[0, :, 0:n_u] = Bd
        for j in range(1, N):
            Su[j] = Ad @ Su[j - 1]
            Su[j, :, j * n_u:(j + 1) * n_u] = Bd
        self.Su = Su
        powers = [Ad]
        for _ in range(1, N):
            powers.append(Ad @ powers[-1])
        self.Ad_powers = np.array(powers)            # Ad^(j+1)

        rows = _tracked_rows(fm)
        self.rows = rows
        G = Su[:, rows, :].reshape(N * rows.size, N * n_u)
        wy = np.tile(_output_weights(weights), N)
        self.G = G
        self.wy = wy
        H = G.T @ (G * wy[:, None])

        n_j, n_p = fm.n_j, fm.n_p
        ds_idx = np.concatenate([np.arange(j * n_u, j * n_u + n_j) for j in range(N)])
        th_idx = np.concatenate([np.arange(j * n_u + n_j, (j + 1) * n_u) for j in range(N)])
        H[ds_idx, ds_idx] += weights.w_ds
        D = np.zeros((N * n_p, N * n_u))
        for j in range(N):
            D[j * n_p:(j + 1) * n_p, j * n_u + n_j:(j + 1) * n_u] = np.eye(n_p)
            if j > 0:
                D[j * n_p:(j + 1) * n_p, (j - 1) * n_u + n_j:j * n_u] = -np.eye(n_p)
        H += weights.w_uth * (D.T @ D)
        self.H = 0.5 * (H + H.T)
        self.lipschitz = scaled_lipschitz(self.H)
        self.th_first = np.arange(n_j, n_u)
        self.ds_idx, self.th_idx = ds_idx, th_idx

        lower = np.empty(N * n_u)
        upper = np.empty(N * n_u)
        lower[ds_idx], upper[ds_idx] = -delta_s_max, delta_s_max
        lower[th_idx], upper[th_idx] = 0.0, 1.0
        self.lower, self.upper = lower, upper

    def free_response(self, x0, window: ReferenceWindow) -> np.ndarray:
        """Predicted states ``x_1..x_N`` with all inputs zero (rows: steps)."""
        lin = self.lin
        ref_op = np.concatenate([lin.x_ref_op, lin.phi_ref_op])
        out = np.empty((self.N, self.n_x))
        x = np.asarray(x0, float)
        for j in range(self.N):
            ref_j = np.concatenate([window.x_ref[j], window.phi_ref])
            x = lin.A @ x + lin.c + self.ref_gain @ (ref_j - ref_op)
            out[j] = x
        return out

    def qp(self, x0, window: ReferenceWindow, u_prev) -> QpProblem:
        N = self.N
        if window.x_ref.shape != (N + 1, 3) or window.v_ref.shape != (N + 1, 3):
            raise DimensionMismatch(
                f"reference window must hold {N + 1} samples, got {window.x_ref.shape[0]}")
        if np.asarray(x0).shape != (self.n_x,):
            raise DimensionMismatch(f"state has shape {np.shape(x0)}, expected ({self.n_x},)")
        free = self.free_response(x0, window)
        y_free = free[:, self.rows]
        y_ref = np.zeros_like(y_free)
        y_ref[:, 0:3] = window.x_ref[1:]
        y_ref[:, 3:6] = self.fm.mass * window.v_ref[1:]
        y_ref[:, 6:9] = window.phi_ref
        h = (y_free - y_ref).reshape(-1)
        g = self.G.T @ (self.wy * h)
        u_prev = np.asarray(u_prev, float)
        g[self.th_first] -= self.weights.w_uth * u_prev[self.fm.n_j:]
        return QpProblem(self.H, g, self.lower, self.upper, self.lipschitz)


def build_qp(fm: FlightModel, lin: LinearizedModel, weights: ControlWeights, state,
             window: ReferenceWindow, u_prev, delta_s_max: float = DELTA_S_MAX) -> QpProblem:
    """Condensed QP over the horizon implied by ``window`` (``N = len - 1``)."""
    N = window.x_ref.shape[0] - 1
    return CondensedModel(fm, lin, weights, N, delta_s_max).qp(state, window, u_prev)


def mpc_step(fm: FlightModel, lin: LinearizedModel, weights: ControlWeights, state,
             window: ReferenceWindow, u_prev, warm_start=None, config: MpcConfig | None = None,
             condensed: CondensedModel | None = None):
    """Solve one receding-horizon problem and return ``(first input, solution)``.

    Raises :class:`StepFailed` unless the QP reports ``Optimal``.
    """
    config = config or MpcConfig()
    if condensed is None:
        condensed = CondensedModel(fm, lin, weights, window.x_ref.shape[0] - 1, config.delta_s_max)
    qp = condensed.qp(state, window, u_prev)
    if warm_start is None:
        warm_start = np.tile(np.asarray(u_prev, float), condensed.N)
    sol = solve_qp(qp, warm_start=warm_start, max_iter=config.qp_max_iter)
    if sol.status is not QpStatus.OPTIMAL:
        raise StepFailed(sol.status.value, sol.iterations)
    return sol.z[:fm.layout.n_u].copy(), sol


@dataclass
class SimResult:
    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    forces: np.ndarray
    torques: np.ndarray
    failed: bool
    failure_reason: FailureReason
    failure_step: int | None = None
    qp_iterations: int = 0

    def __len__(self):
        return self.t.size


def _empty_result(fm: FlightModel, reason: FailureReason) -> SimResult:
    lay = fm.layout
    return SimResult(np.zeros(0), np.zeros((0, lay.n_x)), np.zeros((0, lay.n_u)),
                     np.zeros((0, 3)), np.zeros((0, 3)), True, reason, 0)


def simulate_closed_loop(model, weights: ControlWeights, trajectory: ReferenceTrajectory,
                         config: MpcConfig | None = None) -> SimResult:
    """Fly ``trajectory`` under MPC, starting in hover at its first sample.

    Logs one row per reference sample (state, applied input, thrust wrench).
    Stops at the first step where the QP fails, propagation hits gimbal
    lock, or the CoM is farther than ``error_threshold`` from the reference.
    """
    config = config or MpcConfig()
    fm = model if isinstance(model, FlightModel) else FlightModel(model)
    lay = fm.layout
    try:
        x, u_prev = fm.hover(trajectory.x_ref[0])
    except NoEquilibrium:
        return _empty_result(fm, FailureReason.QP_FAILURE)

    M = len(trajectory)
    states, inputs, forces, torques = [], [], [], []
    phi_ref = np.asarray(trajectory.phi_ref, float)
    reason = FailureReason.NONE
    fail_step = None
    condensed = None
    warm = None
    qp_iters = 0
    for i in range(M):
        if np.linalg.norm(x[0:3] - trajectory.x_ref[i]) > config.error_threshold:
            states.append(x)
            inputs.append(u_prev)
            f, tau = fm.thrust_wrench(x[lay.thrust], x[6:9], u_prev[:fm.n_j])
            forces.append(f)
            torques.append(tau)
            reason, fail_step = FailureReason.ERROR_THRESHOLD, i
            break
        if i == M - 1:
            u = u_prev
        else:
            try:
                if condensed is None or i % config.relinearize_every == 0:
                    lin = linearize(fm, x, u_prev, trajectory.x_ref[i], phi_ref)
                    lin = discretize(lin, config.dt, config.discretization)
                    condensed = CondensedModel(fm, lin, weights, config.horizon, config.delta_s_max)
                    warm = None
                window = ReferenceWindow.from_trajectory(trajectory, i, config.horizon)
                u, sol = mpc_step(fm, lin, weights, x, window, u_prev, warm, config, condensed)
                qp_iters += sol.iterations
                warm = np.concatenate([sol.z[lay.n_u:], sol.z[-lay.n_u:]])
            except StepFailed:
                reason, fail_step = FailureReason.QP_FAILURE, i
            except GimbalLock:
                reason, fail_step = FailureReason.GIMBAL_LOCK, i
        if reason is not FailureReason.NONE:
            break
        states.append(x)
        inputs.append(u)
        f, tau = fm.thrust_wrench(x[lay.thrust], x[6:9], u[:fm.n_j])
        forces.append(f)
        torques.append(tau)
        if i == M - 1:
            break
        try:
            x = integrate(x, u, fm, trajectory.x_ref[i], config.dt, phi_ref, config.substeps)
        except GimbalLock:
            reason, fail_step = FailureReason.GIMBAL_LOCK, i + 1
            break
        if not np.all(np.isfinite(x)):
            reason, fail_step = FailureReason.GIMBAL_LOCK, i + 1
            break
        u_prev = u

    n = len(states)
    return SimResult(
        t=trajectory.t[:n].copy(),
        states=np.array(states).reshape(n, lay.n_x),
        inputs=np.array(inputs).reshape(n, lay.n_u),
        forces=np.array(forces).reshape(n, 3),
        torques=np.array(torques).reshape(n, 3),
        failed=reason is not FailureReason.NONE,
        failure_reason=reason,
        failure_step=fail_step,
        qp_iterations=qp_iters,
    )


def save_sim_log(result: SimResult, path, n_j: int):
    """Debug dump: one CSV row per logged sample."""
    n_x = result.states.shape[1]
    n_p = (n_x - 18) // 2
    names = (["t", "x", "y", "z", "lx", "ly", "lz", "roll", "pitch", "yaw", "wx", "wy", "wz"]
             + [f"T{k}" for k in range(n_p)] + [f"Tdot{k}" for k in range(n_p)]
             + ["ex_x", "ex_y", "ex_z", "ephi_r", "ephi_p", "ephi_y"]
             + [f"ds{j}" for j in range(n_j)] + [f"uth{k}" for k in range(n_p)]
             + ["Fx", "Fy", "Fz", "tau_x", "tau_y", "tau_z"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(result.t, result.states, result.inputs, result.forces, result.torques):
            writer.writerow([repr(float(row[0]))] + [repr(float(v)) for part in row[1:] for v in part])
