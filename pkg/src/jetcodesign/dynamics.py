"""Centroidal flight dynamics with turbine lag and tracking-error integrators.

State vector layout (``n_x = 18 + 2 n_p``)::

    x_com(3) | l(3) | phi(3) | w(3) | T(n_p) | T_dot(n_p) | e_x(3) | e_phi(3)

``l`` and ``w`` are the linear and angular momentum in the CoM-centred frame
aligned with the world; ``phi`` is roll-pitch-yaw (ZYX). Inputs are
``u = [delta_s (n_j) | u_th (n_p)]``. World z points up and gravity acts
along ``-z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design_space import GRAVITY, RobotModel, hover_thrust
from .errors import GimbalLock

GIMBAL_MARGIN = 1e-6
DELTA_S_MAX = 0.2


def skew(x) -> np.ndarray:
    """Matrix ``S(x)`` with ``S(x) @ y == cross(x, y)``."""
    return np.array([[0.0, -x[2], x[1]], [x[2], 0.0, -x[0]], [-x[1], x[0], 0.0]])


def rpy_to_matrix(phi) -> np.ndarray:
    """Body-to-world rotation for roll-pitch-yaw angles, ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    cr, sr = math.cos(phi[0]), math.sin(phi[0])
    cp, sp = math.cos(phi[1]), math.sin(phi[1])
    cy, sy = math.cos(phi[2]), math.sin(phi[2])
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rpy_rate_matrix_inv(phi) -> np.ndarray:
    """Map from world-frame angular velocity to roll-pitch-yaw rates."""
    cp = math.cos(phi[1])
    if abs(phi[1]) >= math.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {phi[1]:.6f} rad at singularity")
    sp = math.sin(phi[1])
    cy, sy = math.cos(phi[2]), math.sin(phi[2])
    return np.array([
        [cy / cp, sy / cp, 0.0],
        [-sy, cy, 0.0],
        [cy * sp / cp, sy * sp / cp, 1.0],
    ])


@dataclass(frozen=True)
class StateLayout:
    n_p: int
    n_j: int

    @property
    def n_x(self) -> int:
        return 18 + 2 * self.n_p

    @property
    def n_u(self) -> int:
        return self.n_j + self.n_p

    @property
    def pos(self):
        return slice(0, 3)

    @property
    def mom(self):
        return slice(3, 6)

    @property
    def phi(self):
        return slice(6, 9)

    @property
    def ang(self):
        return slice(9, 12)

    @property
    def thrust(self):
        return slice(12, 12 + self.n_p)

    @property
    def thrust_rate(self):
        return slice(12 + self.n_p, 12 + 2 * self.n_p)

    @property
    def e_x(self):
        return slice(12 + 2 * self.n_p, 15 + 2 * self.n_p)

    @property
    def e_phi(self):
        return slice(15 + 2 * self.n_p, 18 + 2 * self.n_p)

    @property
    def delta_s(self):
        return slice(0, self.n_j)

    @property
    def throttle(self):
        return slice(self.n_j, self.n_j + self.n_p)


@dataclass
class FlightState:
    x_com: np.ndarray
    l: np.ndarray
    phi: np.ndarray
    w: np.ndarray
    T: np.ndarray
    T_dot: np.ndarray
    e_x: np.ndarray
    e_phi: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x_com, self.l, self.phi, self.w, self.T, self.T_dot,
                               self.e_x, self.e_phi]).astype(float)

    @classmethod
    def from_vector(cls, x, n_p: int) -> "FlightState":
        lay = StateLayout(n_p, 0)
        x = np.asarray(x, float)
        return cls(x[lay.pos].copy(), x[lay.mom].copy(), x[lay.phi].copy(), x[lay.ang].copy(),
                   x[lay.thrust].copy(), x[lay.thrust_rate].copy(), x[lay.e_x].copy(),
                   x[lay.e_phi].copy())


@dataclass
class ControlInput:
    delta_s: np.ndarray
    u_th: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.delta_s, self.u_th]).astype(float)

    @classmethod
    def from_vector(cls, u, n_j: int) -> "ControlInput":
        u = np.asarray(u, float)
        return cls(u[:n_j].copy(), u[n_j:].copy())


def _cross_sum(a, b):
    """``sum_i cross(a[i], b[i])``; avoids ``np.cross`` overhead on tiny arrays."""
    return np.array([
        a[:, 1] @ b[:, 2] - a[:, 2] @ b[:, 1],
        a[:, 2] @ b[:, 0] - a[:, 0] @ b[:, 2],
        a[:, 0] @ b[:, 1] - a[:, 1] @ b[:, 0],
    ])


class FlightModel:
    """Array-level view of a :class:`RobotModel` used by the integrator and MPC.

    Holds the stacked thruster geometry so the right-hand side can be
    evaluated without Python loops over thrusters.
    """

    def __init__(self, robot: RobotModel):
        self.robot = robot
        self.mass = robot.mass
        self.n_p = robot.n_thrusters
        self.n_j = robot.n_joints
        self.layout = StateLayout(self.n_p, self.n_j)
        self.a0 = np.array([t.a for t in robot.thrusters])             # n_p x 3
        self.r0 = np.array([t.r for t in robot.thrusters])             # n_p x 3
        self.da = np.array([t.da_ds for t in robot.thrusters])         # n_p x 3 x n_j
        self.dr = np.array([t.dr_ds for t in robot.thrusters])
        self.t_min = np.array([t.t_min for t in robot.thrusters])
        self.t_max = np.array([t.t_max for t in robot.thrusters])
        self.omega_n = np.array([t.omega_n for t in robot.thrusters])
        self.zeta = np.array([t.zeta for t in robot.thrusters])
        self.inertia = robot.inertia
        self.inertia_inv = np.linalg.inv(robot.inertia)
        self.has_joints = bool(np.any(self.da) or np.any(self.dr))

    def thruster_geometry(self, delta_s):
        """Body-frame thrust directions (unit) and arms about the CoM for a joint displacement."""
        if self.has_joints and np.any(delta_s):
            dirs = self.a0 + self.da @ delta_s
            dirs = dirs / np.sqrt(np.einsum("ij,ij->i", dirs, dirs))[:, None]
            arms = self.r0 + self.dr @ delta_s
            return dirs, arms
        return self.a0, self.r0

    def thruster_forces(self, T, phi, delta_s):
        """Per-thruster world-frame forces and world-frame arms, each ``n_p x 3``."""
        R = rpy_to_matrix(phi)
        dirs, arms = self.thruster_geometry(delta_s)
        forces = (dirs * T[:, None]) @ R.T
        return forces, arms @ R.T

    def thrust_wrench(self, T, phi, delta_s):
        """Total thrust force (world) and torque about the CoM (world axes)."""
        forces, arms = self.thruster_forces(np.asarray(T, float), phi, np.asarray(delta_s, float))
        return forces.sum(axis=0), _cross_sum(arms, forces)

    def angular_velocity(self, phi, w):
        """World-frame angular velocity from angular momentum using the rotated inertia."""
        R = rpy_to_matrix(phi)
        return R @ (self.inertia_inv @ (R.T @ w))

    def rhs(self, x, u, x_ref, phi_ref):
        lay = self.layout
        phi = x[6:9]
        T = x[lay.thrust]
        T_dot = x[lay.thrust_rate]
        ds = u[:self.n_j]
        u_th = u[self.n_j:]
        E_inv = rpy_rate_matrix_inv(phi)
        R = rpy_to_matrix(phi)
        dirs, arms = self.thruster_geometry(ds)
        fb = dirs * T[:, None]
        force = R @ fb.sum(axis=0)
        torque = R @ _cross_sum(arms, fb)
        omega = R @ (self.inertia_inv @ (R.T @ x[9:12]))
        out = np.empty_like(x)
        out[0:3] = x[3:6] / self.mass
        out[3:6] = force
        out[5] -= self.mass * GRAVITY
        out[6:9] = E_inv @ omega
        out[9:12] = torque
        out[lay.thrust] = T_dot
        w2 = self.omega_n * self.omega_n
        out[lay.thrust_rate] = w2 * (self.t_max * u_th - T) - 2.0 * self.zeta * self.omega_n * T_dot
        out[lay.e_x] = x[0:3] - x_ref
        out[lay.e_phi] = phi - phi_ref
        return out

    def hover(self, x_com=(0.0, 0.0, 0.0)):
        """Equilibrium state and input at level attitude above ``x_com``."""
        T, u_th = hover_thrust(self.robot)
        x = np.zeros(self.layout.n_x)
        x[0:3] = x_com
        x[self.layout.thrust] = T
        u = np.concatenate([np.zeros(self.n_j), u_th])
        return x, u

    def saturate(self, x):
        """Clamp turbine thrust into its limits, stopping motion into the clamp."""
        lay = self.layout
        T = x[lay.thrust]
        Td = x[lay.thrust_rate]
        low = T < self.t_min
        high = T > self.t_max
        if low.any() or high.any():
            x = x.copy()
            T = np.clip(T, self.t_min, self.t_max)
            Td = np.where((low & (Td < 0)) | (high & (Td > 0)), 0.0, Td)
            x[lay.thrust] = T
            x[lay.thrust_rate] = Td
        return x


def _flight(model) -> FlightModel:
    return model if isinstance(model, FlightModel) else FlightModel(model)


def thrust_wrench(model, T, phi, delta_s):
    """Net thrust force (world) and torque about the CoM (world axes)."""
    return _flight(model).thrust_wrench(T, phi, delta_s)


def dynamics(state, control, model, x_ref, phi_ref=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Time derivative of the flight state.

    ``state`` and ``control`` may be :class:`FlightState`/:class:`ControlInput`
    or flat vectors. Raises :class:`GimbalLock` near ±90° pitch.
    """
    fm = _flight(model)
    x = state.to_vector() if isinstance(state, FlightState) else np.asarray(state, float)
    u = control.to_vector() if isinstance(control, ControlInput) else np.asarray(control, float)
    return fm.rhs(x, u, np.asarray(x_ref, float), np.asarray(phi_ref, float))


def rk4_step(f, t, y, h):
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(state, control, model, x_ref, dt, phi_ref=(0.0, 0.0, 0.0), substeps=5):
    """Advance the state by ``dt`` with the input and reference held constant.

    RK4 with ``substeps`` equal sub-steps; thrust saturation is applied after
    each sub-step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    fm = _flight(model)
    x = state.to_vector() if isinstance(state, FlightState) else np.array(state, float)
    u = control.to_vector() if isinstance(control, ControlInput) else np.asarray(control, float)
    x_ref = np.asarray(x_ref, float)
    phi_ref = np.asarray(phi_ref, float)

    def f(_t, y):
        return fm.rhs(y, u, x_ref, phi_ref)

    h = dt / substeps
    for i in range(substeps):
        x = fm.saturate(rk4_step(f, i * h, x, h))
    return x


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearizedModel:
    """Affine model ``x+ = A x + B u + c`` (discrete) or ``xdot = A x + B u + c``.

    ``dt`` is 0 for a continuous-time model. ``x_ref_op``/``phi_ref_op`` are
    the reference values the drift ``c`` was computed with; the integrator
    rows depend on the reference through ``-I``.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    dt: float
    x_op: np.ndarray
    u_op: np.ndarray
    x_ref_op: np.ndarray
    phi_ref_op: np.ndarray


def linearize(model, x_op, u_op, x_ref, phi_ref=(0.0, 0.0, 0.0), rel_step=1e-6):
    """Continuous-time Jacobians by central differences about ``(x_op, u_op)``.

    Step for component ``i`` is ``rel_step * max(1, |v_i|)``. Returns a
    :class:`LinearizedModel` with ``dt = 0`` and
    ``c = f(op) - A x_op - B u_op``.
    """
    fm = _flight(model)
    x_op = np.asarray(x_op, float)
    u_op = np.asarray(u_op, float)
    x_ref = np.asarray(x_ref, float)
    phi_ref = np.asarray(phi_ref, float)
    f0 = fm.rhs(x_op, u_op, x_ref, phi_ref)
    A = _central_jacobian(lambda v: fm.rhs(v, u_op, x_ref, phi_ref), x_op, rel_step)
    B = _central_jacobian(lambda v: fm.rhs(x_op, v, x_ref, phi_ref), u_op, rel_step)
    c = f0 - A @ x_op - B @ u_op
    return LinearizedModel(A, B, c, 0.0, x_op.copy(), u_op.copy(), x_ref.copy(), phi_ref.copy())


def _central_jacobian(fun, v0, rel_step):
    n = v0.size
    cols = []
    for i in range(n):
        h = rel_step * max(1.0, abs(v0[i]))
        vp = v0.copy()
        vm = v0.copy()
        vp[i] += h
        vm[i] -= h
        cols.append((fun(vp) - fun(vm)) / (vp[i] - vm[i]))
    return np.array(cols).T


def discretize(lin: LinearizedModel, dt: float, method: str = "euler") -> LinearizedModel:
    """Discretize a continuous affine model with forward Euler or exact zero-order hold."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B, c = lin.A, lin.B, lin.c
    n, m = B.shape
    if method == "euler":
        Ad = np.eye(n) + A * dt
        Bd = B * dt
        cd = c * dt
    elif method == "zoh":
        M = np.zeros((n + m + 1, n + m + 1))
        M[:n, :n] = A
        M[:n, n:n + m] = B
        M[:n, n + m] = c
        E = scipy.linalg.expm(M * dt)
        Ad, Bd, cd = E[:n, :n], E[:n, n:n + m], E[:n, n + m]
    else:
        raise ValueError(f"unknown discretization {method!r}")
    return LinearizedModel(Ad, Bd, cd, dt, lin.x_op, lin.u_op, lin.x_ref_op, lin.phi_ref_op)
