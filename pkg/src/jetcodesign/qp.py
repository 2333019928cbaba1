"""Box-constrained convex QP solver.

Solves ``min 1/2 z'Hz + g'z  s.t.  lower <= z <= upper`` with ``H`` symmetric
positive semidefinite. The core iteration is Nesterov-accelerated projected
gradient on a Jacobi-rescaled problem (diagonal scaling keeps the feasible set
a box, so projection stays exact), with gradient-based restarts. Every few
iterations the iterate seeds a primal-dual active-set pass; if that cycles,
a primal active-set method (finite, monotone) is run once from the same
point. A refined point is returned only if it certifies optimality, and
every refinement step counts as an iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class QpStatus(str, Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    # largest eigenvalue of the Jacobi-scaled H; cached by callers that reuse H
    scaled_lipschitz: float | None = None

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def gradient(self, z) -> np.ndarray:
        return self.H @ z + self.g


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    iterations: int
    status: QpStatus

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def projected_gradient(z, grad, lower, upper, atol=1e-12):
    """Gradient components that still admit descent without leaving the box."""
    pg = grad.copy()
    at_lower = z <= lower + atol
    at_upper = z >= upper - atol
    pg[at_lower] = np.minimum(grad[at_lower], 0.0)
    pg[at_upper] = np.maximum(grad[at_upper], 0.0)
    return pg


def kkt_residual(qp: QpProblem, z) -> float:
    """Largest violation of the box-QP optimality conditions at ``z``."""
    return float(np.max(np.abs(projected_gradient(z, qp.gradient(z), qp.lower, qp.upper)), initial=0.0))


def _active_set(H, g, lower, upper, z, tol, max_steps=15):
    """Primal-dual active-set iteration from ``z``.

    Each step fixes variables whose dual sign says they sit at a bound and
    solves exactly for the rest. Returns ``(z, steps)`` with ``z`` ``None``
    on cycling or if no certificate is reached.
    """
    diag = np.maximum(np.diag(H), 1e-12)
    seen = set()
    z = z.copy()
    for step in range(1, max_steps + 1):
        grad = H @ z + g
        trial = z - grad / diag
        at_lower = trial < lower
        at_upper = trial > upper
        key = (at_lower.tobytes(), at_upper.tobytes())
        if key in seen:
            return None, step
        seen.add(key)
        fixed = at_lower | at_upper
        free = ~fixed
        z_new = np.where(at_lower, lower, np.where(at_upper, upper, z))
        if free.any():
            rhs = -(g[free] + H[np.ix_(free, fixed)] @ z_new[fixed])
            try:
                z_new[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                return None, step
        z = np.clip(z_new, lower, upper)
        pg_norm = np.linalg.norm(projected_gradient(z, H @ z + g, lower, upper))
        if pg_norm < 1e-3 * tol:
            return z, step
    return None, max_steps


def _primal_active_set(H, g, lower, upper, z, tol, max_steps=None):
    """Primal active-set method started from the feasible point ``z``.

    The working set starts as the bounds ``z`` touches with outward-pointing
    gradient. Each step either takes the (possibly blocked) Newton step on
    the free variables or, at a stationary point of the free block, releases
    the bound with the most wrong-signed multiplier. Returns ``(z, steps)``
    with ``z`` ``None`` if it did not certify.
    """
    n = g.size
    max_steps = max_steps or 4 * n + 10
    z = np.clip(z, lower, upper)
    grad = H @ z + g
    fix_lo = (z <= lower) & (grad > 0)
    fix_hi = (z >= upper) & (grad < 0)
    z = np.where(fix_lo, lower, np.where(fix_hi, upper, z))
    stationary = False   # free block minimized exactly by the last full step
    for step in range(1, max_steps + 1):
        grad = H @ z + g
        if stationary:
            wrong = np.where(fix_lo, -grad, 0.0) + np.where(fix_hi, grad, 0.0)
            j = int(np.argmax(wrong))
            if wrong[j] <= 0.0:
                pg_norm = np.linalg.norm(projected_gradient(z, grad, lower, upper))
                return (z if pg_norm < tol else None), step
            fix_lo[j] = fix_hi[j] = False
            stationary = False
            continue
        free = ~(fix_lo | fix_hi)
        if not free.any():
            stationary = True
            continue
        p = np.zeros(n)
        try:
            p[free] = np.linalg.solve(H[np.ix_(free, free)], -grad[free])
        except np.linalg.LinAlgError:
            return None, step
        with np.errstate(divide="ignore", invalid="ignore"):
            to_lo = np.where(free & (p < 0), (lower - z) / p, np.inf)
            to_hi = np.where(free & (p > 0), (upper - z) / p, np.inf)
        ratio = np.minimum(to_lo, to_hi)
        j = int(np.argmin(ratio))
        alpha = min(1.0, max(float(ratio[j]), 0.0))
        z = np.clip(z + alpha * p, lower, upper)
        if alpha < 1.0:
            if to_lo[j] <= to_hi[j]:
                fix_lo[j] = True
                z[j] = lower[j]
            else:
                fix_hi[j] = True
                z[j] = upper[j]
        else:
            stationary = True
    return None, max_steps


def jacobi_scaling(H) -> np.ndarray:
    diag = np.diag(H)
    if not np.any(diag > 0):
        return np.ones(diag.size)
    keep = diag > 1e-12 * diag.max()
    return np.where(keep, 1.0 / np.sqrt(np.where(keep, diag, 1.0)), 1.0)


def scaled_lipschitz(H) -> float:
    """Gradient Lipschitz constant of the Jacobi-scaled problem."""
    H = np.asarray(H, float)
    d = jacobi_scaling(H)
    return float(np.linalg.eigvalsh(H * d[:, None] * d[None, :])[-1])


def solve_qp(qp: QpProblem, warm_start=None, max_iter: int = 2000, rtol: float = 1e-6,
             polish_every: int = 10) -> QpSolution:
    """Solve a box-constrained QP.

    Stops with ``Optimal`` once the projected-gradient norm drops below
    ``rtol * (1 + |g|)``, ``MaxIter`` after ``max_iter`` iterations, and
    returns ``Infeasible`` immediately when some ``lower > upper``.
    """
    H = np.asarray(qp.H, float)
    g = np.asarray(qp.g, float)
    lower = np.asarray(qp.lower, float)
    upper = np.asarray(qp.upper, float)
    n = g.size
    if np.any(lower > upper):
        return QpSolution(np.clip(np.zeros(n), lower, upper), float("nan"), 0, QpStatus.INFEASIBLE)
    tol = rtol * (1.0 + np.linalg.norm(g))

    z = np.zeros(n) if warm_start is None else np.asarray(warm_start, float).copy()
    z = np.clip(z, lower, upper)
    grad = H @ z + g
    if np.linalg.norm(projected_gradient(z, grad, lower, upper)) < tol:
        return QpSolution(z, qp.objective(z), 0, QpStatus.OPTIMAL)

    d = jacobi_scaling(H)
    Hs = H * d[:, None] * d[None, :]
    gs = g * d
    ls, us = lower / d, upper / d
    lip = qp.scaled_lipschitz if qp.scaled_lipschitz is not None else scaled_lipschitz(H)
    if lip <= 0.0:
        # H == 0: linear objective, minimized at the box corner
        z = np.where(g > 0, lower, np.where(g < 0, upper, z))
        z = np.where(np.isfinite(z), z, 0.0)
        status = QpStatus.OPTIMAL if np.all(np.isfinite(z)) else QpStatus.MAX_ITER
        return QpSolution(z, qp.objective(z), 0, status)
    step = 1.0 / lip

    y = z / d
    y_prev = y.copy()
    v = y.copy()
    t = 1.0
    it = 0
    used = 0  # refinement steps, counted against max_iter
    tried_exact = False
    for it in range(1, max_iter + 1):
        grad_s = Hs @ v + gs
        y_new = np.clip(v - step * grad_s, ls, us)
        # gradient restart: drop momentum when it points uphill
        if (v - y_new) @ (y_new - y) > 0.0:
            t = 1.0
            v = y.copy()
            grad_s = Hs @ v + gs
            y_new = np.clip(v - step * grad_s, ls, us)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        v = y_new + ((t - 1.0) / t_new) * (y_new - y)
        y_prev, y, t = y, y_new, t_new

        z = y * d
        grad = H @ z + g
        pg_norm = np.linalg.norm(projected_gradient(z, grad, lower, upper))
        budget = max_iter - it - used
        if budget > 0 and (it == 1 or it % polish_every == 0 or pg_norm < tol):
            zp, steps = _active_set(H, g, lower, upper, z, tol, min(15, budget))
            used += steps
            budget -= steps
            if zp is None and not tried_exact and budget > 0:
                tried_exact = True
                zp, steps = _primal_active_set(H, g, lower, upper, z, tol, min(4 * n + 10, budget))
                used += steps
            if zp is not None:
                return QpSolution(zp, qp.objective(zp), it + used, QpStatus.OPTIMAL)
        if pg_norm < tol:
            return QpSolution(z, qp.objective(z), it + used, QpStatus.OPTIMAL)
        if it + used >= max_iter:
            break
    return QpSolution(z, qp.objective(z), it + used, QpStatus.MAX_ITER)
