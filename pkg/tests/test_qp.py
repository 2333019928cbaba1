from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jetcodesign.qp import QpProblem, QpStatus, kkt_residual, projected_gradient, solve_qp

from oracles import coordinate_descent_qp, random_psd

DATA = Path(__file__).parent / "data"


def kkt_holds(qp, z, tol=1e-6):
    """Coordinatewise box-QP optimality, written out directly."""
    grad = qp.H @ z + qp.g
    for i, gi in enumerate(grad):
        if z[i] <= qp.lower[i] + 1e-12:
            ok = gi >= -tol
        elif z[i] >= qp.upper[i] - 1e-12:
            ok = gi <= tol
        else:
            ok = abs(gi) <= tol
        if not ok:
            return False
    return np.all(z >= qp.lower) and np.all(z <= qp.upper)


def random_qp(rng, n):
    kind = rng.integers(3)
    H = random_psd(rng, n, rank=int(rng.integers(1, n + 1)) if kind == 1 else None,
                   cond=10.0 ** rng.uniform(2, 6) if kind == 2 else None)
    g = rng.normal(size=n) * 5
    lo = -rng.uniform(0.1, 2.0, n)
    hi = rng.uniform(0.1, 2.0, n)
    return QpProblem(H, g, lo, hi)


def test_unconstrained_minimum():
    qp = QpProblem(np.eye(2), np.array([-1.0, -1.0]), np.full(2, -10.0), np.full(2, 10.0))
    sol = solve_qp(qp)
    assert sol.status is QpStatus.OPTIMAL
    assert np.allclose(sol.z, [1, 1], atol=1e-8) and abs(sol.objective + 1) < 1e-12


def test_clipped_minimum():
    qp = QpProblem(np.eye(2), np.array([-1.0, -1.0]), np.full(2, -10.0), np.full(2, 0.5))
    sol = solve_qp(qp)
    assert sol.optimal and np.allclose(sol.z, [0.5, 0.5])


def test_empty_box_is_infeasible():
    sol = solve_qp(QpProblem(np.eye(1), np.zeros(1), np.array([1.0]), np.array([0.0])))
    assert sol.status is QpStatus.INFEASIBLE


def test_zero_hessian_goes_to_corner():
    qp = QpProblem(np.zeros((3, 3)), np.array([1.0, -1.0, 0.0]), -np.ones(3), 2 * np.ones(3))
    sol = solve_qp(qp)
    assert sol.optimal and np.allclose(sol.z, [-1, 2, 0])


def test_iteration_cap_is_respected():
    d = np.load(DATA / "mpc_qp_2.npz")
    qp = QpProblem(d["H"], d["g"], d["lower"], d["upper"])
    for cap in (1, 5, 20):
        sol = solve_qp(qp, warm_start=d["warm_start"], max_iter=cap)
        assert sol.status is QpStatus.MAX_ITER and sol.iterations <= cap
        assert np.all(sol.z >= qp.lower) and np.all(sol.z <= qp.upper)


def test_projected_gradient_masks_blocked_directions():
    pg = projected_gradient(np.array([0.0, 1.0, 0.5]), np.array([1.0, -1.0, 2.0]),
                            np.zeros(3), np.ones(3))
    assert np.array_equal(pg, [0.0, 0.0, 2.0])


def test_random_qps_certified_and_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(1, 41))
        qp = random_qp(rng, n)
        sol = solve_qp(qp)
        assert sol.optimal
        assert kkt_holds(qp, sol.z)
        ref = coordinate_descent_qp(qp.H, qp.g, qp.lower, qp.upper)
        f_ref = qp.objective(ref)
        assert abs(sol.objective - f_ref) <= 1e-5 * max(1.0, abs(f_ref))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 25))
def test_optimal_implies_kkt(seed, n):
    rng = np.random.default_rng(seed)
    qp = random_qp(rng, n)
    sol = solve_qp(qp, warm_start=rng.normal(size=n))
    assert sol.optimal
    assert kkt_residual(qp, sol.z) < 1e-6 * (1 + np.linalg.norm(qp.g))
    assert kkt_holds(qp, sol.z)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 1e3))
def test_positive_scaling_leaves_argmin(seed, lam):
    rng = np.random.default_rng(seed)
    qp = random_qp(rng, 12)
    qp.H = qp.H + 0.5 * np.eye(12)   # strictly convex: unique argmin
    a = solve_qp(qp)
    b = solve_qp(QpProblem(lam * qp.H, lam * qp.g, qp.lower, qp.upper))
    assert a.optimal and b.optimal
    assert np.allclose(a.z, b.z, atol=1e-6)


@pytest.mark.parametrize("name", ["mpc_qp_1.npz", "mpc_qp_2.npz"])
def test_ill_conditioned_mpc_problems(name):
    # condensed MPC problems that stalled a plain first-order method
    d = np.load(DATA / name)
    qp = QpProblem(d["H"], d["g"], d["lower"], d["upper"])
    sol = solve_qp(qp, warm_start=d["warm_start"])
    assert sol.optimal and sol.iterations < 2000
    assert kkt_holds(qp, sol.z, tol=1e-6 * (1 + np.linalg.norm(qp.g)))
