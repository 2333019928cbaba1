"""Fly the reference circuit with the baseline body under three MPC weight sets.

Shows how the eight weights trade tracking error against thrust work, then
saves the trajectory plot for the last run.

    python demos/fly_the_circuit.py [out.svg]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from jetcodesign.design_space import PARAM_NAMES, GeometricParams, build_model
from jetcodesign.dynamics import FlightModel
from jetcodesign.evaluation import energy, power_log, tracking_mse
from jetcodesign.mpc import ControlWeights, simulate_closed_loop
from jetcodesign.trajectory import build_trajectory, default_waypoints, segment_durations_from_speed

out = sys.argv[1] if len(sys.argv) > 1 else "circuit.svg"

robot = build_model(GeometricParams(**{n: 0.0 for n in PARAM_NAMES}), model_id=0)
fm = FlightModel(robot)
waypoints = default_waypoints()
traj = build_trajectory(waypoints, segment_durations_from_speed(waypoints, 1.0), 0.1)
print(f"circuit: {len(waypoints)} waypoints, {traj.duration:.1f} s, {len(traj)} samples")

weight_sets = {
    "default": ControlWeights(),
    "loose position": ControlWeights(w_x=1.0, w_phi=10.0),
    "stiff position": ControlWeights(w_x=1e4, w_ex=100.0, w_uth=10.0),
}
for name, w in weight_sets.items():
    r = simulate_closed_loop(fm, w, traj)
    if r.failed:
        print(f"{name:15s} failed at step {r.failure_step}: {r.failure_reason.value}")
        continue
    mse = tracking_mse(r.states[:, 0:3], traj.x_ref)
    e = energy(power_log(fm, r), 0.1)
    print(f"{name:15s} MSE {mse:.2e} m^2   energy {e:8.1f} J   QP iterations {r.qp_iterations}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(traj.x_ref[:, 0], traj.x_ref[:, 1], "k--", label="reference")
ax1.plot(r.states[:, 0], r.states[:, 1], label="flown")
ax1.scatter([w.position[0] for w in waypoints], [w.position[1] for w in waypoints], c="C3", zorder=3)
ax1.set_xlabel("x [m]")
ax1.set_ylabel("y [m]")
ax1.set_aspect("equal")
ax1.legend()
ax2.plot(r.t, r.states[:, 12:16])
ax2.set_xlabel("t [s]")
ax2.set_ylabel("turbine thrust [N]")
fig.tight_layout()
fig.savefig(out)
print(f"plot -> {out}")
