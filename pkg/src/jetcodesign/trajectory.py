"""Minimum-jerk reference trajectory through waypoints."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateDuration, MalformedFile


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float, float]
    direction_cue: tuple[float, float, float] = (1.0, 0.0, 0.0)
    dwell_speed: float = 0.0

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.direction_cue))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction_cue must be unit length, got norm {norm}")
        if self.dwell_speed < 0:
            raise ValueError("dwell_speed must be non-negative")

    @property
    def velocity(self) -> np.ndarray:
        return self.dwell_speed * np.asarray(self.direction_cue, float)

    def to_dict(self):
        return {"position": list(self.position), "direction_cue": list(self.direction_cue),
                "dwell_speed": self.dwell_speed}

    @classmethod
    def from_dict(cls, d) -> "Waypoint":
        cue = np.asarray(d.get("direction_cue", (1.0, 0.0, 0.0)), float)
        cue = cue / np.linalg.norm(cue)
        return cls(tuple(float(v) for v in d["position"]), tuple(float(v) for v in cue),
                   float(d.get("dwell_speed", 0.0)))


def min_jerk_segment(p0, p1, v0, v1, a0, a1, T: float) -> np.ndarray:
    """Quintic coefficients (ascending powers of t), one row per axis.

    Solves the 6x6 boundary system for position, velocity and acceleration
    at ``t = 0`` and ``t = T``.
    """
    if not T > 0:
        raise DegenerateDuration(f"segment duration must be positive, got {T}")
    M = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ], dtype=float)
    rhs = np.array([p0, v0, a0, p1, v1, a1], dtype=float)   # 6 x 3
    return np.linalg.solve(M, rhs).T


def poly_eval(coeffs: np.ndarray, t, order: int = 0) -> np.ndarray:
    """Evaluate the ``order``-th derivative of per-axis polynomials at ``t``."""
    c = np.asarray(coeffs, float)
    for _ in range(order):
        c = c[:, 1:] * np.arange(1, c.shape[1])
    t = np.atleast_1d(np.asarray(t, float))
    powers = t[:, None] ** np.arange(c.shape[1])[None, :]
    return powers @ c.T


@dataclass(frozen=True)
class ReferenceTrajectory:
    dt: float
    t: np.ndarray        # (M,)
    x_ref: np.ndarray    # (M, 3)
    v_ref: np.ndarray    # (M, 3)
    phi_ref: np.ndarray = np.zeros(3)

    def __len__(self):
        return self.t.size

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def window(self, start: int, count: int):
        """Samples ``start .. start+count-1``, repeating the final sample past the end."""
        idx = np.minimum(np.arange(start, start + count), self.t.size - 1)
        return self.x_ref[idx], self.v_ref[idx]


def segment_durations_from_speed(waypoints: Sequence[Waypoint], cruise_speed: float,
                                 min_duration: float = 1.0) -> list[float]:
    """Segment times as straight-line distance over cruise speed, floored at ``min_duration``."""
    out = []
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        dist = float(np.linalg.norm(np.subtract(b.position, a.position)))
        out.append(max(dist / cruise_speed, min_duration))
    return out


def build_trajectory(waypoints: Sequence[Waypoint], segment_durations: Sequence[float],
                     dt: float, phi_ref=(0.0, 0.0, 0.0)) -> ReferenceTrajectory:
    """Concatenate rest-acceleration quintic segments and sample them every ``dt``.

    Segment boundary velocities are ``dwell_speed * direction_cue`` and
    boundary accelerations are zero, so the concatenation is C2. Samples run
    from ``t = 0`` to ``ceil(T_total / dt) * dt``; past the last waypoint the
    final state is held.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    if len(segment_durations) != len(waypoints) - 1:
        raise ValueError("need one duration per segment")
    if not dt > 0:
        raise ValueError("dt must be positive")
    zero = np.zeros(3)
    coeffs = []
    for a, b, T in zip(waypoints[:-1], waypoints[1:], segment_durations):
        coeffs.append(min_jerk_segment(a.position, b.position, a.velocity, b.velocity, zero, zero, T))
    starts = np.concatenate([[0.0], np.cumsum(segment_durations)])
    total = float(starts[-1])
    count = int(math.ceil(total / dt - 1e-9)) + 1
    t = np.arange(count) * dt
    x = np.empty((count, 3))
    v = np.empty((count, 3))
    seg = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(coeffs) - 1)
    for s, c in enumerate(coeffs):
        mask = seg == s
        if not mask.any():
            continue
        local = np.minimum(t[mask] - starts[s], segment_durations[s])
        x[mask] = poly_eval(c, local)
        v[mask] = poly_eval(c, local, order=1)
    # samples at or beyond the end hold the final waypoint exactly
    past = t >= total - 1e-12
    x[past] = waypoints[-1].position
    v[past] = waypoints[-1].velocity
    x[0] = waypoints[0].position
    v[0] = waypoints[0].velocity
    return ReferenceTrajectory(dt=float(dt), t=t, x_ref=x, v_ref=v,
                               phi_ref=np.asarray(phi_ref, float))


def hover_trajectory(position, duration: float, dt: float) -> ReferenceTrajectory:
    wp = Waypoint(tuple(float(p) for p in position))
    return build_trajectory([wp, wp], [duration], dt)


def default_waypoints(cruise_speed: float = 1.0) -> list[Waypoint]:
    """Five-gate closed circuit inside a 10 x 10 x 3 m volume, rest to rest.

    A stand-in course; gates are visited at ``cruise_speed`` along the local
    tangent.
    """
    gates = np.array([
        [0.0, 0.0, 1.0],
        [4.0, 1.0, 1.5],
        [7.0, 4.0, 2.5],
        [4.0, 7.0, 2.0],
        [0.5, 5.0, 1.5],
        [0.0, 0.0, 1.0],
    ])
    out = []
    for i, p in enumerate(gates):
        if i == 0 or i == len(gates) - 1:
            nxt = gates[1] - gates[0] if i == 0 else gates[-1] - gates[-2]
            cue = nxt / np.linalg.norm(nxt)
            speed = 0.0
        else:
            tangent = gates[i + 1] - gates[i - 1]
            cue = tangent / np.linalg.norm(tangent)
            speed = cruise_speed
        out.append(Waypoint(tuple(p), tuple(cue), speed))
    return out


def load_waypoints(path) -> list[Waypoint]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["waypoints"]
    return [Waypoint.from_dict(d) for d in data]


TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz")


def save_trajectory_csv(traj: ReferenceTrajectory, path, provenance: dict | None = None):
    """Write ``t, x, y, z, vx, vy, vz`` rows; floats use round-trip repr.

    Provenance, when given, goes in a leading ``#`` comment line.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if provenance is not None:
            fh.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for t, x, v in zip(traj.t, traj.x_ref, traj.v_ref):
            writer.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in v])


def load_trajectory_csv(path):
    """Read a trajectory CSV. Returns ``(trajectory, provenance_or_None)``."""
    provenance = None
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = None
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                try:
                    provenance = json.loads(line[1:])
                except json.JSONDecodeError:
                    raise MalformedFile("bad provenance comment", line=lineno) from None
                continue
            fields = next(csv.reader([line]))
            if header is None:
                if tuple(fields) != TRAJECTORY_COLUMNS:
                    raise MalformedFile(f"unexpected header {fields}", line=lineno)
                header = fields
                continue
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise MalformedFile("non-numeric field", line=lineno) from None
            if len(rows[-1]) != len(TRAJECTORY_COLUMNS):
                raise MalformedFile("wrong column count", line=lineno)
    if len(rows) < 1:
        raise MalformedFile("no samples")
    data = np.array(rows)
    dt = float(data[1, 0] - data[0, 0]) if len(rows) > 1 else 0.1
    traj = ReferenceTrajectory(dt=dt, t=data[:, 0], x_ref=data[:, 1:4], v_ref=data[:, 4:7])
    return traj, provenance
