"""Geometric design space of the jet-powered humanoid.

Covers the eight Table-style parameter ranges, Uniform Latin Hypercube
sampling snapped to the step grid, the analytic mass-property surrogate that
turns a parameter vector into a rigid-body flight model, a rule-based
feasibility filter, and the indexed model registry.

Frames: body frame is x forward, y left, z up, origin at the pelvis.
Angles are degrees and lengths millimetres at the parameter level; everything
inside :class:`RobotModel` is SI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import GridExhausted, IdOutOfRange, InvalidRange, MalformedFile, NoEquilibrium

GRAVITY = 9.81

PARAM_NAMES = (
    "jet_angle",
    "jet_offset",
    "jet_height",
    "forearm_len",
    "shoulder_width",
    "hip_distance",
    "ankle_height",
    "foot_length",
)


@dataclass(frozen=True)
class ParameterRange:
    name: str
    min: float
    max: float
    step: float

    @property
    def levels(self) -> int:
        """Number of grid values in the range."""
        return int(round((self.max - self.min) / self.step)) + 1

    def validate(self):
        if not (self.step > 0):
            raise InvalidRange(f"{self.name}: step must be positive, got {self.step}")
        if self.min > self.max:
            raise InvalidRange(f"{self.name}: min {self.min} > max {self.max}")
        ratio = (self.max - self.min) / self.step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise InvalidRange(f"{self.name}: span is not a multiple of step {self.step}")

    def value(self, level: int) -> float:
        return float(self.min + level * self.step)

    def on_grid(self, value: float) -> bool:
        if value < self.min - 1e-9 or value > self.max + 1e-9:
            return False
        k = (value - self.min) / self.step
        return abs(k - round(k)) < 1e-9

    def to_dict(self):
        return {"name": self.name, "min": self.min, "max": self.max, "step": self.step}


TABLE_I_RANGES = (
    ParameterRange("jet_angle", 0.0, 14.0, 2.0),
    ParameterRange("jet_offset", 0.0, 30.0, 5.0),
    ParameterRange("jet_height", 0.0, 30.0, 5.0),
    ParameterRange("forearm_len", 0.0, 40.0, 5.0),
    ParameterRange("shoulder_width", 0.0, 50.0, 5.0),
    ParameterRange("hip_distance", 0.0, 50.0, 5.0),
    ParameterRange("ankle_height", 0.0, 50.0, 5.0),
    ParameterRange("foot_length", 0.0, 100.0, 10.0),
)


@dataclass(frozen=True)
class GeometricParams:
    """The eight design variables (jet_angle in degrees, the rest in mm)."""

    jet_angle: float = 0.0
    jet_offset: float = 0.0
    jet_height: float = 0.0
    forearm_len: float = 0.0
    shoulder_width: float = 0.0
    hip_distance: float = 0.0
    ankle_height: float = 0.0
    foot_length: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "GeometricParams":
        if len(values) != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    def to_dict(self):
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def within(self, ranges: Sequence[ParameterRange]) -> bool:
        return all(r.on_grid(v) for r, v in zip(ranges, self.as_array()))


def validate_ranges(ranges: Sequence[ParameterRange]):
    if len(ranges) != len(PARAM_NAMES):
        raise InvalidRange(f"expected {len(PARAM_NAMES)} ranges, got {len(ranges)}")
    for r in ranges:
        r.validate()


def grid_cardinality(ranges: Sequence[ParameterRange]) -> int:
    return math.prod(r.levels for r in ranges)


# ---------------------------------------------------------------------------
# Uniform Latin Hypercube on the step grid
# ---------------------------------------------------------------------------

def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw an ``n x d`` Latin hypercube in the unit cube.

    Returns ``(unit, strata)`` where ``strata[:, j]`` is a permutation of
    ``0..n-1`` and ``unit = (strata + U(0,1)) / n``.
    """
    strata = np.empty((n, d), dtype=np.int64)
    for j in range(d):
        strata[:, j] = rng.permutation(n)
    unit = (strata + rng.random((n, d))) / n
    return unit, strata


def _snap_levels(unit: np.ndarray, level_counts: np.ndarray) -> np.ndarray:
    # equal-probability binning: level k covers [k/L, (k+1)/L)
    levels = np.floor(unit * level_counts).astype(np.int64)
    return np.minimum(levels, level_counts - 1)


def sample_parameter_grid(ranges: Sequence[ParameterRange], n: int, seed: int,
                          return_unit: bool = False):
    """Sample ``n`` unique on-grid parameter vectors by Uniform Latin Hypercube.

    Each coordinate is stratified into ``n`` equal-width strata before being
    snapped to its step grid. Snapping collisions are repaired by swapping the
    colliding row's stratum with another row in one dimension and redrawing
    both offsets from a dedicated sub-stream, which keeps every column a
    permutation of the strata. Gives up with :class:`GridExhausted` after
    ``100 * n`` repair attempts.

    With ``return_unit=True`` the pre-snap unit-cube design is returned as a
    second value so the Latin property can be audited.
    """
    validate_ranges(ranges)
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid_cardinality(ranges) < n:
        raise GridExhausted(f"grid has {grid_cardinality(ranges)} points, {n} requested")

    d = len(ranges)
    level_counts = np.array([r.levels for r in ranges], dtype=np.int64)
    root = np.random.SeedSequence(seed)
    design_ss, repair_ss = root.spawn(2)
    rng = np.random.default_rng(design_ss)
    unit, strata = latin_hypercube(n, d, rng)
    levels = _snap_levels(unit, level_counts)

    repair = np.random.default_rng(repair_ss)
    movable = np.flatnonzero(level_counts > 1)
    owner: dict[tuple, int] = {}
    pending = []
    for i in range(n):
        key = tuple(levels[i])
        if key in owner:
            pending.append(i)
        else:
            owner[key] = i

    attempts = 0
    budget = 100 * n
    while pending:
        i = pending[-1]
        if attempts >= budget or movable.size == 0:
            raise GridExhausted(f"could not resolve {len(pending)} duplicate samples")
        attempts += 1
        j = int(repair.integers(n))
        dim = int(movable[repair.integers(movable.size)])
        if j == i:
            continue
        key_j_old = tuple(levels[j])
        old = (strata[i, dim], strata[j, dim], unit[i, dim], unit[j, dim])
        strata[i, dim], strata[j, dim] = strata[j, dim], strata[i, dim]
        unit[i, dim] = (strata[i, dim] + repair.random()) / n
        unit[j, dim] = (strata[j, dim] + repair.random()) / n
        new_i = levels[i].copy()
        new_j = levels[j].copy()
        new_i[dim] = _snap_levels(unit[i, dim], level_counts[dim])
        new_j[dim] = _snap_levels(unit[j, dim], level_counts[dim])
        ki, kj = tuple(new_i), tuple(new_j)
        # a key held by j itself is released by the swap
        if ki == kj or owner.get(ki, j) != j or owner.get(kj, j) != j:
            strata[i, dim], strata[j, dim], unit[i, dim], unit[j, dim] = old
            continue
        if owner.get(key_j_old) == j:
            del owner[key_j_old]
        else:
            pending.remove(j)
        levels[i], levels[j] = new_i, new_j
        owner[ki] = i
        owner[kj] = j
        pending.remove(i)

    steps = np.array([r.step for r in ranges])
    mins = np.array([r.min for r in ranges])
    values = mins + levels * steps
    params = [GeometricParams.from_array(row) for row in values]
    if return_unit:
        return params, unit
    return params


# ---------------------------------------------------------------------------
# Rigid-body mass properties
# ---------------------------------------------------------------------------

def box_inertia(mass: float, size) -> np.ndarray:
    """Inertia of a uniform box about its centre, axes aligned with its edges."""
    a, b, c = size
    return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


def cylinder_inertia(mass: float, radius: float, length: float, axis: int) -> np.ndarray:
    """Inertia of a solid cylinder about its centre with symmetry axis ``axis``."""
    transverse = mass * (3.0 * radius * radius + length * length) / 12.0
    diag = np.full(3, transverse)
    diag[axis] = 0.5 * mass * radius * radius
    return np.diag(diag)


def compose_inertia(parts: Iterable[tuple[float, np.ndarray, np.ndarray]]):
    """Combine ``(mass, com, inertia_about_own_com)`` parts into one body.

    Negative masses remove material, which lets a nominal segment be taken
    out and re-added at a displaced position. Returns ``(mass, com, inertia)``
    with the inertia about the composite centre of mass.
    """
    parts = [(float(m), np.asarray(c, float), np.asarray(I, float)) for m, c, I in parts]
    mass = sum(m for m, _, _ in parts)
    com = sum(m * c for m, c, _ in parts) / mass
    inertia = np.zeros((3, 3))
    for m, c, I in parts:
        d = c - com
        inertia += I + m * (d @ d * np.eye(3) - np.outer(d, d))
    return mass, com, 0.5 * (inertia + inertia.T)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a rotation of ``angle`` rad about ``axis``."""
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


# ---------------------------------------------------------------------------
# Baseline robot description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """A rigid assembly that is already part of the baseline mass.

    ``side`` is +1 for left, -1 for right, 0 for centreline. ``moves_with``
    names the parameters that translate it (see :func:`_segment_offset`).
    """

    name: str
    mass: float
    size: tuple[float, float, float]
    center: tuple[float, float, float]
    side: int
    moves_with: tuple[str, ...]


@dataclass(frozen=True)
class LinkPrimitive:
    """Material added when a length parameter grows.

    ``shape`` is ``"box"`` or ``"cylinder"``. ``grow_axis`` is the body axis
    along which the parameter sets the primitive's length; ``cross`` gives the
    two remaining box edges (or ``(radius, radius)`` for a cylinder).
    ``anchor`` is where the primitive starts at nominal geometry and
    ``direction`` (+1/-1) along ``grow_axis`` is where it extends.
    """

    name: str
    parameter: str
    shape: str
    density: float
    cross: tuple[float, float]
    grow_axis: int
    direction: int
    anchor: tuple[float, float, float]
    side: int
    moves_with: tuple[str, ...] = ()


@dataclass(frozen=True)
class ThrusterSpec:
    name: str
    group: str  # "jet" or "arm"
    side: int
    mount: tuple[float, float, float]
    direction: tuple[float, float, float]
    t_min: float
    t_max: float
    omega_n: float = 6.0
    zeta: float = 0.9


@dataclass(frozen=True)
class JointSpec:
    """A frozen joint whose small displacement tilts the thrusters it carries."""

    name: str
    axis: tuple[float, float, float]
    pivot: tuple[float, float, float]
    side: int
    thrusters: tuple[int, ...]


def _default_segments():
    return (
        Segment("jetpack", 6.0, (0.20, 0.36, 0.35), (-0.17, 0.0, 0.28), 0, ("jet_offset", "jet_height")),
        Segment("arm_l", 2.8, (0.30, 0.08, 0.10), (0.10, 0.30, 0.20), 1, ("shoulder_width",)),
        Segment("arm_r", 2.8, (0.30, 0.08, 0.10), (0.10, -0.30, 0.20), -1, ("shoulder_width",)),
        Segment("shank_l", 1.6, (0.10, 0.10, 0.40), (0.0, 0.10, -0.55), 1, ("hip_distance",)),
        Segment("shank_r", 1.6, (0.10, 0.10, 0.40), (0.0, -0.10, -0.55), -1, ("hip_distance",)),
        Segment("foot_l", 0.8, (0.22, 0.10, 0.04), (0.04, 0.10, -0.80), 1, ("hip_distance", "ankle_height")),
        Segment("foot_r", 0.8, (0.22, 0.10, 0.04), (0.04, -0.10, -0.80), -1, ("hip_distance", "ankle_height")),
    )


def _default_primitives():
    return (
        LinkPrimitive("jet_offset_spacer", "jet_offset", "box", 600.0, (0.30, 0.06), 0, -1,
                      (-0.07, 0.0, 0.28), 0),
        LinkPrimitive("jet_height_spacer", "jet_height", "box", 600.0, (0.06, 0.30), 2, 1,
                      (-0.07, 0.0, 0.28), 0, ("jet_offset",)),
        LinkPrimitive("forearm_ext_l", "forearm_len", "cylinder", 1200.0, (0.03, 0.03), 0, 1,
                      (0.22, 0.30, 0.15), 1, ("shoulder_width",)),
        LinkPrimitive("forearm_ext_r", "forearm_len", "cylinder", 1200.0, (0.03, 0.03), 0, 1,
                      (0.22, -0.30, 0.15), -1, ("shoulder_width",)),
        LinkPrimitive("shoulder_ext_l", "shoulder_width", "box", 1200.0, (0.06, 0.06), 1, 1,
                      (0.0, 0.22, 0.35), 1),
        LinkPrimitive("shoulder_ext_r", "shoulder_width", "box", 1200.0, (0.06, 0.06), 1, -1,
                      (0.0, -0.22, 0.35), -1),
        LinkPrimitive("hip_ext_l", "hip_distance", "box", 1200.0, (0.06, 0.06), 1, 1,
                      (0.0, 0.05, -0.10), 1),
        LinkPrimitive("hip_ext_r", "hip_distance", "box", 1200.0, (0.06, 0.06), 1, -1,
                      (0.0, -0.05, -0.10), -1),
        LinkPrimitive("ankle_ext_l", "ankle_height", "box", 1200.0, (0.06, 0.06), 2, -1,
                      (0.0, 0.10, -0.78), 1, ("hip_distance",)),
        LinkPrimitive("ankle_ext_r", "ankle_height", "box", 1200.0, (0.06, 0.06), 2, -1,
                      (0.0, -0.10, -0.78), -1, ("hip_distance",)),
        LinkPrimitive("foot_ext_l", "foot_length", "box", 1200.0, (0.10, 0.02), 0, 1,
                      (0.15, 0.10, -0.81), 1, ("hip_distance", "ankle_height")),
        LinkPrimitive("foot_ext_r", "foot_length", "box", 1200.0, (0.10, 0.02), 0, 1,
                      (0.15, -0.10, -0.81), -1, ("hip_distance", "ankle_height")),
    )


def _default_thrusters():
    return (
        ThrusterSpec("jet_l", "jet", 1, (-0.17, 0.12, 0.30), (0.0, 0.0, 1.0), 8.0, 220.0),
        ThrusterSpec("jet_r", "jet", -1, (-0.17, -0.12, 0.30), (0.0, 0.0, 1.0), 8.0, 220.0),
        ThrusterSpec("arm_l", "arm", 1, (0.22, 0.30, 0.15), (0.0, 0.0, 1.0), 4.0, 160.0),
        ThrusterSpec("arm_r", "arm", -1, (0.22, -0.30, 0.15), (0.0, 0.0, 1.0), 4.0, 160.0),
    )


def _default_joints():
    return (
        JointSpec("shoulder_pitch_l", (0.0, 1.0, 0.0), (0.0, 0.22, 0.35), 1, (2,)),
        JointSpec("shoulder_roll_l", (1.0, 0.0, 0.0), (0.0, 0.22, 0.35), 1, (2,)),
        JointSpec("shoulder_pitch_r", (0.0, 1.0, 0.0), (0.0, -0.22, 0.35), -1, (3,)),
        JointSpec("shoulder_roll_r", (1.0, 0.0, 0.0), (0.0, -0.22, 0.35), -1, (3,)),
    )


@dataclass(frozen=True)
class BaseRobotSpec:
    """Nominal (all-parameters-at-minimum) robot.

    ``base_mass``, ``base_com`` and ``base_inertia`` describe the whole
    nominal robot, segments included. The numbers are documented stand-ins
    for a ~42 kg jet-powered humanoid with two back-mounted and two
    forearm-mounted turbines; they are configuration, not measured data.
    """

    base_mass: float = 42.0
    base_com: tuple[float, float, float] = (0.0, 0.0, 0.12)
    base_inertia: tuple[tuple[float, ...], ...] = ((3.9, 0.0, 0.0), (0.0, 3.5, 0.0), (0.0, 0.0, 0.95))
    segments: tuple[Segment, ...] = field(default_factory=_default_segments)
    primitives: tuple[LinkPrimitive, ...] = field(default_factory=_default_primitives)
    thrusters: tuple[ThrusterSpec, ...] = field(default_factory=_default_thrusters)
    joints: tuple[JointSpec, ...] = field(default_factory=_default_joints)

    def validate(self):
        if not self.base_mass > 0:
            raise ValueError("base_mass must be positive")
        inertia = np.asarray(self.base_inertia, float)
        if not np.allclose(inertia, inertia.T):
            raise ValueError("base_inertia must be symmetric")
        if np.linalg.eigvalsh(inertia).min() <= 0:
            raise ValueError("base_inertia must be positive definite")
        for t in self.thrusters:
            if abs(np.linalg.norm(t.direction) - 1.0) > 1e-12:
                raise ValueError(f"thruster {t.name} direction is not unit norm")
            if not (0.0 <= t.t_min < t.t_max):
                raise ValueError(f"thruster {t.name} needs 0 <= t_min < t_max")

    @property
    def n_thrusters(self) -> int:
        return len(self.thrusters)

    @property
    def n_joints(self) -> int:
        return len(self.joints)


# ---------------------------------------------------------------------------
# Surrogate model construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thruster:
    r: np.ndarray          # mount point relative to CoM, body frame [m]
    a: np.ndarray          # unit thrust direction, body frame
    t_min: float
    t_max: float
    omega_n: float
    zeta: float
    dr_ds: np.ndarray      # 3 x n_j
    da_ds: np.ndarray      # 3 x n_j


@dataclass(frozen=True, eq=False)
class RobotModel:
    model_id: int
    params: GeometricParams
    mass: float
    com: np.ndarray        # relative to the pelvis origin, body frame
    inertia: np.ndarray    # about the CoM
    thrusters: tuple[Thruster, ...]
    mount_points: np.ndarray = field(repr=False)   # n_p x 3, pelvis frame

    @property
    def n_thrusters(self) -> int:
        return len(self.thrusters)

    @property
    def n_joints(self) -> int:
        return self.thrusters[0].dr_ds.shape[1]

    def with_id(self, model_id: int) -> "RobotModel":
        return replace(self, model_id=model_id)

    def __eq__(self, other):
        if not isinstance(other, RobotModel):
            return NotImplemented
        return model_to_record(self) == model_to_record(other)


_MM = 1e-3


def _segment_offset(params: GeometricParams, side: int, moves_with: Iterable[str]) -> np.ndarray:
    """Translation [m] applied to a part by the parameters it follows."""
    off = np.zeros(3)
    for name in moves_with:
        v = getattr(params, name) * _MM
        if name == "jet_offset":
            off[0] -= v
        elif name == "jet_height":
            off[2] += v
        elif name in ("shoulder_width", "hip_distance"):
            off[1] += side * v
        elif name == "ankle_height":
            off[2] -= v
        elif name == "forearm_len":
            off[0] += v
        else:
            raise ValueError(f"parameter {name} does not translate parts")
    return off


def _primitive_part(prim: LinkPrimitive, params: GeometricParams):
    length = getattr(params, prim.parameter) * _MM
    if length <= 0.0:
        return None
    center = np.asarray(prim.anchor, float) + _segment_offset(params, prim.side, prim.moves_with)
    center[prim.grow_axis] += prim.direction * 0.5 * length
    if prim.shape == "box":
        size = [0.0, 0.0, 0.0]
        size[prim.grow_axis] = length
        others = [ax for ax in range(3) if ax != prim.grow_axis]
        size[others[0]], size[others[1]] = prim.cross
        mass = prim.density * size[0] * size[1] * size[2]
        inertia = box_inertia(mass, size)
    elif prim.shape == "cylinder":
        radius = prim.cross[0]
        mass = prim.density * math.pi * radius * radius * length
        inertia = cylinder_inertia(mass, radius, length, prim.grow_axis)
    else:
        raise ValueError(f"unknown primitive shape {prim.shape!r}")
    return mass, center, inertia


def build_model(params: GeometricParams, base: BaseRobotSpec | None = None,
                model_id: int = -1) -> RobotModel:
    """Derive mass properties and thruster layout for one design.

    Moving segments are subtracted at their nominal pose and re-added at the
    displaced pose; added material from each length parameter is composed on
    top with the parallel-axis theorem. The jetpack turbines are canted
    outward (mirrored left/right) by ``jet_angle`` about the body roll axis,
    and translated by ``jet_offset`` (backward) and ``jet_height`` (up). Arm
    turbines move forward with ``forearm_len`` and outward with
    ``shoulder_width``.
    """
    base = base or BaseRobotSpec()
    parts = [(base.base_mass, np.asarray(base.base_com, float), np.asarray(base.base_inertia, float))]
    for seg in base.segments:
        offset = _segment_offset(params, seg.side, seg.moves_with)
        if not offset.any():
            continue
        inertia = box_inertia(seg.mass, seg.size)
        nominal = np.asarray(seg.center, float)
        parts.append((-seg.mass, nominal, -inertia))
        parts.append((seg.mass, nominal + offset, inertia))
    for prim in base.primitives:
        part = _primitive_part(prim, params)
        if part is not None:
            parts.append(part)
    if len(parts) == 1:
        mass, com, inertia = parts[0][0], parts[0][1].copy(), parts[0][2].copy()
    else:
        mass, com, inertia = compose_inertia(parts)

    n_j = base.n_joints
    cant = math.radians(params.jet_angle)
    thrusters = []
    mounts = []
    for k, slot in enumerate(base.thrusters):
        mount = np.asarray(slot.mount, float)
        direction = np.asarray(slot.direction, float)
        if slot.group == "jet":
            mount = mount + _segment_offset(params, slot.side, ("jet_offset", "jet_height"))
            if cant != 0.0:
                # positive roll tilts +z toward -y, so the left turbine needs -cant to splay outward
                direction = rotation_about((1.0, 0.0, 0.0), -slot.side * cant) @ direction
        elif slot.group == "arm":
            mount = mount + _segment_offset(params, slot.side, ("forearm_len", "shoulder_width"))
        else:
            raise ValueError(f"unknown thruster group {slot.group!r}")
        direction = direction / np.linalg.norm(direction)
        dr = np.zeros((3, n_j))
        da = np.zeros((3, n_j))
        for j, joint in enumerate(base.joints):
            if k not in joint.thrusters:
                continue
            axis = np.asarray(joint.axis, float)
            pivot = np.asarray(joint.pivot, float) + _segment_offset(params, joint.side, ("shoulder_width",))
            dr[:, j] = np.cross(axis, mount - pivot)
            da[:, j] = np.cross(axis, direction)
        mounts.append(mount)
        thrusters.append(Thruster(r=mount - com, a=direction, t_min=slot.t_min, t_max=slot.t_max,
                                  omega_n=slot.omega_n, zeta=slot.zeta, dr_ds=dr, da_ds=da))
    return RobotModel(model_id=model_id, params=params, mass=float(mass), com=com,
                      inertia=inertia, thrusters=tuple(thrusters), mount_points=np.array(mounts))


# ---------------------------------------------------------------------------
# Hover equilibrium and feasibility
# ---------------------------------------------------------------------------

def static_wrench_matrix(model: RobotModel) -> np.ndarray:
    """6 x n_p map from thrust magnitudes to (force, torque about CoM) at level attitude."""
    cols = []
    for t in model.thrusters:
        cols.append(np.concatenate([t.a, np.cross(t.r, t.a)]))
    return np.array(cols).T


def hover_thrust(model: RobotModel, rtol: float = 1e-9):
    """Static thrusts that hold the model level with zero net torque.

    Returns ``(T_hover, u_hover)`` where ``u_hover = T_hover / T_max``.
    Raises :class:`NoEquilibrium` when no exact solution lies within the
    thrust limits.
    """
    G = static_wrench_matrix(model)
    weight = model.mass * GRAVITY
    target = np.array([0.0, 0.0, weight, 0.0, 0.0, 0.0])
    t_min = np.array([t.t_min for t in model.thrusters])
    t_max = np.array([t.t_max for t in model.thrusters])
    T, *_ = np.linalg.lstsq(G, target, rcond=None)
    tol = rtol * weight * 10
    if np.linalg.norm(G @ T - target) > tol:
        raise NoEquilibrium("static wrench balance has no exact solution")
    if np.any(T < t_min - 1e-9) or np.any(T > t_max + 1e-9):
        # the minimum-norm solution is out of bounds; look for any bounded one in the null space
        from scipy.optimize import lsq_linear

        res = lsq_linear(G, target, bounds=(t_min, t_max), method="bvls", tol=1e-14)
        if np.linalg.norm(G @ res.x - target) > tol:
            raise NoEquilibrium("hover thrust violates thruster limits")
        T = res.x
    T = np.clip(T, t_min, t_max)
    return T, T / t_max


@dataclass(frozen=True)
class FeasibilityRules:
    hover_margin: float = 1.2
    com_box_half_extent: tuple[float, float, float] = (0.10, 0.05, 0.30)


def feasibility_filter(model: RobotModel, rules: FeasibilityRules | None = None) -> bool:
    """Rule-based stand-in for structural validation.

    A model passes when its total thrust covers ``hover_margin`` times its
    weight, a level hover balance exists within thruster limits, and the CoM
    stays inside a box around the centroid of the thruster mounts.
    """
    rules = rules or FeasibilityRules()
    weight = model.mass * GRAVITY
    if sum(t.t_max for t in model.thrusters) < rules.hover_margin * weight:
        return False
    try:
        hover_thrust(model)
    except NoEquilibrium:
        return False
    center = model.mount_points.mean(axis=0)
    return bool(np.all(np.abs(model.com - center) <= np.asarray(rules.com_box_half_extent)))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass
class ModelRegistry:
    models: list[RobotModel]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def get(self, model_id: int) -> RobotModel:
        return registry_get(self, model_id)

    def param_matrix(self) -> np.ndarray:
        return np.array([m.params.as_array() for m in self.models])

    def __eq__(self, other):
        if not isinstance(other, ModelRegistry):
            return NotImplemented
        return self.provenance == other.provenance and self.models == other.models


def registry_get(registry: ModelRegistry, model_id: int) -> RobotModel:
    if not 0 <= model_id < len(registry.models):
        raise IdOutOfRange(f"model id {model_id} outside 0..{len(registry.models) - 1}")
    return registry.models[model_id]


def model_to_record(model: RobotModel) -> dict:
    return {
        "id": model.model_id,
        "params": model.params.to_dict(),
        "mass": model.mass,
        "com": model.com.tolist(),
        "inertia": model.inertia.reshape(-1).tolist(),
        "mount_points": model.mount_points.reshape(-1).tolist(),
        "thrusters": [
            {
                "r": t.r.tolist(),
                "a": t.a.tolist(),
                "t_min": t.t_min,
                "t_max": t.t_max,
                "omega_n": t.omega_n,
                "zeta": t.zeta,
                "dr_ds": t.dr_ds.reshape(-1).tolist(),
                "da_ds": t.da_ds.reshape(-1).tolist(),
            }
            for t in model.thrusters
        ],
    }


def model_from_record(rec: dict) -> RobotModel:
    thrusters = []
    for t in rec["thrusters"]:
        dr = np.array(t["dr_ds"], float)
        thrusters.append(Thruster(
            r=np.array(t["r"], float), a=np.array(t["a"], float),
            t_min=float(t["t_min"]), t_max=float(t["t_max"]),
            omega_n=float(t["omega_n"]), zeta=float(t["zeta"]),
            dr_ds=dr.reshape(3, -1), da_ds=np.array(t["da_ds"], float).reshape(3, -1),
        ))
    return RobotModel(
        model_id=int(rec["id"]),
        params=GeometricParams(**{n: float(rec["params"][n]) for n in PARAM_NAMES}),
        mass=float(rec["mass"]),
        com=np.array(rec["com"], float),
        inertia=np.array(rec["inertia"], float).reshape(3, 3),
        thrusters=tuple(thrusters),
        mount_points=np.array(rec["mount_points"], float).reshape(-1, 3),
    )


def registry_save(registry: ModelRegistry, path):
    """Write the registry as JSON lines: a provenance header, then one model per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"provenance": registry.provenance}, sort_keys=True) + "\n")
        for model in registry.models:
            fh.write(json.dumps(model_to_record(model), sort_keys=True) + "\n")


def registry_load(path) -> ModelRegistry:
    models = []
    provenance = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(f"invalid JSON ({exc.msg})", line=lineno) from None
            if lineno == 1:
                if "provenance" not in rec:
                    raise MalformedFile("missing provenance header", line=lineno)
                provenance = rec["provenance"]
                continue
            try:
                model = model_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedFile(f"bad model record: {exc}", line=lineno) from None
            if model.model_id != len(models):
                raise MalformedFile(f"expected id {len(models)}, found {model.model_id}", line=lineno)
            models.append(model)
    if provenance is None:
        raise MalformedFile("empty registry file", line=1)
    return ModelRegistry(models=models, provenance=provenance)


def generate_registry(ranges: Sequence[ParameterRange], n_models: int, seed: int,
                      base: BaseRobotSpec | None = None, rules: FeasibilityRules | None = None,
                      provenance: dict | None = None, max_rounds: int = 50):
    """Sample, build and filter designs until ``n_models`` feasible ones exist.

    The first round is a single Latin hypercube of size ``n_models``; later
    rounds (only needed when the filter discards designs) top up from fresh
    hypercubes, skipping parameter vectors already seen. Returns the registry
    and the number of discarded designs.
    """
    base = base or BaseRobotSpec()
    base.validate()
    models: list[RobotModel] = []
    seen: set[tuple] = set()
    discarded = 0
    need = n_models
    for round_idx in range(max_rounds):
        round_seed = seed if round_idx == 0 else int(
            np.random.SeedSequence([seed, round_idx]).generate_state(1)[0])
        request = need if round_idx == 0 else min(max(2 * need, 16), grid_cardinality(ranges))
        for params in sample_parameter_grid(ranges, request, round_seed):
            key = tuple(params.as_array())
            if key in seen:
                continue
            seen.add(key)
            model = build_model(params, base, model_id=len(models))
            if not feasibility_filter(model, rules):
                discarded += 1
                continue
            models.append(model)
            if len(models) == n_models:
                break
        need = n_models - len(models)
        if need == 0:
            break
    else:
        raise GridExhausted(f"only {len(models)} feasible models after {max_rounds} rounds")
    return ModelRegistry(models=models, provenance=dict(provenance or {})), discarded
