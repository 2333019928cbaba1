"""Objectives for one design-control candidate: tracking error and mechanical energy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterSet
from .design_space import ModelRegistry
from .dynamics import FlightModel
from .errors import LengthMismatch, MalformedFile
from .mpc import ControlWeights, FailureReason, MpcConfig, SimResult, simulate_closed_loop
from .trajectory import ReferenceTrajectory

DEFAULT_PENALTY = 1e6


def tracking_mse(positions, reference) -> float:
    """Euclidean norm of the per-axis mean squared CoM errors."""
    positions = np.asarray(positions, float)
    reference = np.asarray(reference, float)
    if positions.shape != reference.shape:
        raise LengthMismatch(f"log shape {positions.shape} vs reference {reference.shape}")
    if positions.shape[0] == 0:
        raise LengthMismatch("empty log")
    per_axis = np.mean((positions - reference) ** 2, axis=0)
    return float(np.linalg.norm(per_axis))


def mechanical_power(F, tau, v_base, w_base) -> float:
    return float(np.dot(F, v_base) + np.dot(tau, w_base))


def energy(power, dt: float) -> float:
    """Sum of absolute power samples times ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return float(np.sum(np.abs(np.asarray(power, float))) * dt)


def power_log(fm: FlightModel, result: SimResult) -> np.ndarray:
    """Thrust power at every logged sample, from the net wrench."""
    x = result.states
    v = x[:, 3:6] / fm.mass
    omega = np.array([fm.angular_velocity(s[6:9], s[9:12]) for s in x]).reshape(-1, 3)
    return np.einsum("ij,ij->i", result.forces, v) + np.einsum("ij,ij->i", result.torques, omega)


def thruster_power_log(fm: FlightModel, result: SimResult) -> np.ndarray:
    """Same power, summed thruster by thruster with each nozzle's own velocity.

    ``sum_k F_k . (v + omega x r_k)`` equals ``F . v + tau . omega``; the two
    paths share no code beyond the thruster geometry.
    """
    lay = fm.layout
    out = np.zeros(len(result))
    for i, (x, u) in enumerate(zip(result.states, result.inputs)):
        forces, arms = fm.thruster_forces(x[lay.thrust], x[6:9], u[:fm.n_j])
        v = x[3:6] / fm.mass
        omega = fm.angular_velocity(x[6:9], x[9:12])
        nozzle_v = v[None, :] + np.cross(omega[None, :], arms)
        out[i] = float(np.sum(forces * nozzle_v))
    return out


@dataclass(frozen=True)
class Objectives:
    mse_total: float
    energy: float
    feasible: bool
    failure_reason: FailureReason = FailureReason.NONE

    @classmethod
    def penalized(cls, reason: FailureReason, penalty: float = DEFAULT_PENALTY) -> "Objectives":
        return cls(penalty, penalty, False, reason)

    def as_tuple(self) -> tuple[float, float]:
        return (self.mse_total, self.energy)


@dataclass(frozen=True)
class EvalConfig:
    mpc: MpcConfig = field(default_factory=MpcConfig)
    penalty: float = DEFAULT_PENALTY


def evaluate_model(model, weights: ControlWeights, trajectory: ReferenceTrajectory,
                   config: EvalConfig | None = None) -> Objectives:
    config = config or EvalConfig()
    fm = model if isinstance(model, FlightModel) else FlightModel(model)
    result = simulate_closed_loop(fm, weights, trajectory, config.mpc)
    if result.failed:
        return Objectives.penalized(result.failure_reason, config.penalty)
    mse = tracking_mse(result.states[:, 0:3], trajectory.x_ref[:len(result)])
    e = energy(power_log(fm, result), config.mpc.dt)
    if not (math.isfinite(mse) and math.isfinite(e)):
        return Objectives.penalized(FailureReason.QP_FAILURE, config.penalty)
    return Objectives(mse, e, True, FailureReason.NONE)


def evaluate_candidate(centroid_index: int, weights: ControlWeights, clusters: ClusterSet,
                       registry: ModelRegistry, trajectory: ReferenceTrajectory,
                       config: EvalConfig | None = None) -> Objectives:
    """Resolve centroid index to a model, fly the trajectory, score it.

    Every failure mode of the simulation becomes penalty objectives; nothing
    is raised for a bad candidate.
    """
    model = registry.get(clusters.model_id(centroid_index))
    return evaluate_model(model, weights, trajectory, config)


# ---------------------------------------------------------------------------
# Evaluation ledger (JSON lines)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    candidate_id: int
    generation: int
    centroid_index: int
    model_id: int
    weights: tuple[float, ...]
    mse_total: float
    energy: float
    feasible: bool
    failure_reason: str

    @property
    def objectives(self) -> Objectives:
        return Objectives(self.mse_total, self.energy, self.feasible, FailureReason(self.failure_reason))

    def to_dict(self):
        return {
            "candidate_id": self.candidate_id, "generation": self.generation,
            "centroid_index": self.centroid_index, "model_id": self.model_id,
            "weights": list(self.weights), "mse_total": self.mse_total, "energy": self.energy,
            "feasible": self.feasible, "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_dict(cls, d) -> "EvalRecord":
        return cls(int(d["candidate_id"]), int(d["generation"]), int(d["centroid_index"]),
                   int(d["model_id"]), tuple(float(w) for w in d["weights"]),
                   float(d["mse_total"]), float(d["energy"]), bool(d["feasible"]),
                   str(d["failure_reason"]))


def ledger_append(path, records: Sequence[EvalRecord]):
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        fh.flush()


def ledger_write_header(path, provenance: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"provenance": provenance}, sort_keys=True) + "\n")


def ledger_read(path) -> tuple[dict | None, list[EvalRecord]]:
    """Provenance header and records. A torn final line (crash mid-write) is dropped."""
    provenance = None
    records = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            if lineno == len(lines) and not line.endswith("\n"):
                break
            raise MalformedFile("invalid JSON", line=lineno) from None
        if "provenance" in d and lineno == 1:
            provenance = d["provenance"]
            continue
        try:
            records.append(EvalRecord.from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"bad evaluation record: {exc}", line=lineno) from None
    return provenance, records
