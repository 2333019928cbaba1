"""Command-line pipeline: generate, cluster, trajectory, optimize, plot, all.

Each stage reads and writes files in one run directory. Outputs carry a
provenance record (stage, master seed, config hash, stage hash) and
downstream stages refuse inputs whose stage hash does not match the
current configuration.

Exit codes: 0 success, 2 input or configuration error, 3 empty result.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .clustering import cluster_registry, clusters_load, clusters_save
from .config import RunConfig
from .design_space import PARAM_NAMES, generate_registry, registry_load, registry_save
from .errors import CodesignError, EmptyFeasibleSet, ProvenanceMismatch
from .evaluation import (EvalConfig, EvalRecord, Objectives, evaluate_candidate, ledger_append,
                         ledger_read, ledger_write_header)
from .mpc import WEIGHT_NAMES
from .nsga2 import FRONT_COLUMNS, Individual, assign_rank_and_crowding, evolve, pareto_front, write_front_csv
from .trajectory import (build_trajectory, load_trajectory_csv, save_trajectory_csv,
                         segment_durations_from_speed)

log = logging.getLogger("jetcodesign")

EXIT_OK, EXIT_INPUT, EXIT_EMPTY = 0, 2, 3

MODELS, CLUSTERS, TRAJECTORY = "models.jsonl", "clusters.json", "trajectory.csv"
EVALS, PARETO, PLOTS = "evals.jsonl", "pareto.csv", "plots"


# ---------------------------------------------------------------------------
# Run directory
# ---------------------------------------------------------------------------

@contextmanager
def run_lock(out: Path):
    """Exclusive lock on the run directory; a lock left by a dead process is taken over."""
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    for _ in range(2):
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            try:
                pid = int(lock.read_text().strip() or "0")
                os.kill(pid, 0)
            except (ValueError, ProcessLookupError):
                lock.unlink(missing_ok=True)
                continue
            except PermissionError:
                pass
            raise CodesignError(f"run directory {out} is locked by process {pid}")
    else:
        raise CodesignError(f"could not lock {out}")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def check_provenance(found: dict | None, cfg: RunConfig, stage: str, path):
    expected = cfg.provenance(stage)
    if not found or found.get("stage_hash") != expected["stage_hash"] or found.get("seed") != cfg.seed:
        raise ProvenanceMismatch(
            f"{path} was produced by a different configuration "
            f"(found {found and found.get('stage_hash')}, expected {expected['stage_hash']})")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Path):
    registry, discarded = generate_registry(
        cfg.ranges, cfg.n_models, cfg.stage_seed("models"), cfg.base, cfg.feasibility,
        provenance=cfg.provenance("models"))
    registry_save(registry, out / MODELS)
    total = len(registry) + discarded
    print(f"models: {len(registry)} written, {discarded} discarded "
          f"({100.0 * discarded / max(total, 1):.1f}% discard rate) -> {out / MODELS}")
    return registry


def cmd_cluster(cfg: RunConfig, out: Path):
    registry = registry_load(out / MODELS)
    check_provenance(registry.provenance, cfg, "models", out / MODELS)
    cs = cluster_registry(registry, cfg.ranges, cfg.k, cfg.stage_seed("clusters"),
                          max_iter=cfg.cluster_max_iter, tol=cfg.cluster_tol,
                          restarts=cfg.cluster_restarts, provenance=cfg.provenance("clusters"))
    clusters_save(cs, out / CLUSTERS, PARAM_NAMES)
    print(f"clusters: k={cs.k}, inertia={cs.inertia:.6g}, "
          f"{len(set(cs.centroid_model_ids))} distinct centroid models -> {out / CLUSTERS}")
    return cs


def build_reference(cfg: RunConfig):
    wps = cfg.resolved_waypoints()
    durations = segment_durations_from_speed(wps, cfg.cruise_speed, cfg.min_segment_duration)
    return build_trajectory(wps, durations, cfg.mpc.dt)


def cmd_trajectory(cfg: RunConfig, out: Path):
    traj = build_reference(cfg)
    save_trajectory_csv(traj, out / TRAJECTORY, cfg.provenance("trajectory"))
    print(f"trajectory: {traj.duration:.2f} s, {len(traj)} samples -> {out / TRAJECTORY}")
    return traj


# Worker-process state for parallel evaluation. Inputs are loaded once per
# worker; each task is a pure function of (centroid index, log-weights).
_WORKER: dict = {}


def _worker_init(out: str, eval_config: EvalConfig):
    out_path = Path(out)
    _WORKER["registry"] = registry_load(out_path / MODELS)
    _WORKER["clusters"] = clusters_load(out_path / CLUSTERS)
    _WORKER["trajectory"] = load_trajectory_csv(out_path / TRAJECTORY)[0]
    _WORKER["config"] = eval_config


def _worker_eval(task):
    centroid, log_weights = task
    from .mpc import ControlWeights
    weights = ControlWeights.from_log10(np.asarray(log_weights))
    return evaluate_candidate(centroid, weights, _WORKER["clusters"], _WORKER["registry"],
                              _WORKER["trajectory"], _WORKER["config"])


def _record(ind: Individual, clusters) -> EvalRecord:
    w = ind.genome.weights().as_array()
    obj = ind.objectives
    return EvalRecord(ind.candidate_id, ind.generation, ind.genome.centroid,
                      clusters.model_id(ind.genome.centroid), tuple(float(v) for v in w),
                      obj.mse_total, obj.energy, obj.feasible, obj.failure_reason.value)


def _front_rows(items, clusters) -> list[dict]:
    rows = []
    for ind in items:
        rec = _record(ind, clusters)
        row = {"candidate_id": rec.candidate_id, "model_id": rec.model_id,
               "centroid_index": rec.centroid_index, "mse_total": rec.mse_total,
               "energy": rec.energy, "rank": int(ind.rank)}
        row.update(dict(zip(WEIGHT_NAMES, rec.weights)))
        rows.append(row)
    return rows


def cmd_optimize(cfg: RunConfig, out: Path, jobs: int = 1, resume: bool = False):
    registry = registry_load(out / MODELS)
    check_provenance(registry.provenance, cfg, "models", out / MODELS)
    clusters = clusters_load(out / CLUSTERS)
    check_provenance(clusters.provenance, cfg, "clusters", out / CLUSTERS)
    traj, traj_prov = load_trajectory_csv(out / TRAJECTORY)
    check_provenance(traj_prov, cfg, "trajectory", out / TRAJECTORY)
    if len(clusters.assignments) != len(registry):
        raise ProvenanceMismatch("cluster file does not match the model registry")

    eval_config = EvalConfig(mpc=cfg.mpc, penalty=cfg.penalty)
    prov = cfg.provenance("optimize")
    ledger_path = out / EVALS
    done: dict[int, EvalRecord] = {}
    if resume and ledger_path.exists():
        found, records = ledger_read(ledger_path)
        check_provenance(found, cfg, "optimize", ledger_path)
        done = {r.candidate_id: r for r in records}
        # rewrite without any torn tail, then keep appending
        ledger_write_header(ledger_path, prov)
        ledger_append(ledger_path, records)
        log.info("resuming with %d ledgered evaluations", len(done))
    else:
        ledger_write_header(ledger_path, prov)
    for old in out.glob("front_gen_*.csv"):
        old.unlink()

    pool = None
    if jobs > 1:
        pool = ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                   initargs=(str(out), eval_config))
    else:
        _worker_init(str(out), eval_config)

    def evaluate(batch):
        results: list[Objectives | None] = [None] * len(batch)
        todo = []
        for i, ind in enumerate(batch):
            rec = done.get(ind.candidate_id)
            if rec is not None and rec.centroid_index == ind.genome.centroid \
                    and np.allclose(rec.weights, ind.genome.weights().as_array(), rtol=1e-12, atol=0):
                results[i] = rec.objectives
            else:
                todo.append(i)
        tasks = [(batch[i].genome.centroid, batch[i].genome.log_weights) for i in todo]
        fresh = list(pool.map(_worker_eval, tasks)) if pool else [_worker_eval(t) for t in tasks]
        for i, obj in zip(todo, fresh):
            results[i] = obj
        for ind, obj in zip(batch, results):
            ind.objectives = obj
        ledger_append(ledger_path, [_record(batch[i], clusters) for i in todo])
        return results

    def snapshot(gen, population, new):
        ranked = list(population)
        assign_rank_and_crowding(ranked)
        front = [ind for ind in ranked if ind.rank == 0 and ind.objectives.feasible]
        path = out / f"front_gen_{gen:04d}.csv"
        write_front_csv(path, _front_rows(sorted(front, key=lambda i: i.candidate_id), clusters))
        n_feas = sum(ind.objectives.feasible for ind in new)
        print(f"generation {gen}: {len(new)} evaluated, {n_feas} feasible, front size {len(front)}")

    try:
        result = evolve(cfg.ga_config(), evaluate, on_generation=snapshot)
    finally:
        if pool:
            pool.shutdown()

    front = pareto_front(result.archive)
    for ind in front:
        ind.rank = 0
    write_front_csv(out / PARETO, _front_rows(front, clusters))
    print(f"pareto: {len(front)} non-dominated feasible candidates from "
          f"{len(result.archive)} evaluations -> {out / PARETO}")
    return result, front


def cmd_plot(cfg: RunConfig, out: Path):
    from .plotting import plot_all
    prov, records = ledger_read(out / EVALS)
    if not records:
        raise ProvenanceMismatch(f"{out / EVALS} holds no evaluations")
    try:
        front = pareto_front(records)
    except EmptyFeasibleSet:
        front = []
        print("warning: no feasible candidate; plotting the infeasible cloud only", file=sys.stderr)
    paths = plot_all(records, front, out / PLOTS, prov)
    for p in paths:
        print(f"plot -> {p}")
    return paths


def read_front_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FRONT_COLUMNS:
            raise ValueError(f"unexpected columns in {path}")
        return list(reader)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (defaults reproduce the full protocol)")
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory (default: ./run)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel evaluation processes for optimize")
    common.add_argument("--resume", action="store_true", help="reuse ledgered evaluations in optimize")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="jetcodesign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("generate", "sample and build the model registry"),
                       ("cluster", "reduce models to k centroid models"),
                       ("trajectory", "build the reference trajectory"),
                       ("optimize", "run NSGA-II over centroids and MPC weights"),
                       ("plot", "draw result plots from the evaluation ledger"),
                       ("all", "run every stage in order")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.jobs < 1:
            raise ValueError("--jobs must be at least 1")
        out = args.out
        with run_lock(out):
            if args.command in ("generate", "all"):
                cmd_generate(cfg, out)
            if args.command in ("cluster", "all"):
                cmd_cluster(cfg, out)
            if args.command in ("trajectory", "all"):
                cmd_trajectory(cfg, out)
            if args.command in ("optimize", "all"):
                cmd_optimize(cfg, out, jobs=args.jobs, resume=args.resume)
            if args.command in ("plot", "all"):
                cmd_plot(cfg, out)
    except EmptyFeasibleSet as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (CodesignError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
