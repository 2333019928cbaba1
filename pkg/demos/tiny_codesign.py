"""The whole co-design loop in one process, small enough to finish in about a minute.

Generates designs, clusters them, then lets NSGA-II pick a centroid body and
MPC weights for a short climb-and-traverse. Prints the final trade-off front.
"""

from jetcodesign.clustering import cluster_registry
from jetcodesign.design_space import TABLE_I_RANGES, generate_registry
from jetcodesign.evaluation import evaluate_candidate
from jetcodesign.nsga2 import GaConfig, evolve, pareto_front
from jetcodesign.trajectory import Waypoint, build_trajectory

registry, _ = generate_registry(TABLE_I_RANGES, 120, seed=3)
clusters = cluster_registry(registry, TABLE_I_RANGES, 6, seed=4)
traj = build_trajectory([Waypoint((0, 0, 1)), Waypoint((1.5, 0.5, 1.5), (1, 0, 0), 0.6),
                         Waypoint((3, 0, 1.5))], [2.5, 2.5], 0.1)


def evaluate(batch):
    return [evaluate_candidate(ind.genome.centroid, ind.genome.weights(), clusters, registry, traj)
            for ind in batch]


def report(gen, population, new):
    feasible = sum(i.objectives.feasible for i in new)
    print(f"generation {gen:2d}: {feasible}/{len(new)} new candidates feasible")


config = GaConfig(population=12, generations=6, seed=5, k=clusters.k)
result = evolve(config, evaluate, on_generation=report)
front = sorted(pareto_front(result.archive), key=lambda i: i.objectives.mse_total)
print(f"\n{len(front)} non-dominated candidates out of {len(result.archive)} evaluations")

# Unmutated clones of a parent score identically; list each distinct point once.
distinct = {}
for ind in front:
    distinct.setdefault(ind.objectives.as_tuple(), ind)
front = list(distinct.values())
print(" model  MSE [m^2]   energy [J]   w_x      w_uth")
for ind in front:
    w = ind.genome.weights()
    print(f"{clusters.model_id(ind.genome.centroid):6d}  {ind.objectives.mse_total:.3e}  "
          f"{ind.objectives.energy:10.1f}  {w.w_x:8.2g} {w.w_uth:8.2g}")
