"""Sample a batch of body designs, look at their mass properties, and cluster them.

    python demos/design_space_tour.py [n_models] [k]
"""

import sys

import numpy as np

from jetcodesign.clustering import cluster_registry
from jetcodesign.design_space import PARAM_NAMES, TABLE_I_RANGES, generate_registry, hover_thrust

n_models = int(sys.argv[1]) if len(sys.argv) > 1 else 300
k = int(sys.argv[2]) if len(sys.argv) > 2 else 8

registry, discarded = generate_registry(TABLE_I_RANGES, n_models, seed=1)
print(f"{len(registry)} feasible designs ({discarded} discarded)")

masses = np.array([m.mass for m in registry.models])
ixx = np.array([m.inertia[0, 0] for m in registry.models])
print(f"mass   {masses.min():7.2f} .. {masses.max():7.2f} kg")
print(f"I_xx   {ixx.min():7.3f} .. {ixx.max():7.3f} kg m^2")

# Hover thrust split across the four turbines for the lightest and heaviest design.
for label, idx in (("lightest", masses.argmin()), ("heaviest", masses.argmax())):
    T, u = hover_thrust(registry.models[idx])
    print(f"{label:9s} model {idx:4d}: hover thrust {np.round(T, 1)} N, throttle {np.round(u, 3)}")

clusters = cluster_registry(registry, TABLE_I_RANGES, k, seed=2)
print(f"\nk-means with k={k}: inertia {clusters.inertia:.4f} after {len(clusters.history)} updates")
sizes = np.bincount(clusters.assignments, minlength=k)
print("cluster  size  model  " + "  ".join(PARAM_NAMES))
for c in range(k):
    p = registry.get(clusters.model_id(c)).params.as_array()
    print(f"{c:7d}  {sizes[c]:4d}  {clusters.model_id(c):5d}  "
          + "  ".join(f"{v:{len(n)}.1f}" for n, v in zip(PARAM_NAMES, p)))
print("\nwithin-cluster spread (mean absolute deviation), averaged over clusters:")
for name, s in zip(PARAM_NAMES, clusters.spread.mean(axis=0)):
    print(f"  {name:15s} {s:6.2f}")
