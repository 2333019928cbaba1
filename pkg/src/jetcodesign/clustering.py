"""K-means reduction of the model pool to representative centroid models."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .design_space import GeometricParams, ModelRegistry, ParameterRange
from .errors import KTooLarge, MalformedFile


def normalize(params, ranges: Sequence[ParameterRange]) -> np.ndarray:
    """Affine map of raw parameters onto the unit cube.

    Accepts a :class:`GeometricParams`, an 8-vector or an ``n x 8`` matrix.
    Dimensions with ``min == max`` map to 0.
    """
    values = params.as_array() if isinstance(params, GeometricParams) else np.asarray(params, float)
    lo = np.array([r.min for r in ranges], float)
    width = np.array([r.max - r.min for r in ranges], float)
    safe = np.where(width > 0, width, 1.0)
    out = (values - lo) / safe
    return np.where(width > 0, out, 0.0)


@dataclass
class KMeansResult:
    means: np.ndarray          # k x d
    labels: np.ndarray         # n
    inertia: float
    history: list[float]       # inertia after every update, Lloyd then Hartigan
    iterations: int
    restart: int


def _sq_dist(points, means):
    return ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)


def _inertia(points, means, labels):
    return float(((points - means[labels]) ** 2).sum())


def _plus_plus(points, k, rng):
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _update(points, labels, k):
    """Cluster means for ``labels``; empty clusters take the farthest point of the largest one."""
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        centre = points[members].mean(axis=0)
        far = members[int(np.argmax(((points[members] - centre) ** 2).sum(axis=1)))]
        labels[far] = empty[0]
    means = np.zeros((k, points.shape[1]))
    np.add.at(means, labels, points)
    means /= np.bincount(labels, minlength=k)[:, None]
    return means, labels


def _hartigan(points, means, labels, k, history, max_passes=100):
    """Single-point transfers that strictly lower inertia, applied after Lloyd.

    Moving ``x`` from cluster ``a`` to ``b`` changes inertia by
    ``n_b/(n_b+1) |x-m_b|^2 - n_a/(n_a-1) |x-m_a|^2``. A partition stable
    under these moves is also stable under nearest-mean reassignment.
    """
    means = means.copy()
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(float)
    for _ in range(max_passes):
        moved = False
        for i, x in enumerate(points):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = ((means - x) ** 2).sum(axis=1)
            gain = counts / (counts + 1.0) * d2
            gain[a] = counts[a] / (counts[a] - 1.0) * d2[a]
            b = int(np.argmin(gain))
            if b == a or gain[b] >= gain[a] * (1.0 - 1e-12):
                continue
            means[a] = (means[a] * counts[a] - x) / (counts[a] - 1.0)
            means[b] = (means[b] * counts[b] + x) / (counts[b] + 1.0)
            counts[a] -= 1.0
            counts[b] += 1.0
            labels[i] = b
            moved = True
        if not moved:
            break
        means, labels = _update(points, labels, k)   # refresh against drift
        history.append(_inertia(points, means, labels))
    return means, labels


def _lloyd(points, k, rng, max_iter, tol, restart):
    means = _plus_plus(points, k, rng)
    labels = np.argmin(_sq_dist(points, means), axis=1)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new_means, labels = _update(points, labels, k)
        history.append(_inertia(points, new_means, labels))
        shift = float(np.max(np.abs(new_means - means)))
        means = new_means
        new_labels = np.argmin(_sq_dist(points, means), axis=1)
        if shift < tol and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    means, labels = _hartigan(points, means, labels, k, history)
    return KMeansResult(means, labels, history[-1], history, it, restart)


def kmeans(points, k: int, seed: int, max_iter: int = 300, tol: float = 1e-8,
           restarts: int = 10) -> KMeansResult:
    """Lloyd iterations from k-means++ seeds; the best of ``restarts`` runs is kept.

    Each converged run is finished with Hartigan transfers, which escape
    some Lloyd fixed points on small instances and never raise inertia.

    Ties in final inertia go to the lowest restart index, so the result only
    depends on ``seed``.
    """
    points = np.asarray(points, float)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1 or max_iter < 1:
        raise ValueError("k and max_iter must be at least 1")
    distinct = np.unique(points, axis=0).shape[0]
    if k > distinct:
        raise KTooLarge(f"k={k} exceeds the {distinct} distinct points")
    best = None
    for restart, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
        result = _lloyd(points, k, np.random.default_rng(child), max_iter, tol, restart)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def snap_centroids(means, registry: ModelRegistry, ranges: Sequence[ParameterRange]) -> list[int]:
    """Id of the registry model nearest to each mean; ties go to the lowest id."""
    if len(registry) == 0:
        raise ValueError("registry is empty")
    normed = normalize(registry.param_matrix(), ranges)
    d2 = _sq_dist(np.atleast_2d(np.asarray(means, float)), normed)
    return [int(registry.models[j].model_id) for j in np.argmin(d2, axis=1)]


def cluster_spread(labels, k: int, registry: ModelRegistry) -> np.ndarray:
    """Population standard deviation of each raw parameter within each cluster."""
    raw = registry.param_matrix()
    labels = np.asarray(labels)
    spread = np.zeros((k, raw.shape[1]))
    for c in range(k):
        members = raw[labels == c]
        if len(members):
            spread[c] = members.std(axis=0)
    return spread


@dataclass
class ClusterSet:
    k: int
    seed: int
    assignments: np.ndarray            # cluster index per model id
    means: np.ndarray                  # k x 8, normalized
    centroid_model_ids: list[int]
    inertia: float
    spread: np.ndarray                 # k x 8, raw units
    history: list[float] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def model_id(self, centroid_index: int) -> int:
        if not 0 <= centroid_index < self.k:
            raise IndexError(f"centroid index {centroid_index} outside 0..{self.k - 1}")
        return self.centroid_model_ids[centroid_index]


def cluster_registry(registry: ModelRegistry, ranges: Sequence[ParameterRange], k: int, seed: int,
                     max_iter: int = 300, tol: float = 1e-8, restarts: int = 10,
                     provenance: dict | None = None) -> ClusterSet:
    """normalize, kmeans, snap_centroids and cluster_spread in one call."""
    points = normalize(registry.param_matrix(), ranges)
    result = kmeans(points, k, seed, max_iter=max_iter, tol=tol, restarts=restarts)
    return ClusterSet(
        k=k, seed=seed, assignments=result.labels, means=result.means,
        centroid_model_ids=snap_centroids(result.means, registry, ranges),
        inertia=result.inertia, spread=cluster_spread(result.labels, k, registry),
        history=result.history, provenance=dict(provenance or {}),
    )


def clusters_save(cs: ClusterSet, path, param_names: Sequence[str]):
    doc = {
        "provenance": cs.provenance,
        "k": cs.k,
        "seed": cs.seed,
        "inertia": cs.inertia,
        "centroid_model_ids": list(cs.centroid_model_ids),
        "assignments": [int(a) for a in cs.assignments],
        "means": cs.means.tolist(),
        "spread": {"columns": list(param_names), "rows": cs.spread.tolist()},
        "inertia_history": list(cs.history),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def clusters_load(path) -> ClusterSet:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"invalid JSON ({exc.msg})", line=exc.lineno) from None
    try:
        return ClusterSet(
            k=int(doc["k"]), seed=int(doc["seed"]),
            assignments=np.array(doc["assignments"], int),
            means=np.array(doc["means"], float),
            centroid_model_ids=[int(i) for i in doc["centroid_model_ids"]],
            inertia=float(doc["inertia"]),
            spread=np.array(doc["spread"]["rows"], float),
            history=[float(v) for v in doc.get("inertia_history", [])],
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"bad cluster file: {exc}") from None
