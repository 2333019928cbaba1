"""Static SVG result plots with byte-stable output."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalRecord  # noqa: E402

_RC = {"svg.hashsalt": "jetcodesign", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path, provenance):
    meta = {"Date": None, "Creator": "jetcodesign"}
    if provenance is not None:
        meta["Description"] = json.dumps(provenance, sort_keys=True)
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def _front_ids(front: Sequence[EvalRecord]) -> set[int]:
    return {r.candidate_id for r in front}


def plot_pareto(archive: Sequence[EvalRecord], front: Sequence[EvalRecord], path, provenance=None):
    """Every evaluated candidate, with the non-dominated set drawn on top."""
    feasible = [r for r in archive if r.feasible]
    infeasible = [r for r in archive if not r.feasible]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        if feasible:
            ax.scatter([r.mse_total for r in feasible], [r.energy for r in feasible],
                       s=10, c="0.7", label=f"evaluated ({len(feasible)})")
            pts = sorted((r.mse_total, r.energy) for r in front)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", color="C3", ms=5,
                    label=f"Pareto front ({len(front)})")
            if len(front) == 1:
                ax.scatter([pts[0][0]], [pts[0][1]], s=120, facecolors="none", edgecolors="C3")
            ax.set_xscale("log")
            ax.set_xlabel("tracking MSE norm [m$^2$]")
            ax.set_ylabel("energy [J]")
            if infeasible:
                ax.set_title(f"{len(infeasible)} infeasible candidates not shown", fontsize=8)
        else:
            ax.scatter(np.arange(len(infeasible)), [r.mse_total for r in infeasible],
                       s=10, c="0.5", marker="x", label=f"infeasible ({len(infeasible)})")
            ax.set_xlabel("candidate")
            ax.set_ylabel("penalty objective")
            ax.text(0.5, 0.5, "WARNING: no feasible candidate", transform=ax.transAxes,
                    ha="center", va="center", color="C3", fontsize=12)
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        _save(fig, path, provenance)


def plot_by_model(archive: Sequence[EvalRecord], front: Sequence[EvalRecord], path, provenance=None):
    """Feasible candidates colored by the model they fly; front members outlined."""
    feasible = [r for r in archive if r.feasible]
    on_front = _front_ids(front)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        if feasible:
            ids = np.array([r.model_id for r in feasible])
            sc = ax.scatter([r.mse_total for r in feasible], [r.energy for r in feasible],
                            c=ids, cmap="viridis", s=12)
            fig.colorbar(sc, ax=ax, label="model id")
            fr = [r for r in feasible if r.candidate_id in on_front]
            ax.scatter([r.mse_total for r in fr], [r.energy for r in fr], s=60,
                       facecolors="none", edgecolors="k", linewidths=0.8, label="front")
            ax.set_xscale("log")
            ax.legend(loc="upper right", fontsize=8)
        else:
            ax.text(0.5, 0.5, "WARNING: no feasible candidate", transform=ax.transAxes,
                    ha="center", va="center", color="C3", fontsize=12)
        ax.set_xlabel("tracking MSE norm [m$^2$]")
        ax.set_ylabel("energy [J]")
        fig.tight_layout()
        _save(fig, path, provenance)


def plot_front_contribution(front: Sequence[EvalRecord], path, provenance=None):
    """How many front members each model supplies."""
    counts = sorted(Counter(r.model_id for r in front).items())
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        if counts:
            labels = [str(m) for m, _ in counts]
            ax.bar(np.arange(len(counts)), [c for _, c in counts], color="C0")
            ax.set_xticks(np.arange(len(counts)), labels, rotation=90)
        else:
            ax.text(0.5, 0.5, "WARNING: empty front", transform=ax.transAxes,
                    ha="center", va="center", color="C3", fontsize=12)
        ax.set_xlabel("model id")
        ax.set_ylabel("front members")
        fig.tight_layout()
        _save(fig, path, provenance)


def plot_all(archive, front, out_dir, provenance=None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "pareto.svg", out / "by_model.svg", out / "front_contribution.svg"]
    plot_pareto(archive, front, paths[0], provenance)
    plot_by_model(archive, front, paths[1], provenance)
    plot_front_contribution(front, paths[2], provenance)
    return paths
