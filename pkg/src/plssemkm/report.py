"""Serialized results, group summaries and atomic file output."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .core import FittedModel, _as_array

STATS = ("min", "q1", "median", "mean", "q3", "max")


def _matrix(a):
    a = np.asarray(a, dtype=float)
    return {"rows": a.shape[0], "cols": a.shape[1], "data": a.tolist()}


def fitted_model_dict(fitted: FittedModel) -> dict:
    """Plain-data view of a fit: row-major matrices with their dimensions,
    1-based cluster assignments."""
    spec = fitted.spec
    return {
        "spec": spec.to_dict(),
        "n_clusters": fitted.n_clusters,
        "assignment": (np.asarray(fitted.labels) + 1).tolist(),
        "loadings": _matrix(fitted.loadings),
        "centroids": _matrix(fitted.centroids),
        "path_coefficients": _matrix(fitted.path_matrix()),
        "paths": [{"from": a, "to": b,
                   "value": float(fitted.path_matrix()[spec.lv_index(a), spec.lv_index(b)])}
                  for a, b in spec.paths()],
        "objective": fitted.objective_value,
        "converged": fitted.converged,
        "iterations": fitted.n_iterations,
        "seed": fitted.seed,
        "start_objectives": list(fitted.start_objectives),
        "failed_starts": list(fitted.failed_starts),
    }


def loading_table(fitted: FittedModel) -> str:
    spec = fitted.spec
    lines = ["mv," + ",".join(spec.lv_names)]
    for j, name in enumerate(spec.mv_names):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in fitted.loadings[j]))
    return "\n".join(lines) + "\n"


def path_table(fitted: FittedModel) -> str:
    spec = fitted.spec
    P = fitted.path_matrix()
    lines = ["from," + ",".join(spec.lv_names)]
    for p, name in enumerate(spec.lv_names):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in P[p]))
    return "\n".join(lines) + "\n"


@dataclass
class GroupSummary:
    lv_names: list[str]
    sizes: list[int]
    # stats[k][p] -> dict of STATS for cluster k and LV p
    stats: list[list[dict[str, float]]]

    def to_dict(self):
        return {"lv_names": self.lv_names, "sizes": self.sizes, "stats": self.stats}

    def to_markdown(self) -> str:
        out = []
        for k, size in enumerate(self.sizes):
            out.append(f"Group {k + 1} (n={size})\n")
            out.append("| LV | " + " | ".join(STATS) + " |")
            out.append("|---|" + "---|" * len(STATS))
            for p, name in enumerate(self.lv_names):
                s = self.stats[k][p]
                out.append(f"| {name} | " + " | ".join(f"{s[c]:.3f}" for c in STATS) + " |")
            out.append("")
        return "\n".join(out)


def summarize_groups(fitted: FittedModel, X) -> GroupSummary:
    """Six-number summaries per cluster of min-max normalized LV scores."""
    Y = _as_array(X) @ fitted.loadings
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Y = (Y - lo) / span
    labels = np.asarray(fitted.labels)
    sizes, stats = [], []
    for k in range(fitted.n_clusters):
        block = Y[labels == k]
        sizes.append(int(block.shape[0]))
        rows = []
        for p in range(Y.shape[1]):
            col = block[:, p]
            q = np.quantile(col, [0, 0.25, 0.5, 0.75, 1]) if col.size else [np.nan] * 5
            rows.append({"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
                         "mean": float(col.mean()) if col.size else float("nan"),
                         "q3": float(q[3]), "max": float(q[4])})
        stats.append(rows)
    return GroupSummary(list(fitted.spec.lv_names), sizes, stats)


def write_atomic(path, text: str):
    """Write ``text`` to a temp file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
