"""Monte Carlo grid over simulated datasets: generate, fit, score."""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .core import FitOptions, compute_centroids, fit_multistart, standardize, tandem_baseline
from .datagen import SAMPLE_SIZES, SIGMA_LEVELS, SimConfig, generate_dataset
from .metrics import adjusted_rand_index, fit_report, penalized_r_squared
from .selection import select_k

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

# context -> (path model, K)
CONTEXTS = {1: ("model1", 3), 2: ("model2", 3), 3: ("model1", 4), 4: ("model2", 4)}


def case_levels(case: int) -> tuple[str, str, str]:
    """(sample size, segment sizes, error level) labels of cases 1..18."""
    if not 1 <= case <= 18:
        raise ValueError(f"case must lie in 1..18, got {case}")
    i = case - 1
    size = ("small", "large")[i // 9]
    props = ("balanced", "unbalanced1", "unbalanced2")[(i % 9) // 3]
    error = ("low", "medium", "high")[i % 3]
    return size, props, error


def case_config(context: int, case: int, **overrides) -> SimConfig:
    model, K = CONTEXTS[context]
    size, props, error = case_levels(case)
    cfg = SimConfig(n=SAMPLE_SIZES[size], n_clusters=K, proportions=props,
                    sigma=SIGMA_LEVELS[error], path_model=model)
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class GridCell:
    name: str
    config: SimConfig
    replicates: int | None = None  # falls back to the grid-wide count


def _cell_from_entry(entry: dict, index: int) -> list[GridCell]:
    entry = dict(entry)
    reps = entry.pop("replicates", None)
    if "context" in entry:
        context = int(entry.pop("context"))
        cases = entry.pop("cases", None) or [entry.pop("case")]
        cells = []
        for case in cases:
            cfg = case_config(context, int(case), **_config_fields(entry))
            cells.append(GridCell(entry.get("name", f"ctx{context}-case{case}"), cfg, reps))
        return cells
    name = entry.pop("name", f"cell{index + 1}")
    fields = _config_fields(entry)
    if "k" in entry:
        fields["n_clusters"] = int(entry["k"])
    if "model" in entry:
        fields["path_model"] = entry["model"]
    if isinstance(fields.get("proportions"), list):
        fields["proportions"] = tuple(fields["proportions"])
    return [GridCell(name, SimConfig(**fields), reps)]


def _config_fields(entry):
    allowed = {"n", "n_clusters", "proportions", "sigma", "path_model", "loading_value",
               "inner_value", "separation", "within_sd", "structural_sd"}
    return {k: v for k, v in entry.items() if k in allowed}


def load_grid(path) -> list[GridCell]:
    """Read ``[[cell]]`` entries from a TOML or JSON file.

    An entry either names a numbered context (1-4) with ``case`` or ``cases``, or
    spells out ``n``, ``k``, ``proportions``, ``sigma``, ``model``; ``replicates``
    is optional per entry.
    """
    path = str(path)
    with open(path, "rb") as fh:
        raw = json.load(fh) if path.endswith(".json") else tomllib.load(fh)
    entries = raw.get("cell", raw.get("cells"))
    if not entries:
        raise ValueError(f"{path}: no [[cell]] entries")
    cells = []
    for i, entry in enumerate(entries):
        cells.extend(_cell_from_entry(entry, i))
    return cells


def replicate_seed(master, cell_index, replicate) -> int:
    return int(np.random.SeedSequence([master, cell_index, replicate]).generate_state(1)[0])


def run_replicate(config: SimConfig, seed, options: FitOptions, with_k_selection=False,
                  k_range=(2, 6)) -> dict[str, float]:
    data = generate_dataset(config, seed)
    X = standardize(data.X).values
    opts = replace(options, rng_seed=seed)
    fitted = fit_multistart(data.spec, X, config.n_clusters, opts)
    report = fit_report(fitted, X)
    plain, tandem_labels = tandem_baseline(data.spec, X, config.n_clusters, opts)
    plain_report = fit_report(plain, X)
    tandem_r2 = penalized_r_squared(
        plain_report.mean_r_squared, X, tandem_labels,
        compute_centroids(tandem_labels, X, config.n_clusters), plain.loadings)
    out = {
        "r2_star": report.penalized_r_squared,
        "ari": adjusted_rand_index(fitted.labels, data.labels),
        "gof": report.gof,
        "converged": float(fitted.converged),
        "iterations": float(fitted.n_iterations),
        "tandem_r2_star": tandem_r2,
        "tandem_ari": adjusted_rand_index(tandem_labels, data.labels),
    }
    if with_k_selection:
        sel = select_k(data.spec, X, k_range[0], k_range[1], options, seed=seed)
        out["chosen_k"] = float(sel.chosen_k)
        out["k_correct"] = float(sel.chosen_k == config.n_clusters)
    return out


@dataclass
class GridResults:
    rows: list[tuple[str, int, str, str, float]]  # cell, replicate, method, metric, value
    failures: list[tuple[str, int, str]]
    cell_names: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "replicate", "method", "metric", "value"])
        for row in self.rows:
            w.writerow(list(row[:4]) + [repr(row[4])])
        return buf.getvalue()

    def means(self) -> dict[str, dict[str, float]]:
        acc = defaultdict(list)
        for cell, _, method, metric, value in self.rows:
            acc[(cell, f"{method}:{metric}")].append(value)
        out = defaultdict(dict)
        for (cell, key), vals in acc.items():
            out[cell][key] = float(np.mean(vals))
        return out

    def to_markdown(self, columns=("pls-sem-km:r2_star", "tandem:r2_star",
                                   "pls-sem-km:ari", "tandem:ari")) -> str:
        means = self.means()
        present = [c for c in columns if any(c in m for m in means.values())]
        lines = ["| cell | " + " | ".join(present) + " |",
                 "|---|" + "---|" * len(present)]
        for name in self.cell_names:
            m = means.get(name, {})
            vals = [f"{m[c]:.3f}" if c in m else "" for c in present]
            lines.append(f"| {name} | " + " | ".join(vals) + " |")
        if self.failures:
            lines.append("")
            lines.append(f"{len(self.failures)} replicate(s) failed.")
        return "\n".join(lines) + "\n"


def run_experiment_grid(grid, replicates=1, options: FitOptions | None = None, seed=0,
                        with_k_selection=False) -> GridResults:
    """Run every cell for its replicate count; a failing replicate is logged and skipped."""
    options = options or FitOptions()
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    cells = [c if isinstance(c, GridCell) else GridCell(f"cell{i + 1}", c)
             for i, c in enumerate(grid)]
    rows, failures = [], []
    for ci, cell in enumerate(cells):
        for r in range(cell.replicates or replicates):
            rs = replicate_seed(seed, ci, r)
            try:
                values = run_replicate(cell.config, rs, options, with_k_selection)
            except (ArithmeticError, ValueError) as exc:
                logger.warning("cell %s replicate %d failed: %s", cell.name, r, exc)
                failures.append((cell.name, r, str(exc)))
                continue
            for key, value in values.items():
                method, metric = ("tandem", key[7:]) if key.startswith("tandem_") \
                    else ("pls-sem-km", key)
                rows.append((cell.name, r, method, metric, value))
    return GridResults(rows, failures, [c.name for c in cells])
