"""Choosing the number of clusters and classifying restarts."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (FitOptions, FittedModel, _as_array, _zscore, fit_given_partition,
                   fit_multistart, fit_plain_pls, kmeans)
from .metrics import adjusted_rand_index
from .model_spec import PathModelSpec

logger = logging.getLogger(__name__)

REFERENCE_STARTS = 3


def dispersion(Y, labels) -> tuple[float, float]:
    """Within- and between-cluster sums of squares of the rows of ``Y``."""
    Y = np.asarray(Y, dtype=float)
    labels = np.asarray(labels)
    grand = Y.mean(axis=0)
    within = between = 0.0
    for k in np.unique(labels):
        block = Y[labels == k]
        centre = block.mean(axis=0)
        within += float(((block - centre) ** 2).sum())
        between += block.shape[0] * float(((centre - grand) ** 2).sum())
    return within, between


def pseudo_f(Y, labels) -> float:
    """Between/within variance ratio ``[B/(K-1)] / [W/(n-K)]``; inf when W is 0."""
    n = len(labels)
    K = len(np.unique(labels))
    if K < 2 or K >= n:
        raise ValueError(f"pseudo-F needs 2 <= K < n, got K={K}, n={n}")
    within, between = dispersion(Y, labels)
    if within <= 1e-12 * max(between, 1.0):
        return math.inf
    return (between / (K - 1)) / (within / (n - K))


def _reference_log_w(Y, K, n_references, rng):
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    out = np.empty(n_references)
    for b in range(n_references):
        ref = rng.uniform(lo, hi, size=Y.shape)
        if K == 1:
            w = float(((ref - ref.mean(axis=0)) ** 2).sum())
        else:
            _, w = kmeans(ref, K, REFERENCE_STARTS, int(rng.integers(2**32)))
        out[b] = math.log(w)
    return out


@dataclass
class KSelectionResult:
    candidate_ks: list[int]
    pseudo_f: list[float]
    chosen_k: int
    reference_count: int
    objectives: list[float]
    gap: list[float]  # aligned with gap_ks
    gap_sd: list[float]
    gap_ks: list[int]
    gap_k: int
    weak_evidence: bool
    degenerate_ks: list[int] = field(default_factory=list)
    score_source: str = "model"

    def to_dict(self):
        d = asdict(self)
        # JSON has no infinity
        d["pseudo_f"] = [None if math.isinf(v) else v for v in self.pseudo_f]
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["K", "pseudo_f"])
        for k, f in zip(self.candidate_ks, self.pseudo_f):
            writer.writerow([k, "inf" if math.isinf(f) else repr(f)])
        return buf.getvalue()


def select_k(spec: PathModelSpec, X, k_min=2, k_max=10, options: FitOptions | None = None,
             seed=None, n_references=50, score_source="model") -> KSelectionResult:
    """Scan K over ``[k_min, k_max]`` and pick the pseudo-F maximum.

    For each K a multistart fit supplies the partition and the standardized
    scores ``X Lambda``; with ``score_source='plain'`` the scores come from one
    plain PLS fit shared by every K. The gap statistic against uniform
    references over the score ranges is reported alongside; it also decides
    ``weak_evidence`` (the gap rule prefers a single cluster).
    """
    options = options or FitOptions()
    X = _as_array(X)
    n = X.shape[0]
    if not 2 <= k_min < k_max:
        raise ValueError("need 2 <= k_min < k_max (at least two candidate K)")
    if k_max > n / 2:
        raise ValueError(f"k_max={k_max} exceeds n/2={n / 2}")
    if score_source not in ("model", "plain"):
        raise ValueError(f"unknown score source {score_source!r}")
    if n_references < 2:
        raise ValueError("need at least two reference datasets")

    fit_seed, ref_seed = (int(s.generate_state(1)[0])
                          for s in np.random.SeedSequence(seed).spawn(2))

    plain_scores = _zscore(X @ fit_plain_pls(spec, X, options).loadings)
    ks = list(range(k_min, k_max + 1))
    curve, objectives, degenerate = [], [], []
    gap, gap_sd = [], []
    ref_rng = np.random.default_rng(ref_seed)

    def add_gap(Y, labels, K):
        w, _ = dispersion(Y, labels)
        refs = _reference_log_w(Y, K, n_references, ref_rng)
        log_w = math.log(w) if w > 0 else -math.inf
        gap.append(float(refs.mean() - log_w))
        gap_sd.append(float(refs.std() * math.sqrt(1 + 1 / n_references)))

    add_gap(plain_scores, np.zeros(n, dtype=int), 1)
    for K in ks:
        opts = FitOptions(options.tolerance, options.max_iterations, options.n_starts,
                          fit_seed + K, options.n_jobs)
        fitted = fit_multistart(spec, X, K, opts)
        Y = plain_scores if score_source == "plain" else _zscore(X @ fitted.loadings)
        f = pseudo_f(Y, fitted.labels)
        if math.isinf(f):
            degenerate.append(K)
            logger.warning("zero within-cluster dispersion at K=%d", K)
        curve.append(f)
        objectives.append(fitted.objective_value)
        add_gap(Y, fitted.labels, K)

    chosen = ks[int(np.argmax(curve))]
    gap_ks = [1] + ks
    gap_k = gap_ks[-1]
    for i in range(len(gap_ks) - 1):
        if gap[i] >= gap[i + 1] - gap_sd[i + 1]:
            gap_k = gap_ks[i]
            break
    return KSelectionResult(ks, curve, chosen, n_references, objectives, gap, gap_sd,
                            gap_ks, gap_k, weak_evidence=gap_k == 1,
                            degenerate_ks=degenerate, score_source=score_source)


CATEGORIES = ("true", "global_best", "local_minimum", "overfit")


@dataclass
class RestartDiagnostics:
    counts: dict[str, int]
    n_runs: int

    @property
    def percentages(self) -> dict[str, float]:
        return {c: 100.0 * self.counts[c] / self.n_runs for c in CATEGORIES}

    def __add__(self, other):
        return RestartDiagnostics({c: self.counts[c] + other.counts[c] for c in CATEGORIES},
                                  self.n_runs + other.n_runs)

    def to_markdown(self, label="") -> str:
        pct = self.percentages
        head = "| | model is true | global best | local minima | overfitting |\n|---|---|---|---|---|\n"
        return head + (f"| {label} | {pct['true']:.2f} | {pct['global_best']:.2f} "
                       f"| {pct['local_minimum']:.2f} | {pct['overfit']:.2f} |\n")


def _objective_and_labels(run):
    if isinstance(run, FittedModel):
        return run.objective_value, run.labels
    obj, labels = run
    return float(obj), np.asarray(labels)


def restart_diagnostics(runs, true_partition=None, true_objective=None,
                        tol=1e-6) -> RestartDiagnostics:
    """Classify runs on one dataset.

    ``runs`` holds fitted models or ``(objective, labels)`` pairs. In order of
    precedence a run is ``true`` (recovers ``true_partition`` exactly),
    ``overfit`` (objective below ``true_objective - tol``), ``local_minimum``
    (objective above the best known objective by more than ``tol``), or
    ``global_best``.
    """
    pairs = [_objective_and_labels(r) for r in runs]
    if not pairs:
        raise ValueError("need at least one run")
    best = min(obj for obj, _ in pairs)
    if true_objective is not None:
        best = min(best, true_objective)
    counts = dict.fromkeys(CATEGORIES, 0)
    for obj, labels in pairs:
        if true_partition is not None and adjusted_rand_index(labels, true_partition) == 1.0:
            counts["true"] += 1
        elif true_objective is not None and obj < true_objective - tol:
            counts["overfit"] += 1
        elif obj > best + tol:
            counts["local_minimum"] += 1
        else:
            counts["global_best"] += 1
    return RestartDiagnostics(counts, len(pairs))


def true_partition_objective(spec, X, true_partition, options=None) -> float:
    """Objective attained when the generating partition is held fixed."""
    return fit_given_partition(spec, X, true_partition, options).objective_value
