"""Fit indices and partition agreement."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import FittedModel, _as_array, _solve_normal, _zscore
from .model_spec import PathModelSpec


def _corr(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx <= 1e-12 * max(1.0, np.abs(x).max()) or sy <= 1e-12 * max(1.0, np.abs(y).max()):
        raise ValueError("zero-variance input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def communality(x, y) -> float:
    """Squared correlation between a manifest column and its latent score."""
    return _corr(x, y) ** 2


def block_communality(block, y) -> float:
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    if block.shape[1] == 0:
        raise ValueError("empty block")
    return float(np.mean([communality(col, y) for col in block.T]))


def r_squared(y, predecessors) -> float:
    """Coefficient of determination of the OLS fit of ``y`` on ``predecessors``."""
    y = np.asarray(y, dtype=float)
    A = np.asarray(predecessors, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[1] == 0:
        raise ValueError("need at least one predecessor")
    yc = y - y.mean()
    Ac = A - A.mean(axis=0)
    coef = _solve_normal(Ac, yc, "r_squared")
    resid = yc - Ac @ coef
    tss = yc @ yc
    if tss <= 0:
        raise ValueError("zero-variance response")
    return float(max(0.0, 1.0 - (resid @ resid) / tss))


def gof(mean_communality: float, mean_r2: float) -> float:
    """Geometric mean of average communality and average endogenous R^2."""
    return math.sqrt(mean_communality * mean_r2)


def penalized_r_squared(mean_r2, X, labels, centroids, loadings) -> float:
    """``sqrt(mean R^2 * ||U C Lambda Lambda'||^2 / ||X||^2)``."""
    X = _as_array(X)
    total = float((X * X).sum())
    if total <= 0:
        raise ValueError("||X|| is zero")
    fitted = (np.asarray(centroids) @ loadings @ loadings.T)[np.asarray(labels)]
    return math.sqrt(mean_r2 * float((fitted * fitted).sum()) / total)


def cronbach_alpha(block) -> float:
    """Alpha on standardized items; a single-item block returns 1.0."""
    block = np.asarray(block, dtype=float)
    if block.ndim == 1 or block.shape[1] == 1:
        return 1.0
    z = (block - block.mean(axis=0)) / block.std(axis=0, ddof=1)
    k = z.shape[1]
    total_var = z.sum(axis=1).var(ddof=1)
    if total_var <= 0:
        raise ValueError("zero total variance")
    return k / (k - 1) * (1.0 - z.var(axis=0, ddof=1).sum() / total_var)


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def adjusted_rand_index(p1, p2) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    if p1.shape != p2.shape:
        raise ValueError("partitions have different lengths")
    _, a = np.unique(p1, return_inverse=True)
    _, b = np.unique(p2, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(p1.size)
    expected = rows * cols / total if total else 0.0
    max_index = (rows + cols) / 2
    if max_index == expected:
        # both partitions trivial (all singletons or one block)
        return 1.0
    return float((index - expected) / (max_index - expected))


@dataclass
class FitReport:
    lv_names: list[str]
    mv_names: list[str]
    mv_communality: list[float]
    block_communality: list[float]
    r_squared: dict[str, float]
    mean_communality: float
    mean_r_squared: float
    gof: float
    penalized_r_squared: float
    cronbach_alpha: list[float]
    score_source: str = "data"

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_markdown(self) -> str:
        lines = ["| LVs | Communality | R-Squared | Cronbach's alpha |",
                 "|---|---|---|---|"]
        for p, name in enumerate(self.lv_names):
            r2 = self.r_squared.get(name, 0.0)
            lines.append(f"| {name} | {self.block_communality[p]:.3f} | {r2:.3f} "
                         f"| {self.cronbach_alpha[p]:.3f} |")
        lines.append("")
        lines.append(f"Average communality: {self.mean_communality:.4f}  ")
        lines.append(f"Average R-squared: {self.mean_r_squared:.4f}  ")
        lines.append(f"GoF: {self.gof:.3f}  ")
        lines.append(f"Penalized R-squared: {self.penalized_r_squared:.3f}")
        return "\n".join(lines) + "\n"


def fit_report(fitted: FittedModel, X, score_source="data") -> FitReport:
    """Communalities, R^2, GoF, R^2* and alpha for a fitted model.

    ``score_source='data'`` scores units by ``X Lambda``; ``'centroids'`` uses
    ``U C Lambda`` (communalities then reflect the between-cluster part only).
    """
    spec: PathModelSpec = fitted.spec
    X = _as_array(X)
    if score_source == "data":
        Y = _zscore(X @ fitted.loadings)
    else:
        Y = fitted.latent_scores(X, source="centroids")
    mv_com = np.zeros(spec.n_mv)
    block_com = []
    alphas = []
    for p in range(spec.n_lv):
        idx = spec.block(p)
        for j in idx:
            mv_com[j] = communality(X[:, j], Y[:, p])
        block_com.append(float(mv_com[idx].mean()))
        alphas.append(float(cronbach_alpha(X[:, idx])))
    r2 = {}
    for l in spec.endogenous:
        r2[spec.lv_names[l]] = r_squared(Y[:, l], Y[:, spec.predecessors(l)])
    mean_com = float(mv_com.mean())
    mean_r2 = float(np.mean(list(r2.values()))) if r2 else 0.0
    return FitReport(
        lv_names=list(spec.lv_names),
        mv_names=list(spec.mv_names),
        mv_communality=mv_com.tolist(),
        block_communality=block_com,
        r_squared=r2,
        mean_communality=mean_com,
        mean_r_squared=mean_r2,
        gof=gof(mean_com, mean_r2),
        penalized_r_squared=penalized_r_squared(
            mean_r2, X, fitted.labels, fitted.centroids, fitted.loadings),
        cronbach_alpha=alphas,
        score_source=score_source,
    )
