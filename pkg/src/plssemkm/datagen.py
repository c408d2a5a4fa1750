"""Synthetic data from a clustered structural equation model.

Exogenous scores come from a K-component Gaussian mixture; endogenous scores
follow the structural equations; manifest variables reflect their LV through
a common loading plus Gaussian measurement error::

    H = Xi Gamma' (I - B')^-1 + Z (I - B')^-1
    X = Xi Lambda_H' + H Lambda_L' + E
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model_spec import PathModelSpec, build_spec

PROPORTIONS = {
    3: {
        "balanced": (0.33, 0.33, 0.34),
        "unbalanced1": (0.66, 0.17, 0.17),
        "unbalanced2": (0.15, 0.42, 0.43),
    },
    4: {
        "balanced": (0.25, 0.25, 0.25, 0.25),
        "unbalanced1": (0.40, 0.20, 0.20, 0.20),
        "unbalanced2": (0.10, 0.30, 0.30, 0.30),
    },
}

SIGMA_LEVELS = {"low": 0.30, "medium": 0.40, "high": 0.50}
SAMPLE_SIZES = {"small": 150, "large": 300}

# Distance between neighbouring cluster centres in the exogenous space and the
# within-cluster SD of the exogenous scores. Chosen so that sigma=0.30 gives
# well separated groups and sigma=0.50 visibly overlapping ones.
DEFAULT_SEPARATION = 6.0
DEFAULT_WITHIN_SD = 0.05


def model1_spec() -> PathModelSpec:
    """Two exogenous LVs jointly explaining one endogenous LV, three MVs each."""
    return build_spec(
        {"xi1": ["x1", "x2", "x3"], "xi2": ["x4", "x5", "x6"], "eta1": ["x7", "x8", "x9"]},
        [("xi1", "eta1"), ("xi2", "eta1")],
    )


def model2_spec() -> PathModelSpec:
    """One exogenous LV driving a chain of two endogenous LVs, three MVs each."""
    return build_spec(
        {"xi1": ["x1", "x2", "x3"], "eta1": ["x4", "x5", "x6"], "eta2": ["x7", "x8", "x9"]},
        [("xi1", "eta1"), ("eta1", "eta2")],
    )


PATH_MODELS = {"model1": model1_spec, "model2": model2_spec}


@dataclass(frozen=True)
class SimConfig:
    n: int = 150
    n_clusters: int = 3
    proportions: tuple[float, ...] | str = "balanced"
    sigma: float = 0.30
    path_model: str = "model1"
    loading_value: float = 0.85
    inner_value: float = 0.85
    separation: float = DEFAULT_SEPARATION
    within_sd: float = DEFAULT_WITHIN_SD
    structural_sd: float | None = None  # defaults to sigma

    def __post_init__(self):
        props = self.resolved_proportions()
        if len(props) != self.n_clusters:
            raise ValueError(f"{len(props)} proportions for K={self.n_clusters}")
        if abs(sum(props) - 1.0) > 1e-9:
            raise ValueError(f"proportions sum to {sum(props)}, not 1")
        if self.n_clusters > self.n:
            raise ValueError(f"K={self.n_clusters} exceeds n={self.n}")
        if min(segment_counts(self.n, props)) < 1:
            raise ValueError("a segment would be empty at this sample size")
        if self.path_model not in PATH_MODELS:
            raise ValueError(f"unknown path model {self.path_model!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def resolved_proportions(self) -> tuple[float, ...]:
        if isinstance(self.proportions, str):
            try:
                return PROPORTIONS[self.n_clusters][self.proportions]
            except KeyError:
                raise ValueError(
                    f"no {self.proportions!r} proportions for K={self.n_clusters}") from None
        return tuple(float(p) for p in self.proportions)

    def spec(self) -> PathModelSpec:
        return PATH_MODELS[self.path_model]()


@dataclass
class SimDataset:
    X: np.ndarray
    labels: np.ndarray
    spec: PathModelSpec
    loadings: np.ndarray  # J x P generating loadings
    gamma: np.ndarray
    beta: np.ndarray
    centers: np.ndarray  # K x H exogenous cluster centres
    exogenous: np.ndarray  # Xi
    endogenous: np.ndarray  # H
    config: object = None
    column_names: tuple[str, ...] = field(default=())

    @property
    def noiseless(self) -> np.ndarray:
        """Reconstruction without the measurement error term."""
        n_exo = self.exogenous.shape[1]
        return (self.exogenous @ self.loadings[:, :n_exo].T
                + self.endogenous @ self.loadings[:, n_exo:].T)


def segment_counts(n, proportions) -> list[int]:
    """Largest-remainder rounding of ``n * p_k`` (ties to the earlier segment)."""
    quotas = [n * p for p in proportions]
    counts = [math.floor(q + 1e-9) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    short = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda k: (-round(remainders[k], 9), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


def cluster_centers(n_clusters, dim, separation) -> np.ndarray:
    """Equally spaced centres with neighbouring distance ``separation``.

    A regular simplex when it fits in ``dim`` dimensions, points on a line when
    ``dim == 1``, otherwise a regular polygon in the first two coordinates.
    Centres are centred at the origin.
    """
    K = n_clusters
    if K == 1:
        return np.zeros((1, dim))
    if dim == 1:
        pts = np.arange(K, dtype=float)[:, None] * separation
    elif dim >= K - 1:
        # vertices of the standard simplex are sqrt(2) apart
        basis = np.eye(K) * separation / math.sqrt(2)
        basis -= basis.mean(axis=0)
        _, _, vt = np.linalg.svd(basis)
        pts = np.zeros((K, dim))
        pts[:, :K - 1] = basis @ vt[:K - 1].T
    else:
        radius = separation / (2 * math.sin(math.pi / K))
        angles = math.pi / 2 + 2 * math.pi * np.arange(K) / K
        pts = np.zeros((K, dim))
        pts[:, 0] = radius * np.cos(angles)
        pts[:, 1] = radius * np.sin(angles)
    return pts - pts.mean(axis=0)


def _labels(counts, rng):
    labels = np.repeat(np.arange(len(counts)), counts)
    return labels[rng.permutation(labels.size)]


def generate_exogenous(config: SimConfig, seed=None, n_exogenous=None):
    """Mixture draws for the exogenous scores; returns ``(Xi, labels, centers)``."""
    rng = np.random.default_rng(seed)
    if n_exogenous is None:
        n_exogenous = len(config.spec().exogenous)
    counts = segment_counts(config.n, config.resolved_proportions())
    labels = _labels(counts, rng)
    centers = cluster_centers(config.n_clusters, n_exogenous, config.separation)
    xi = centers[labels] + config.within_sd * rng.standard_normal((config.n, n_exogenous))
    return xi, labels, centers


def _structural_parameters(spec: PathModelSpec, value):
    exo, endo = spec.exogenous, spec.endogenous
    d_b = spec.structural_design
    gamma = value * d_b[np.ix_(endo, exo)]
    beta = value * d_b[np.ix_(endo, endo)]
    return gamma, beta


def generate_dataset(config: SimConfig, seed=None) -> SimDataset:
    rng = np.random.default_rng(seed)
    spec = config.spec()
    xi, labels, centers = generate_exogenous(config, rng)
    gamma, beta = _structural_parameters(spec, config.inner_value)
    L = len(spec.endogenous)
    eye = np.eye(L)
    if abs(np.linalg.det(eye - beta.T)) < 1e-12:
        raise ValueError("I - B' is singular")
    inv = np.linalg.inv(eye - beta.T)
    structural_sd = config.sigma if config.structural_sd is None else config.structural_sd
    zeta = structural_sd * rng.standard_normal((config.n, L))
    eta = xi @ gamma.T @ inv + zeta @ inv
    loadings = config.loading_value * spec.measurement_design
    scores = np.hstack([xi, eta])
    X = scores @ loadings.T + config.sigma * rng.standard_normal((config.n, spec.n_mv))
    return SimDataset(X, labels, spec, loadings, gamma, beta, centers, xi, eta,
                      config, spec.mv_names)


INTRO_SEPARATION = 7.0


def intro_spec() -> PathModelSpec:
    """Model 1 with two pure-noise MVs appended to every block (five MVs per LV)."""
    return build_spec(
        {
            "xi1": ["x1", "x2", "x3", "n1", "n2"],
            "xi2": ["x4", "x5", "x6", "n3", "n4"],
            "eta1": ["x7", "x8", "x9", "n5", "n6"],
        },
        [("xi1", "eta1"), ("xi2", "eta1")],
    )


def generate_intro_dataset(n_per_design=(30, 30, 40), seed=None,
                           separation=INTRO_SEPARATION, noise_var=6.0,
                           endogenous_var=3.0, loading=0.85, sigma=0.30) -> SimDataset:
    """Three-group data whose structure is masked by high-variance noise MVs.

    Two exogenous LVs come from unit-variance circular normals centred on an
    equilateral triangle with side ``separation``. The endogenous LV is an
    independent ``N(0, endogenous_var)`` draw with no group structure. Each LV
    reflects three MVs with error SD ``sigma``, and every block also holds two
    MVs drawn from ``N(0, noise_var)``.
    """
    rng = np.random.default_rng(seed)
    counts = list(n_per_design)
    n = sum(counts)
    labels = _labels(counts, rng)
    centers = cluster_centers(len(counts), 2, separation)
    xi = centers[labels] + rng.standard_normal((n, 2))
    eta = math.sqrt(endogenous_var) * rng.standard_normal((n, 1))
    structured = np.hstack([np.repeat(xi, 3, axis=1), np.repeat(eta, 3, axis=1)]) * loading
    structured += sigma * rng.standard_normal(structured.shape)
    noise = math.sqrt(noise_var) * rng.standard_normal((n, 6))
    spec = intro_spec()
    # column order follows the block layout: x1..x3, n1, n2, x4..x6, n3, n4, x7..x9, n5, n6
    X = np.hstack([structured[:, 0:3], noise[:, 0:2], structured[:, 3:6], noise[:, 2:4],
                   structured[:, 6:9], noise[:, 4:6]])
    loadings = np.zeros((15, 3))
    for p, rows in enumerate(([0, 1, 2], [5, 6, 7], [10, 11, 12])):
        loadings[rows, p] = loading
    return SimDataset(X, labels, spec, loadings, np.zeros((1, 2)), np.zeros((1, 1)), centers, xi, eta,
                      None, spec.mv_names)


ECSI_SEED = 20240917


def generate_ecsi_like(spec: PathModelSpec, n=250, group_sizes=(92, 112, 46), seed=ECSI_SEED,
                       path_value=0.5, loading=0.85, missing_rate=0.01, separation=4.0):
    """Synthetic 1..10 ratings shaped like a customer-satisfaction survey.

    The first exogenous LV is a three-group mixture on a line, the others are
    standard normal; endogenous LVs follow the model's paths with coefficient
    ``path_value``. Continuous indicators are mapped onto integer ratings and a
    fraction ``missing_rate`` of cells is blanked (NaN). Returns ``(ratings,
    labels)``.
    """
    if sum(group_sizes) != n:
        raise ValueError("group sizes must sum to n")
    rng = np.random.default_rng(seed)
    labels = _labels(list(group_sizes), rng)
    exo, endo = spec.exogenous, spec.endogenous
    scores = np.zeros((n, spec.n_lv))
    centers = cluster_centers(len(group_sizes), 1, separation)[:, 0]
    scores[:, exo] = rng.standard_normal((n, len(exo))) * 0.4
    scores[:, exo[0]] += centers[labels]
    for l in spec.endogenous_order():
        pred = spec.predecessors(l)
        scores[:, l] = path_value * scores[:, pred].sum(axis=1) + 0.4 * rng.standard_normal(n)
    scores = (scores - scores.mean(axis=0)) / scores.std(axis=0)
    cont = scores @ (loading * spec.measurement_design).T
    cont += math.sqrt(1 - loading**2) * rng.standard_normal(cont.shape)
    ratings = np.clip(np.rint(6.0 + 1.6 * cont), 1, 10)
    ratings[rng.random(ratings.shape) < missing_rate] = np.nan
    return ratings, labels
