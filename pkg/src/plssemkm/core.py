"""Simultaneous PLS path modelling and reduced K-means (PLS-SEM-KM).

All routines work on a standardized ``n x J`` data matrix ``X`` and represent a
partition as an integer label vector (0-based internally; serialized 1-based).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model_spec import PathModelSpec

logger = logging.getLogger(__name__)

# relative conditioning threshold for normal-equation solves
COND_RTOL = 1e-12


class NumericalError(ArithmeticError):
    """A singular or degenerate system was met during estimation."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class CollapseError(NumericalError):
    """All latent score rows coincide, so no covariance structure is left."""


@dataclass
class DataMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    standardized: bool = False
    means: np.ndarray | None = None
    scales: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape


def standardize(raw, column_names=None) -> DataMatrix:
    """Column z-scores with the ``n - 1`` denominator."""
    values = np.asarray(raw, dtype=float)
    if values.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    n, n_cols = values.shape
    if n < 2:
        raise ValueError("need at least two observations to standardize")
    if column_names is None:
        column_names = tuple(f"x{j + 1}" for j in range(n_cols))
    means = values.mean(axis=0)
    scales = values.std(axis=0, ddof=1)
    constant = np.flatnonzero(scales <= 1e-12 * np.maximum(1.0, np.abs(means)))
    if constant.size:
        names = ", ".join(column_names[j] for j in constant)
        raise ValueError(f"constant column(s): {names}")
    z = (values - means) / scales
    return DataMatrix(z, tuple(column_names), True, means, scales)


def _as_array(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


@dataclass
class FitOptions:
    tolerance: float = 1e-12
    max_iterations: int = 300
    n_starts: int = 15
    rng_seed: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class ModelState:
    loadings: np.ndarray  # J x P
    centroids: np.ndarray  # K x J
    labels: np.ndarray  # n, values in 0..K-1
    n_clusters: int
    scores: np.ndarray  # n x P, U C Lambda
    iteration: int = 0
    objective_trace: list[float] = field(default_factory=list)
    repairs: int = 0

    def membership_matrix(self) -> np.ndarray:
        return membership_matrix(self.labels, self.n_clusters)


@dataclass
class FittedModel:
    state: ModelState
    path_gamma: np.ndarray  # L x H
    path_beta: np.ndarray  # L x L
    converged: bool
    n_iterations: int
    objective_value: float
    spec: PathModelSpec
    seed: int | None = None
    start_objectives: list[float] = field(default_factory=list)
    start_seeds: list[int] = field(default_factory=list)
    start_labels: list[np.ndarray] = field(default_factory=list)
    failed_starts: list[str] = field(default_factory=list)

    @property
    def loadings(self):
        return self.state.loadings

    @property
    def labels(self):
        return self.state.labels

    @property
    def centroids(self):
        return self.state.centroids

    @property
    def n_clusters(self):
        return self.state.n_clusters

    def path_matrix(self) -> np.ndarray:
        """P x P coefficients with entry [p, l] = effect of LV p on LV l."""
        spec = self.spec
        out = np.zeros((spec.n_lv, spec.n_lv))
        exo, endo = spec.exogenous, spec.endogenous
        for a, l in enumerate(endo):
            for b, h in enumerate(exo):
                out[h, l] = self.path_gamma[a, b]
            for b, m in enumerate(endo):
                out[m, l] = self.path_beta[a, b]
        return out

    def latent_scores(self, X, source="data") -> np.ndarray:
        """Standardized scores ``X Lambda`` (``source='data'``) or ``U C Lambda``."""
        X = _as_array(X)
        if source == "data":
            return _zscore(X @ self.loadings)
        if source == "centroids":
            return self.state.membership_matrix() @ self.centroids @ self.loadings
        raise ValueError(f"unknown score source {source!r}")


def membership_matrix(labels, n_clusters) -> np.ndarray:
    labels = np.asarray(labels)
    U = np.zeros((labels.size, n_clusters))
    U[np.arange(labels.size), labels] = 1.0
    return U


def normalize_loadings(raw, design) -> np.ndarray:
    """Mask to the design support, scale columns to unit norm, make column sums positive."""
    lam = np.where(np.asarray(design) != 0, raw, 0.0)
    norms = np.linalg.norm(lam, axis=0)
    if np.any(norms <= 1e-300) or not np.all(np.isfinite(norms)):
        bad = np.flatnonzero(~(norms > 1e-300) | ~np.isfinite(norms))
        raise NumericalError(f"zero loading column(s) after masking: {bad.tolist()}")
    lam = lam / norms
    signs = np.where(lam.sum(axis=0) < 0, -1.0, 1.0)
    return lam * signs


def random_labels(n, n_clusters, rng) -> np.ndarray:
    """Uniform random partition conditioned on every cluster being nonempty."""
    if n_clusters > n:
        raise ValueError(f"K={n_clusters} exceeds n={n}")
    for _ in range(100):
        labels = rng.integers(n_clusters, size=n)
        if np.unique(labels).size == n_clusters:
            return labels
    # K close to n: seed each cluster with one distinct unit, the rest uniform
    labels = rng.integers(n_clusters, size=n)
    labels[rng.permutation(n)[:n_clusters]] = np.arange(n_clusters)
    return labels


def init_state(spec: PathModelSpec, X, n_clusters: int, seed=None) -> ModelState:
    X = _as_array(X)
    if n_clusters < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    labels = random_labels(X.shape[0], n_clusters, rng)
    loadings = normalize_loadings(spec.measurement_design, spec.measurement_design)
    C = compute_centroids(labels, X, n_clusters)
    Y = compute_scores(labels, C, loadings)
    return ModelState(loadings, C, labels, n_clusters, Y)


def compute_centroids(labels, X, n_clusters=None) -> np.ndarray:
    """Cluster means, i.e. ``(U'U)^-1 U'X``."""
    X = _as_array(X)
    labels = np.asarray(labels)
    if n_clusters is None:
        n_clusters = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=n_clusters)
    if np.any(counts == 0):
        raise ValueError(f"empty cluster(s): {np.flatnonzero(counts == 0).tolist()}")
    sums = np.zeros((n_clusters, X.shape[1]))
    np.add.at(sums, labels, X)
    return sums / counts[:, None]


def compute_scores(labels, centroids, loadings) -> np.ndarray:
    """Latent scores ``U C Lambda``: each row is its cluster's projected centroid."""
    centroids = np.asarray(centroids)
    loadings = np.asarray(loadings)
    if centroids.shape[1] != loadings.shape[0]:
        raise ValueError(
            f"centroids have {centroids.shape[1]} columns, loadings {loadings.shape[0]} rows")
    return (centroids @ loadings)[np.asarray(labels)]


def inner_approximation(Y, design_sym) -> np.ndarray:
    """Weighted scores ``Y (D_sym * Sigma_Y)`` under the factorial scheme."""
    Y = np.asarray(Y, dtype=float)
    centered = Y - Y.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-12 * max(1.0, np.abs(Y).max())):
        raise CollapseError("latent scores collapsed to a single point")
    cov = centered.T @ centered / Y.shape[0]
    return Y @ (np.asarray(design_sym) * cov)


def outer_update(centroids, labels, Y_W, design) -> np.ndarray:
    """Loadings from regressing the fitted data ``U C`` on the weighted scores.

    The regression ``(UC)' Y_W (Y_W'Y_W)^-1`` is solved with the loading
    pattern fixed to ``design``. Each MV row then has a single free
    coefficient, so the solution is a simple regression on its own LV's
    weighted score and only the diagonal of ``Y_W'Y_W`` enters. The full
    normal matrix is singular whenever K <= P and is never inverted.
    """
    fitted = np.asarray(centroids)[np.asarray(labels)]
    Y_W = np.asarray(Y_W)
    ss = (Y_W * Y_W).sum(axis=0)
    scale = ss.max() if ss.size else 0.0
    dead = np.flatnonzero(ss <= COND_RTOL * scale) if scale > 0 else np.arange(ss.size)
    if dead.size:
        raise NumericalError(f"weighted score column(s) {dead.tolist()} vanish; "
                             "the loading regression is singular")
    raw = (fitted.T @ Y_W) / ss
    return normalize_loadings(raw, design)


def residuals_to_centroids(X, centroids, loadings) -> np.ndarray:
    """n x K squared distances ``||x_i - c_k Lambda Lambda'||^2``."""
    X = _as_array(X)
    proj = np.asarray(centroids) @ loadings @ loadings.T
    sq = (X * X).sum(axis=1)[:, None] - 2 * X @ proj.T + (proj * proj).sum(axis=1)[None, :]
    return np.maximum(sq, 0.0)


def assign_memberships(X, centroids, loadings, return_repairs=False):
    """Row-wise argmin assignment with lowest-index ties and empty-cluster repair.

    An emptied cluster receives the worst-fitting row (largest distance to its
    own projected centroid) among clusters that can spare one.
    """
    dist = residuals_to_centroids(X, centroids, loadings)
    n, n_clusters = dist.shape
    labels = np.argmin(dist, axis=1)
    repairs = 0
    while True:
        counts = np.bincount(labels, minlength=n_clusters)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0 or n < n_clusters:
            break
        own = dist[np.arange(n), labels]
        donors = counts[labels] > 1
        own = np.where(donors, own, -np.inf)
        i = int(np.argmax(own))
        labels[i] = empty[0]
        repairs += 1
    if return_repairs:
        return labels, repairs
    return labels


def objective(X, labels, centroids, loadings) -> float:
    """Squared Frobenius residual ``||X - U C Lambda Lambda'||^2``."""
    X = _as_array(X)
    fitted = (np.asarray(centroids) @ loadings @ loadings.T)[np.asarray(labels)]
    return float(((X - fitted) ** 2).sum())


def _zscore(Y):
    Y = np.asarray(Y, dtype=float)
    sd = Y.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise NumericalError("constant latent score")
    return (Y - Y.mean(axis=0)) / sd


def _solve_normal(A, b, what):
    gram = A.T @ A
    s = np.linalg.svd(gram, compute_uv=False)
    if s[-1] <= COND_RTOL * s[0]:
        raise NumericalError(f"collinear predictor scores for {what}")
    return np.linalg.solve(gram, A.T @ b)


def estimate_path_coefficients(X, loadings, spec: PathModelSpec):
    """OLS of each endogenous score on its direct predecessors.

    Scores are ``X Lambda`` standardized. Returns ``(Gamma, B)`` shaped
    ``L x H`` and ``L x L`` in the model's exogenous/endogenous order.
    """
    Y = _zscore(_as_array(X) @ loadings)
    exo, endo = spec.exogenous, spec.endogenous
    gamma = np.zeros((len(endo), len(exo)))
    beta = np.zeros((len(endo), len(endo)))
    for l in spec.endogenous_order():
        preds = spec.predecessors(l)
        if not preds:
            continue
        coef = _solve_normal(Y[:, preds], Y[:, l], spec.lv_names[l])
        row = endo.index(l)
        for p, c in zip(preds, coef):
            if p in exo:
                gamma[row, exo.index(p)] = c
            else:
                beta[row, endo.index(p)] = c
    return gamma, beta


def _alternate(spec, X, state, options, update_labels=True, callback=None):
    """Run the inner/outer/assignment cycle until the centroid-loading shift is small.

    ``callback(event, **info)`` is invoked after the assignment step
    (``"assign"``), the centroid step (``"centroids"``) and at the end of each
    sweep (``"sweep"``).
    """
    design = spec.measurement_design
    design_sym = spec.structural_design_sym
    K = state.n_clusters
    C, lam, labels, Y = state.centroids, state.loadings, state.labels, state.scores
    converged = False
    it = 0
    while it < options.max_iterations:
        it += 1
        try:
            Y_W = inner_approximation(Y, design_sym)
            lam_new = outer_update(C, labels, Y_W, design)
        except NumericalError as exc:
            raise type(exc)(str(exc), iteration=it) from exc
        if update_labels:
            before = labels
            labels, repairs = assign_memberships(X, C, lam_new, return_repairs=True)
            state.repairs += repairs
            if callback is not None:
                callback("assign", iteration=it, before=before, after=labels,
                         centroids=C, loadings=lam_new, repairs=repairs)
        C_new = compute_centroids(labels, X, K)
        if callback is not None:
            callback("centroids", iteration=it, labels=labels, before=C, after=C_new,
                     loadings=lam_new)
        shift = float(((C @ lam - C_new @ lam_new) ** 2).sum())
        C, lam = C_new, lam_new
        Y = compute_scores(labels, C, lam)
        state.objective_trace.append(objective(X, labels, C, lam))
        if callback is not None:
            callback("sweep", iteration=it, labels=labels, centroids=C, loadings=lam,
                     shift=shift)
        if shift <= options.tolerance:
            converged = True
            break
    state.centroids, state.loadings, state.labels, state.scores = C, lam, labels, Y
    state.iteration = it
    return converged


def _finish(spec, X, state, converged, seed=None) -> FittedModel:
    gamma, beta = estimate_path_coefficients(X, state.loadings, spec)
    return FittedModel(
        state=state,
        path_gamma=gamma,
        path_beta=beta,
        converged=converged,
        n_iterations=state.iteration,
        objective_value=objective(X, state.labels, state.centroids, state.loadings),
        spec=spec,
        seed=seed,
    )


def _check_inputs(spec, X, n_clusters):
    if X.shape[1] != spec.n_mv:
        raise ValueError(f"data has {X.shape[1]} columns, model expects {spec.n_mv}")
    if not 1 <= n_clusters <= X.shape[0]:
        raise ValueError(f"K must lie in [1, n]; got K={n_clusters}, n={X.shape[0]}")


def fit_once(spec: PathModelSpec, X, n_clusters: int, options: FitOptions | None = None,
             seed=None, callback=None) -> FittedModel:
    """One randomly started PLS-SEM-KM run.

    With K=1 the centroid is the zero vector and carries no information about
    the loadings, so the plain PLS loadings are returned with the trivial
    partition.
    """
    options = options or FitOptions()
    X = _as_array(X)
    _check_inputs(spec, X, n_clusters)
    if seed is None:
        seed = options.rng_seed
    if n_clusters == 1:
        plain = fit_plain_pls(spec, X, options)
        labels = np.zeros(X.shape[0], dtype=int)
        C = compute_centroids(labels, X, 1)
        state = ModelState(plain.loadings, C, labels, 1, compute_scores(labels, C, plain.loadings),
                           plain.n_iterations)
        state.objective_trace.append(objective(X, labels, C, plain.loadings))
        return _finish(spec, X, state, plain.converged, seed)
    state = init_state(spec, X, n_clusters, seed)
    converged = _alternate(spec, X, state, options, callback=callback)
    return _finish(spec, X, state, converged, seed)


def fit_given_partition(spec: PathModelSpec, X, labels, options: FitOptions | None = None
                        ) -> FittedModel:
    """Estimate loadings and paths with the partition held fixed.

    Used to obtain the objective of the generating partition when classifying
    restarts as over-fitted.
    """
    options = options or FitOptions()
    X = _as_array(X)
    labels = np.unique(np.asarray(labels), return_inverse=True)[1]
    K = int(labels.max()) + 1
    _check_inputs(spec, X, K)
    lam = normalize_loadings(spec.measurement_design, spec.measurement_design)
    C = compute_centroids(labels, X, K)
    state = ModelState(lam, C, labels, K, compute_scores(labels, C, lam))
    converged = _alternate(spec, X, state, options, update_labels=False)
    return _finish(spec, X, state, converged)


def start_seeds(seed, n_starts) -> list[int]:
    """Independent per-start seeds derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n_starts)]


def fit_multistart(spec: PathModelSpec, X, n_clusters: int,
                   options: FitOptions | None = None) -> FittedModel:
    """Best of ``options.n_starts`` independent runs by objective.

    Ties on the objective go to the earliest start, so the result depends only on
    the seed list, not on how runs were scheduled.
    """
    options = options or FitOptions()
    seeds = start_seeds(options.rng_seed, options.n_starts)

    def run(seed):
        try:
            return fit_once(spec, X, n_clusters, options, seed)
        except NumericalError as exc:
            return exc

    if options.n_jobs > 1:
        with ThreadPoolExecutor(options.n_jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    fits = [(r, s) for r, s in zip(results, seeds) if isinstance(r, FittedModel)]
    failures = [f"seed {s}: {r}" for r, s in zip(results, seeds) if not isinstance(r, FittedModel)]
    if not fits:
        raise NumericalError("all starts failed: " + "; ".join(failures))
    for msg in failures:
        logger.warning("start failed: %s", msg)
    best = min(fits, key=lambda fs: fs[0].objective_value)[0]
    best.start_objectives = [f.objective_value for f, _ in fits]
    best.start_seeds = [s for _, s in fits]
    best.start_labels = [f.labels for f, _ in fits]
    best.failed_starts = failures
    return best


def fit_plain_pls(spec: PathModelSpec, X, options: FitOptions | None = None) -> FittedModel:
    """Ordinary PLS path model: the same alternation with every unit its own cluster.

    With U the identity, C = X and the scores are ``X Lambda``.
    """
    options = options or FitOptions()
    X = _as_array(X)
    n = X.shape[0]
    labels = np.arange(n)
    lam = normalize_loadings(spec.measurement_design, spec.measurement_design)
    state = ModelState(lam, X.copy(), labels, n, X @ lam)
    converged = _alternate(spec, X, state, options, update_labels=False)
    return _finish(spec, X, state, converged)


def kmeans(Y, n_clusters, n_starts=15, seed=None, max_iterations=300):
    """Lloyd K-means from random partitions; returns ``(labels, within_ss)``.

    Uses the same tie-break and empty-cluster rules as the joint estimator.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    identity = np.eye(Y.shape[1])
    best = None
    for s in start_seeds(seed, n_starts):
        rng = np.random.default_rng(s)
        labels = random_labels(n, n_clusters, rng)
        C = compute_centroids(labels, Y, n_clusters)
        for _ in range(max_iterations):
            new = assign_memberships(Y, C, identity)
            C = compute_centroids(new, Y, n_clusters)
            if np.array_equal(new, labels):
                break
            labels = new
        wss = objective(Y, labels, C, identity)
        if best is None or wss < best[1]:
            best = (labels, wss)
    return best


def tandem_baseline(spec: PathModelSpec, X, n_clusters: int,
                    options: FitOptions | None = None):
    """Plain PLS followed by K-means on its standardized latent scores."""
    options = options or FitOptions()
    fitted = fit_plain_pls(spec, X, options)
    scores = fitted.latent_scores(X)
    labels, _ = kmeans(scores, n_clusters, options.n_starts, options.rng_seed,
                       options.max_iterations)
    return fitted, labels
