import itertools

import numpy as np

from plssemkm.core import NumericalError, fit_given_partition, standardize
from plssemkm.model_spec import build_spec


def two_block_spec(J):
    a = J // 2
    return build_spec({"a": [f"x{i}" for i in range(a)],
                       "b": [f"x{i}" for i in range(a, J)]}, [("a", "b")])


def tiny_instance(seed, shift=1.0):
    """n in 5..8, J in 4..6, two groups offset by ``shift`` along a random sign pattern."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 9))
    J = int(rng.integers(4, 7))
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[: n // 2]] = 1
    X = rng.standard_normal((n, J)) + shift * labels[:, None] * np.sign(rng.standard_normal(J))
    return two_block_spec(J), standardize(X).values


def exhaustive_minimum(spec, X):
    """Smallest converged objective over every partition into two nonempty groups."""
    n = X.shape[0]
    best, arg = np.inf, None
    for bits in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.sum() == 0:
            continue
        try:
            value = fit_given_partition(spec, X, labels).objective_value
        except (NumericalError, ValueError):
            continue
        if value < best:
            best, arg = value, labels
    return best, arg
