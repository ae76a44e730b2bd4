"""Distances between distributions: closed-form Gaussian W2 and exact sample EMD-2."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import spd

#: Largest sample size handled by the exact assignment solver.
MAX_EXACT_EMD = 2000


def w2_gaussian(g0, g1) -> float:
    """Bures-Wasserstein distance between two Gaussians.

    ``W2^2 = |mu0 - mu1|^2 + Tr(S0 + S1 - 2 (S0^1/2 S1 S0^1/2)^1/2)``.
    """
    if g0.dim != g1.dim:
        raise ValueError(f"dimension mismatch: {g0.dim} vs {g1.dim}")
    d = g0.mean - g1.mean
    r0 = spd.spd_sqrt(g0.cov)
    cross = spd.psd_sqrt(r0 @ g1.cov @ r0)
    bures = np.trace(g0.cov) + np.trace(g1.cov) - 2.0 * np.trace(cross)
    return math.sqrt(max(float(d @ d) + float(bures), 0.0))


def emd_samples(X, Y) -> float:
    """Exact W2 between two equal-size point clouds (uniform weights).

    Solves the minimal-cost perfect matching on squared Euclidean costs and
    returns the square root of the mean matched cost.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(f"point sets must share the dimension: {X.shape} vs {Y.shape}")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"size mismatch: {X.shape[0]} vs {Y.shape[0]} points; subsample to equal sizes")
    if X.shape[0] > MAX_EXACT_EMD:
        raise ValueError(
            f"{X.shape[0]} points exceeds the exact-assignment limit of {MAX_EXACT_EMD}; "
            "subsample both sets first (see subsample())"
        )
    C = cdist(X, Y, metric="sqeuclidean")
    rows, cols = linear_sum_assignment(C)
    return math.sqrt(float(C[rows, cols].mean()))


def subsample(X, n: int, rng) -> np.ndarray:
    """Uniform subsample without replacement (returns ``X`` itself when ``n >= len(X)``)."""
    X = np.asarray(X)
    if n >= X.shape[0]:
        return X
    rng = np.random.default_rng(rng)
    return X[np.sort(rng.choice(X.shape[0], size=n, replace=False))]


def moment_check(X) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased (``n - 1``) covariance."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two points")
    return X.mean(axis=0), np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
