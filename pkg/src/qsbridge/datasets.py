"""Toy endpoint distributions for bridge experiments."""

from __future__ import annotations

import numpy as np
from sklearn.datasets import make_moons, make_swiss_roll

from .gmm import GaussianMixture, gmm_sample


def moons(n: int, noise: float = 0.05, random_state=0) -> np.ndarray:
    """Two interleaved half circles, centred at the origin."""
    X, _ = make_moons(n_samples=n, noise=noise, random_state=random_state)
    return X - np.array([0.5, 0.25])


def swiss_roll_2d(n: int, noise: float = 0.5, random_state=0) -> np.ndarray:
    """Planar swiss roll (the x-z projection of the 3-D roll), scaled to unit size."""
    X, _ = make_swiss_roll(n_samples=n, noise=noise, random_state=random_state)
    return X[:, [0, 2]] / 7.5


def synthetic_mixture_pair(dim: int = 5, n_components: int = 3, seed: int = 0,
                           spread: float = 1.5) -> tuple[GaussianMixture, GaussianMixture]:
    """Two random Gaussian mixtures with identical weights and distinct, overlapping modes.

    Component means are drawn with scale ``spread``; covariances have
    eigenvalues in ``[0.2, 1.0]``.
    """
    from .spd import random_spd

    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.full(n_components, 5.0))

    def one():
        means = rng.normal(scale=spread, size=(n_components, dim))
        covs = np.stack([random_spd(dim, rng, 0.2, 1.0) for _ in range(n_components)])
        return GaussianMixture(w, means, covs)

    return one(), one()


def sample_mixture(mix: GaussianMixture, n: int, random_state=0) -> np.ndarray:
    return gmm_sample(mix, n, np.random.default_rng(random_state))
