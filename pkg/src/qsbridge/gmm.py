"""Full-covariance Gaussian mixtures: density, EM fitting, sampling, Bohm potential."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.cluster import kmeans_plusplus
from sklearn.utils.validation import check_array, check_is_fitted

from . import spd
from .bridge import Gaussian

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Immutable mixture ``sum_k weights[k] N(means[k], covs[k])``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64)).copy()
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64)).copy()
        K, n = means.shape
        covs = np.asarray(self.covs, dtype=np.float64).reshape(K, n, n)
        if K < 1 or w.shape != (K,):
            raise ValueError(f"need K >= 1 weights matching {K} components, got shape {w.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum():.17g})")
        covs = np.stack([spd.as_spd(c) for c in covs])
        for a in (w, means, covs):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def _trusted(cls, weights, means, covs) -> "GaussianMixture":
        """Skip per-component eigen-validation; SPD is still enforced by one batched Cholesky."""
        obj = object.__new__(cls)
        for name, a in (("weights", weights), ("means", means), ("covs", covs)):
            a = np.array(a, dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(obj, name, a)
        try:
            obj._prec_chol
        except np.linalg.LinAlgError as exc:
            raise spd.NotSPDError(f"mixture covariance is not positive definite: {exc}") from exc
        return obj

    @classmethod
    def from_components(cls, weights, components) -> "GaussianMixture":
        return cls(weights, np.stack([g.mean for g in components]), np.stack([g.cov for g in components]))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[Gaussian]:
        return [Gaussian(m, c) for m, c in zip(self.means, self.covs)]

    @cached_property
    def _prec_chol(self) -> tuple[np.ndarray, np.ndarray]:
        L = np.linalg.cholesky(self.covs)
        P = np.linalg.inv(L)  # Sigma^{-1} = P^T P
        logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
        return P, logdet

    @cached_property
    def precisions(self) -> np.ndarray:
        P, _ = self._prec_chol
        out = np.swapaxes(P, 1, 2) @ P
        return 0.5 * (out + np.swapaxes(out, 1, 2))

    def component_log_prob(self, X) -> np.ndarray:
        """``log N_k(x)`` for every row of ``X``, shape ``(N, K)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        P, logdet = self._prec_chol
        Y = X[None, :, :] - self.means[:, None, :]  # (K, N, n)
        Z = Y @ np.swapaxes(P, 1, 2)
        maha = np.sum(Z * Z, axis=2)
        return (-0.5 * (self.dim * _LOG_2PI + logdet[:, None] + maha)).T

    def weighted_log_prob(self, X) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.component_log_prob(X) + np.log(self.weights)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "components": [{"mean": m.tolist(), "cov": c.tolist()} for m, c in zip(self.means, self.covs)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        comps = d["components"]
        mix = cls(
            np.asarray(d["weights"], dtype=np.float64),
            np.asarray([c["mean"] for c in comps], dtype=np.float64),
            np.asarray([c["cov"] for c in comps], dtype=np.float64),
        )
        if "dim" in d and int(d["dim"]) != mix.dim:
            raise ValueError(f"declared dim {d['dim']} does not match component dimension {mix.dim}")
        return mix

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


def gmm_logpdf(mix: GaussianMixture, x):
    """Mixture log-density via log-sum-exp; scalar for a single point."""
    x = np.asarray(x, dtype=np.float64)
    out = logsumexp(mix.weighted_log_prob(x), axis=1)
    return float(out[0]) if x.ndim == 1 else out


def responsibilities(mix: GaussianMixture, x) -> np.ndarray:
    """Posterior component weights ``w_k(x)``; shape ``(K,)`` or ``(N, K)``."""
    x = np.asarray(x, dtype=np.float64)
    lp = mix.weighted_log_prob(x)
    R = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    R /= R.sum(axis=1, keepdims=True)
    return R[0] if x.ndim == 1 else R


def mixture_score(mix: GaussianMixture, x) -> np.ndarray:
    """``grad log p(x) = sum_k w_k(x) grad log N_k(x)``."""
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    W = responsibilities(mix, X)
    S = -np.einsum("kij,knj->nki", mix.precisions, X[None] - mix.means[:, None])
    out = np.einsum("nk,nki->ni", W, S)
    return out[0] if x.ndim == 1 else out


def bohm_mixture(mix: GaussianMixture, beta: float, x, mixing_term: bool = True):
    """Mixture Bohm potential: responsibility-weighted component potentials plus the mixing term.

    ``Q = sum_k w_k Q_k + beta^2/2 [ |grad log p|^2 - sum_k w_k |grad log N_k|^2 ]``.
    With ``mixing_term=False`` only the first sum is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    W = responsibilities(mix, X)  # (N, K)
    S = -np.einsum("kij,knj->nki", mix.precisions, X[None] - mix.means[:, None])  # (N, K, n)
    s_sq = np.einsum("nki,nki->nk", S, S)
    tr = np.trace(mix.precisions, axis1=1, axis2=2)
    Qk = beta**2 * (tr[None, :] - 0.5 * s_sq)
    Q = np.einsum("nk,nk->n", W, Qk)
    if mixing_term:
        score = np.einsum("nk,nki->ni", W, S)
        Q = Q + 0.5 * beta**2 * (np.einsum("ni,ni->n", score, score) - np.einsum("nk,nk->n", W, s_sq))
    return float(Q[0]) if x.ndim == 1 else Q


def gmm_sample(mix: GaussianMixture, n: int, rng, return_labels: bool = False):
    """Ancestral sampling: categorical label, then the labelled component."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    labels = rng.choice(mix.n_components, size=n, p=mix.weights)
    Z = rng.standard_normal((n, mix.dim))
    L = np.linalg.cholesky(mix.covs)
    X = mix.means[labels] + np.einsum("nij,nj->ni", L[labels], Z)
    return (X, labels) if return_labels else X


@dataclass
class EmConfig:
    """EM settings.

    ``ridge=None`` means ``1e-6`` times the mean per-axis data variance.
    ``init`` is ``"kmeans++"`` or a :class:`GaussianMixture` to warm-start from.
    """

    max_iters: int = 200
    tol: float = 1e-6
    ridge: float | None = None
    init: object = "kmeans++"
    n_init: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.max_iters < 0 or self.n_init < 1:
            raise ValueError("max_iters must be >= 0 and n_init >= 1")


@dataclass
class EmFit:
    mixture: GaussianMixture
    log_likelihoods: list[float] = field(default_factory=list)
    converged: bool = False
    n_reseeded: int = 0
    # indices into log_likelihoods right after a reseed; monotonicity is not expected across them
    reseed_steps: list[int] = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return max(len(self.log_likelihoods) - 1, 0)


def _m_step(X, R, ridge, rng, data_cov):
    N, n = X.shape
    Nk = R.sum(axis=0)
    empty = (Nk < 1e-8 * N) | (Nk <= 10 * np.finfo(float).eps)
    safe = np.where(empty, 1.0, Nk)
    means = (R.T @ X) / safe[:, None]
    Y = X[None, :, :] - means[:, None, :]
    covs = np.swapaxes(R.T[:, :, None] * Y, 1, 2) @ Y / safe[:, None, None]
    covs += ridge * np.eye(n)
    reseeded = np.flatnonzero(empty)
    for k in reseeded:
        means[k] = X[int(rng.integers(N))]
        covs[k] = data_cov + ridge * np.eye(n)
    Nk = np.where(empty, 1.0, Nk)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    if reseeded.size:
        logger.info("EM: reseeded empty components %s at random samples", reseeded.tolist())
    return GaussianMixture._trusted(Nk / Nk.sum(), means, covs), int(reseeded.size)


def _kmeanspp_start(X, K, ridge, rng, data_cov):
    centers, _ = kmeans_plusplus(X, K, random_state=int(rng.integers(2**31 - 1)))
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
    R = np.zeros((X.shape[0], K))
    R[np.arange(X.shape[0]), d2.argmin(axis=1)] = 1.0
    return _m_step(X, R, ridge, rng, data_cov)[0]


def _run_em(X, mix, cfg: EmConfig, ridge, rng, data_cov) -> EmFit:
    fit = EmFit(mix)
    lp = mix.weighted_log_prob(X)
    lse = logsumexp(lp, axis=1)
    ll = float(lse.mean())
    fit.log_likelihoods.append(ll)
    for _ in range(cfg.max_iters):
        R = np.exp(lp - lse[:, None])
        mix, n_re = _m_step(X, R, ridge, rng, data_cov)
        lp = mix.weighted_log_prob(X)
        lse = logsumexp(lp, axis=1)
        new_ll = float(lse.mean())
        fit.mixture = mix
        fit.log_likelihoods.append(new_ll)
        if n_re:
            fit.n_reseeded += n_re
            fit.reseed_steps.append(len(fit.log_likelihoods) - 1)
            ll = new_ll
            continue
        if abs(new_ll - ll) <= cfg.tol * max(abs(ll), 1.0):
            fit.converged = True
            break
        ll = new_ll
    return fit


def default_ridge(X) -> float:
    return 1e-6 * float(np.mean(np.var(X, axis=0)))


def em_fit(samples, K: int, config: EmConfig | None = None) -> EmFit:
    """Fit a ``K``-component full-covariance mixture by EM.

    Returns the best run (highest final mean log-likelihood) together with its
    per-iteration mean log-likelihood trace.
    """
    cfg = config or EmConfig()
    X = check_array(samples, dtype=np.float64)
    N, n = X.shape
    if K < 1 or N < K:
        raise ValueError(f"need 1 <= K <= number of samples, got K={K}, N={N}")
    ridge = default_ridge(X) if cfg.ridge is None else float(cfg.ridge)
    data_cov = np.atleast_2d(np.cov(X, rowvar=False)) if N > 1 else np.zeros((n, n))
    rng = np.random.default_rng(cfg.seed)

    if isinstance(cfg.init, GaussianMixture):
        if cfg.init.n_components != K or cfg.init.dim != n:
            raise ValueError("warm-start mixture does not match (K, dim)")
        return _run_em(X, cfg.init, cfg, ridge, rng, data_cov)
    if cfg.init != "kmeans++":
        raise ValueError(f"unknown init {cfg.init!r}")

    best = None
    for _ in range(cfg.n_init):
        start = _kmeanspp_start(X, K, ridge, rng, data_cov)
        fit = _run_em(X, start, cfg, ridge, rng, data_cov)
        if best is None or fit.log_likelihoods[-1] > best.log_likelihoods[-1]:
            best = fit
    return best


def gmm_fit_em(samples, K: int, config: EmConfig | None = None) -> GaussianMixture:
    return em_fit(samples, K, config).mixture


def match_components(means_a, means_b) -> np.ndarray:
    """Permutation ``perm`` minimizing ``sum_k |a_k - b_perm[k]|^2``."""
    a = np.asarray(means_a, dtype=np.float64)
    b = np.asarray(means_b, dtype=np.float64)
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm


class GaussianMixtureEM(DensityMixin, BaseEstimator):
    """Estimator interface over :func:`em_fit`.

    Parameters
    ----------
    n_components : int, default=1
    max_iter : int, default=200
    tol : float, default=1e-6
        Relative change of the mean log-likelihood that stops EM.
    ridge : float or None, default=None
        Added to every covariance diagonal; ``None`` scales with the data.
    n_init : int, default=10
        k-means++ restarts; the best final likelihood wins.
    warm_start : bool, default=False
        Reuse ``mixture_`` from a previous ``fit`` as initialization.
    random_state : int, default=0
    """

    def __init__(self, n_components=1, max_iter=200, tol=1e-6, ridge=None, n_init=10,
                 warm_start=False, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.ridge = ridge
        self.n_init = n_init
        self.warm_start = warm_start
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        init = "kmeans++"
        if self.warm_start and hasattr(self, "mixture_"):
            init = self.mixture_
        cfg = EmConfig(self.max_iter, self.tol, self.ridge, init, self.n_init, self.random_state)
        fit = em_fit(X, self.n_components, cfg)
        self.mixture_ = fit.mixture
        self.log_likelihoods_ = np.asarray(fit.log_likelihoods)
        self.converged_ = fit.converged
        self.n_iter_ = fit.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def weights_(self):
        check_is_fitted(self, "mixture_")
        return self.mixture_.weights

    @property
    def means_(self):
        check_is_fitted(self, "mixture_")
        return self.mixture_.means

    @property
    def covariances_(self):
        check_is_fitted(self, "mixture_")
        return self.mixture_.covs

    def score_samples(self, X):
        check_is_fitted(self, "mixture_")
        return gmm_logpdf(self.mixture_, check_array(X))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def predict_proba(self, X):
        check_is_fitted(self, "mixture_")
        return responsibilities(self.mixture_, check_array(X))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "mixture_")
        return gmm_sample(self.mixture_, n_samples, random_state, return_labels=True)

    def bohm_potential(self, X, beta: float, mixing_term: bool = True):
        check_is_fitted(self, "mixture_")
        return bohm_mixture(self.mixture_, beta, check_array(X), mixing_term)
