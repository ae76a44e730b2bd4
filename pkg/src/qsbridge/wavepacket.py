"""Mixture-of-wavepackets bridge between two empirical distributions.

Each mixture component is a Gaussian wavepacket that follows the closed-form
quantum bridge between a start component (fitted to ``pi_0``) and its paired
end component (fitted to ``pi_1``). Both sides share the mixture weights.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import spd
from .bridge import BridgeKind, BridgeProblem, Gaussian, InfeasibleBridgeError, beta_max, population_step
from .gmm import EmConfig, GaussianMixture, em_fit, gmm_sample, responsibilities
from .metrics import w2_gaussian

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CoupledMixtureBridge:
    """Shared weights with index-paired start/end components.

    The effective diffusion coefficient of component ``k`` is ``beta`` when
    that is feasible for the pair, else ``clamp_factor * beta_max_k``.
    """

    weights: np.ndarray
    start: GaussianMixture
    end: GaussianMixture
    beta: float
    clamp_factor: float = 0.95

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if self.start.n_components != w.size or self.end.n_components != w.size:
            raise ValueError("start/end component counts must match the weights")
        if self.start.dim != self.end.dim:
            raise ValueError("start/end dimensions differ")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError("weights must be nonnegative and sum to 1")
        if not 0.0 < self.clamp_factor < 1.0:
            raise ValueError("clamp_factor must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.start.dim

    @cached_property
    def component_betas(self) -> np.ndarray:
        out = np.empty(self.n_components)
        for k in range(self.n_components):
            bmax = beta_max(self.start.covs[k], self.end.covs[k])
            if self.beta <= bmax:
                out[k] = self.beta
            else:
                out[k] = self.clamp_factor * bmax
                logger.info("component %d: beta %.4g infeasible (beta_max %.4g), clamped to %.4g",
                            k, self.beta, bmax, out[k])
        return out

    @cached_property
    def problems(self) -> list[BridgeProblem]:
        out = []
        for k, b in enumerate(self.component_betas):
            g0 = Gaussian(self.start.means[k], self.start.covs[k])
            g1 = Gaussian(self.end.means[k], self.end.covs[k])
            try:
                out.append(BridgeProblem(g0, g1, b, BridgeKind.QUANTUM))
            except InfeasibleBridgeError as exc:
                raise InfeasibleBridgeError(exc.beta, exc.beta_max, component=k) from None
        return out

    def to_dict(self) -> dict:
        comps = lambda m: [{"mean": mu.tolist(), "cov": c.tolist()} for mu, c in zip(m.means, m.covs)]  # noqa: E731
        return {
            "dim": self.dim,
            "beta": self.beta,
            "clamp_factor": self.clamp_factor,
            "weights": self.weights.tolist(),
            "start": comps(self.start),
            "end": comps(self.end),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoupledMixtureBridge":
        w = np.asarray(d["weights"], dtype=np.float64)
        side = lambda key: GaussianMixture(  # noqa: E731
            w,
            np.asarray([c["mean"] for c in d[key]], dtype=np.float64),
            np.asarray([c["cov"] for c in d[key]], dtype=np.float64),
        )
        bridge = cls(w, side("start"), side("end"), float(d["beta"]), float(d.get("clamp_factor", 0.95)))
        if "dim" in d and int(d["dim"]) != bridge.dim:
            raise ValueError("declared dim does not match components")
        return bridge

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CoupledMixtureBridge":
        return cls.from_dict(json.loads(text))


def mixture_marginal(bridge: CoupledMixtureBridge, t: float) -> GaussianMixture:
    """Mixture at time ``t``: every component follows its own quantum bridge."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return bridge.start
    if t == 1.0:
        return bridge.end
    means = np.stack([p.mean(t) for p in bridge.problems])
    covs = np.stack([p.cov(t) for p in bridge.problems])
    return GaussianMixture(bridge.weights, means, covs)


def propagate_samples(bridge: CoupledMixtureBridge, x0, t_grid, rng, isotropic: bool = False,
                      return_labels: bool = False):
    """Move samples at ``t=0`` through the bridge on ``t_grid``.

    Each sample is assigned once, at ``t=0``, to a component drawn from its
    responsibilities under the start mixture, and then follows that
    component's population update between consecutive grid times.

    Returns an array of shape ``(len(t_grid), N, n)``; a grid that does not
    start at 0 is stepped from 0 implicitly.
    """
    rng = np.random.default_rng(rng)
    X = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("x0 contains non-finite values")
    ts = np.asarray(t_grid, dtype=np.float64)
    if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > 1:
        raise ValueError("t_grid must be a strictly increasing sequence in [0, 1]")
    betas = bridge.component_betas
    if np.any(2.0 * betas > 1.0):
        k = int(np.argmax(betas))
        raise ValueError(f"component {k}: 2*beta={2 * betas[k]:.4g} > 1, sqrt(1 - 2 beta) undefined")

    R = responsibilities(bridge.start, X)
    u = rng.random(X.shape[0])
    labels = np.minimum((R.cumsum(axis=1) < u[:, None]).sum(axis=1), bridge.n_components - 1)

    times = ts if ts[0] == 0.0 else np.concatenate([[0.0], ts])
    out = np.empty((times.size,) + X.shape)
    out[0] = X
    roots = {}

    def root_pair(k, t):
        key = (k, t)
        if key not in roots:
            C = bridge.problems[k].cov(t)
            roots[key] = (spd.spd_sqrt(C), spd.spd_inv_sqrt(C))
        return roots[key]

    cur = X.copy()
    for i in range(times.size - 1):
        noise = rng.standard_normal(X.shape)
        nxt = np.empty_like(cur)
        for k in np.unique(labels):
            idx = labels == k
            p = bridge.problems[k]
            _, inv_from = root_pair(k, times[i])
            root_to, _ = root_pair(k, times[i + 1])
            nxt[idx] = population_step(cur[idx], p.mean(times[i]), inv_from, p.mean(times[i + 1]),
                                       root_to, betas[k], noise[idx], isotropic=isotropic)
        cur = nxt
        out[i + 1] = cur
    if times.size != ts.size:
        out = out[1:]
    return (out, labels) if return_labels else out


@dataclass
class TrainConfig:
    """Settings for :func:`fit_wavepacket_bridge`.

    ``batch=None`` uses every sample in each phase; otherwise a fresh batch is
    drawn without replacement per phase.
    """

    n_components: int = 10
    beta: float = 0.01
    em_steps_per_phase: int = 20
    outer_iters: int = 10
    batch: int | None = None
    clamp_factor: float = 0.95
    seed: int = 0
    tol: float = 1e-4
    n_init: int = 3
    ridge: float | None = None

    def __post_init__(self):
        if not 0.0 < self.clamp_factor < 1.0:
            raise ValueError("clamp_factor must lie in (0, 1)")
        if self.batch is not None and self.batch < self.n_components:
            raise ValueError(f"batch ({self.batch}) must be >= n_components ({self.n_components})")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class TrainResult:
    bridge: CoupledMixtureBridge
    # one mean log-likelihood trace per EM phase, in execution order: init0, init1, a1, b1, a2, b2, ...
    phase_log_likelihoods: list[list[float]] = field(default_factory=list)
    phase_names: list[str] = field(default_factory=list)
    n_outer: int = 0
    converged: bool = False


def _pair_components(start: GaussianMixture, end: GaussianMixture) -> np.ndarray:
    """Permutation of ``end`` that loses the least likelihood when weights are shared.

    Replacing paired weights ``a, b`` by their mean ``m`` costs
    ``a log(a/m) + b log(b/m)`` nats per sample (components held fixed), so
    the pairing is an assignment problem. Squared W2 between paired
    components breaks near-ties.
    """
    K = start.n_components
    a = start.weights[:, None]
    b = end.weights[None, :]
    m = 0.5 * (a + b)
    mass = a * np.log(a / m) + b * np.log(b / m)
    g0, g1 = start.components, end.components
    w2 = np.array([[w2_gaussian(g0[i], g1[j]) ** 2 for j in range(K)] for i in range(K)])
    cost = mass + 1e-9 * w2 / max(float(w2.max()), 1e-300)
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)]


def _draw(samples: np.ndarray, batch: int | None, rng) -> np.ndarray:
    if batch is None or batch >= samples.shape[0]:
        return samples
    return samples[np.sort(rng.choice(samples.shape[0], size=batch, replace=False))]


def _flat(w, a: GaussianMixture, b: GaussianMixture) -> np.ndarray:
    return np.concatenate([w.ravel(), a.means.ravel(), a.covs.ravel(), b.means.ravel(), b.covs.ravel()])


def fit_wavepacket_bridge(samples0, samples1, config: TrainConfig | None = None) -> TrainResult:
    """Alternating EM on both endpoints with shared weights.

    1. Fit a start mixture to ``pi_0`` and an end mixture to ``pi_1`` (k-means++ EM),
       then pair end components to start components by minimal total squared W2.
    2. Repeat: warm-started EM of ``(weights, start)`` on a batch of ``pi_0``,
       then of ``(weights, end)`` on a batch of ``pi_1``, until the largest
       parameter change drops below ``tol`` or ``outer_iters`` is reached.
    """
    cfg = config or TrainConfig()
    X0 = check_array(samples0, dtype=np.float64)
    X1 = check_array(samples1, dtype=np.float64)
    if X0.shape[1] != X1.shape[1]:
        raise ValueError("samples0 and samples1 must have the same dimension")
    K = cfg.n_components
    if K > min(X0.shape[0], X1.shape[0]) or (cfg.batch is not None and K > cfg.batch):
        raise ValueError("n_components exceeds the number of samples per phase")
    rng = np.random.default_rng(cfg.seed)
    seeds = lambda: int(rng.integers(2**31 - 1))  # noqa: E731
    result = TrainResult(bridge=None)

    def phase(name, X, init):
        em_cfg = EmConfig(
            max_iters=cfg.em_steps_per_phase if isinstance(init, GaussianMixture) else 200,
            tol=1e-9 if isinstance(init, GaussianMixture) else 1e-6,
            ridge=cfg.ridge,
            init=init,
            n_init=cfg.n_init,
            seed=seeds(),
        )
        fit = em_fit(X, K, em_cfg)
        result.phase_log_likelihoods.append(list(fit.log_likelihoods))
        result.phase_names.append(name)
        return fit.mixture

    start = phase("init0", _draw(X0, cfg.batch, rng), "kmeans++")
    end = phase("init1", _draw(X1, cfg.batch, rng), "kmeans++")
    perm = _pair_components(start, end)
    weights = 0.5 * (start.weights + end.weights[perm])
    end = GaussianMixture(weights, end.means[perm], end.covs[perm])

    prev = _flat(weights, start, end)
    for it in range(cfg.outer_iters):
        start = phase(f"a{it + 1}", _draw(X0, cfg.batch, rng), GaussianMixture(weights, start.means, start.covs))
        weights = start.weights
        end = phase(f"b{it + 1}", _draw(X1, cfg.batch, rng), GaussianMixture(weights, end.means, end.covs))
        weights = end.weights
        result.n_outer = it + 1
        cur = _flat(weights, start, end)
        change = float(np.max(np.abs(cur - prev)))
        prev = cur
        logger.debug("outer iteration %d: max parameter change %.3g", it + 1, change)
        if change < cfg.tol:
            result.converged = True
            break

    start = GaussianMixture(weights, start.means, start.covs)
    end = GaussianMixture(weights, end.means, end.covs)
    result.bridge = CoupledMixtureBridge(weights, start, end, cfg.beta, cfg.clamp_factor)
    result.bridge.component_betas  # noqa: B018 - logs clamping once, at training time
    return result


def train_bridge(samples0, samples1, config: TrainConfig | None = None) -> CoupledMixtureBridge:
    return fit_wavepacket_bridge(samples0, samples1, config).bridge


def write_paths_csv(path, paths: np.ndarray, t_grid) -> None:
    """Write ``(T, N, n)`` paths as rows ``sample_id,t,x0,...,x{n-1}`` with 17 significant digits."""
    T, N, n = paths.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "t"] + [f"x{i}" for i in range(n)])
        for s in range(N):
            for j in range(T):
                w.writerow([s, f"{t_grid[j]:.17g}"] + [f"{v:.17g}" for v in paths[j, s]])


class WavepacketBridge(TransformerMixin, BaseEstimator):
    """Estimator interface over :func:`fit_wavepacket_bridge`.

    ``fit(X0, X1)`` trains the bridge; ``transform(X)`` carries points from
    ``t=0`` to ``t`` along ``n_steps`` population updates.
    """

    def __init__(self, n_components=10, beta=0.01, em_steps_per_phase=20, outer_iters=10,
                 batch=None, clamp_factor=0.95, tol=1e-4, n_init=3, t=1.0, n_steps=20,
                 random_state=0):
        self.n_components = n_components
        self.beta = beta
        self.em_steps_per_phase = em_steps_per_phase
        self.outer_iters = outer_iters
        self.batch = batch
        self.clamp_factor = clamp_factor
        self.tol = tol
        self.n_init = n_init
        self.t = t
        self.n_steps = n_steps
        self.random_state = random_state

    def fit(self, X0, X1=None):
        if X1 is None:
            raise ValueError("WavepacketBridge.fit needs samples from both endpoints")
        cfg = TrainConfig(self.n_components, self.beta, self.em_steps_per_phase, self.outer_iters,
                          self.batch, self.clamp_factor, self.random_state, self.tol, self.n_init)
        res = fit_wavepacket_bridge(X0, X1, cfg)
        self.bridge_ = res.bridge
        self.phase_log_likelihoods_ = res.phase_log_likelihoods
        self.n_outer_ = res.n_outer
        self.converged_ = res.converged
        self.n_features_in_ = res.bridge.dim
        return self

    def marginal(self, t: float) -> GaussianMixture:
        check_is_fitted(self, "bridge_")
        return mixture_marginal(self.bridge_, t)

    def transform(self, X, t: float | None = None, random_state=None):
        check_is_fitted(self, "bridge_")
        X = check_array(X)
        t = self.t if t is None else t
        if t == 0.0:
            return X.copy()
        grid = np.linspace(0.0, t, self.n_steps + 1)
        rs = self.random_state if random_state is None else random_state
        return propagate_samples(self.bridge_, X, grid, rs)[-1]

    def sample(self, n_samples=1, t: float | None = None, random_state=None):
        check_is_fitted(self, "bridge_")
        t = self.t if t is None else t
        return gmm_sample(self.marginal(t), n_samples, random_state)
