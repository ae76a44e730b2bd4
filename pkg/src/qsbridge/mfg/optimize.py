"""Gradient-based optimization of a Gaussian crowd trajectory through obstacles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..bridge import Gaussian
from .environment import Environment
from .rrt import RRTConfig, RRTResult, rrt_star
from .trajectory import (
    TrajectoryParams,
    init_trajectory,
    kinetic_energy,
    kinetic_energy_grad,
    obstacle_penalty_grad,
    paths_from_standardized,
    potential_energy,
    potential_energy_grad,
    standardized_paths,
)

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """The total loss became non-finite."""


@dataclass(frozen=True)
class MfgConfig:
    beta: float = 0.05
    lambda_obs: float = 5e8
    lr: float = 1e-3
    iters: int = 2000
    batch: int = 300
    T: int = 50
    rrt: RRTConfig = field(default_factory=RRTConfig)
    seed: int = 0
    weight_decay: float = 0.0
    clearance: float = 0.5       # obstacle inflation used only for the RRT* warm start
    pin_endpoint_variance: bool = False
    eval_batch: int = 1000

    def __post_init__(self):
        if not 0.0 <= 2.0 * self.beta <= 1.0:
            raise ValueError(f"need 0 <= 2*beta <= 1, got beta={self.beta}")
        if self.lambda_obs < 0:
            raise ValueError("lambda_obs must be nonnegative")
        if self.T < 1 or self.iters < 0 or self.batch < 1:
            raise ValueError("T and batch must be positive and iters nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "MfgConfig":
        d = dict(d)
        if "rrt" in d and not isinstance(d["rrt"], RRTConfig):
            d["rrt"] = RRTConfig(**d["rrt"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown mfg config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MfgResult:
    params: TrajectoryParams
    initial: TrajectoryParams
    history: np.ndarray      # (iters + 1, 4): kinetic, potential, penalty, total
    initial_loss: float      # total loss under the shared evaluation noise
    final_loss: float
    plan: RRTResult


class AdamW:
    """Adam with decoupled weight decay over a dict of numpy arrays."""

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, betas[0], betas[1], eps, weight_decay
        self.m: dict = {}
        self.v: dict = {}
        self.k = 0

    def step(self, params: dict, grads: dict, masks: dict | None = None) -> dict:
        self.k += 1
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.b1 * m + (1 - self.b1) * g
            v = self.b2 * v + (1 - self.b2) * g * g
            self.m[name], self.v[name] = m, v
            mh = m / (1 - self.b1**self.k)
            vh = v / (1 - self.b2**self.k)
            upd = self.lr * (mh / (np.sqrt(vh) + self.eps) + self.wd * p)
            if masks is not None and name in masks:
                upd = upd * masks[name]
            out[name] = p - upd
        return out


def total_loss(params: TrajectoryParams, env: Environment, Z: np.ndarray, beta: float,
               lambda_obs: float, with_grad: bool = False):
    """``K - U + lambda_obs * penalty`` on the frozen whitened paths ``Z``.

    Returns the parts ``(kinetic, potential, penalty, total)`` and, when
    ``with_grad``, the gradients with respect to ``mu`` and ``log_sigma``.
    """
    K = kinetic_energy(params)
    U = potential_energy(params, beta)
    P, gpm, gpl = obstacle_penalty_grad(params, env, Z)
    parts = (K, U, P, K - U + lambda_obs * P)
    if not with_grad:
        return parts
    gkm, gkl = kinetic_energy_grad(params)
    _, gul = potential_energy_grad(params, beta)
    return parts, gkm + lambda_obs * gpm, gkl - gul + lambda_obs * gpl


def _diag_variance(g: Gaussian, name: str) -> np.ndarray:
    off = g.cov - np.diag(np.diag(g.cov))
    if np.any(off != 0.0):
        raise ValueError(f"{name} must have a diagonal covariance")
    return np.diag(g.cov).copy()


def optimize(env: Environment, p0: Gaussian, p1: Gaussian, cfg: MfgConfig | None = None,
             path=None) -> MfgResult:
    """RRT* warm start, arc-length initialization, then ``cfg.iters`` AdamW steps.

    Endpoint means never move. Initial log-variances interpolate linearly
    between the endpoint variances. Noise for the penalty is redrawn every
    iteration and held fixed while its gradient is taken. ``path`` skips the
    planner when given.
    """
    cfg = cfg or MfgConfig()
    if p0.dim != 2 or p1.dim != 2:
        raise ValueError("MFG endpoints must be 2-D Gaussians")
    v0, v1 = _diag_variance(p0, "p0"), _diag_variance(p1, "p1")
    ss_plan, ss_train, ss_eval = np.random.SeedSequence(cfg.seed).spawn(3)

    if path is None:
        plan = rrt_star(env.inflated(cfg.clearance), p0.mean, p1.mean, cfg.rrt,
                        np.random.default_rng(ss_plan))
    else:
        path = np.asarray(path, dtype=np.float64)
        plan = RRTResult(path, path.copy(), np.arange(-1, len(path) - 1), 0.0)
    init = init_trajectory(plan.path, cfg.T, v0)
    s = np.linspace(0.0, 1.0, cfg.T + 1)[:, None]
    init = init.replace(log_sigma=(1 - s) * np.log(v0) + s * np.log(v1))
    mu0, muT = init.mu[0].copy(), init.mu[-1].copy()

    mask_mu = np.ones_like(init.mu)
    mask_mu[[0, -1]] = 0.0
    mask_ls = np.ones_like(init.log_sigma)
    if cfg.pin_endpoint_variance:
        mask_ls[[0, -1]] = 0.0

    rng_eval = np.random.default_rng(ss_eval)
    Z_eval = standardized_paths(rng_eval.standard_normal((cfg.eval_batch, 2)),
                                rng_eval.standard_normal((cfg.T, cfg.eval_batch, 2)), cfg.beta)
    rng = np.random.default_rng(ss_train)
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = init
    history = np.empty((cfg.iters + 1, 4))
    for it in range(cfg.iters + 1):
        Z = standardized_paths(rng.standard_normal((cfg.batch, 2)),
                               rng.standard_normal((cfg.T, cfg.batch, 2)), cfg.beta)
        parts, g_mu, g_ls = total_loss(params, env, Z, cfg.beta, cfg.lambda_obs, with_grad=True)
        if not np.isfinite(parts[3]):
            raise DivergenceError(f"total loss became {parts[3]} at iteration {it}")
        history[it] = parts
        if it == cfg.iters:
            break
        new = opt.step({"mu": params.mu, "ls": params.log_sigma}, {"mu": g_mu, "ls": g_ls},
                       {"mu": mask_mu, "ls": mask_ls})
        mu = new["mu"]
        mu[0], mu[-1] = mu0, muT
        params = params.replace(mu=mu, log_sigma=new["ls"])
        if it % 500 == 0:
            log.debug("iter %d: K=%.6g U=%.6g P=%.6g total=%.6g", it, *parts)

    first = total_loss(init, env, Z_eval, cfg.beta, cfg.lambda_obs)[3]
    last = total_loss(params, env, Z_eval, cfg.beta, cfg.lambda_obs)[3]
    log.info("mfg: total loss %.6g -> %.6g over %d iterations", first, last, cfg.iters)
    return MfgResult(params, init, history, first, last, plan)


def sample_paths(params: TrajectoryParams, beta: float, n: int,
                 rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Fresh population paths ``(T+1, n, 2)`` starting from ``N(mu_0, Sigma_0)``."""
    rng = np.random.default_rng(rng)
    Z = standardized_paths(rng.standard_normal((n, 2)),
                           rng.standard_normal((params.T, n, 2)), beta)
    return paths_from_standardized(params, Z)


__all__ = ["MfgConfig", "MfgResult", "AdamW", "DivergenceError", "optimize", "total_loss",
           "sample_paths"]
