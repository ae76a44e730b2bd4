"""Discretized diagonal-Gaussian population trajectories and their energies.

A trajectory holds ``T + 1`` means and per-axis log-variances on the
uniform grid ``t_i = i / T``. Derivatives are forward differences, so the
kinetic sum runs over ``i = 0..T-1`` and the potential sum over ``i = 0..T``.
Every energy comes with its analytic gradient with respect to ``(mu, log_sigma)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Environment


@dataclass(frozen=True)
class TrajectoryParams:
    mu: np.ndarray          # (T+1, 2)
    log_sigma: np.ndarray   # (T+1, 2) log of per-axis variances

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        ls = np.array(self.log_sigma, dtype=np.float64)
        if mu.ndim != 2 or mu.shape != ls.shape or mu.shape[0] < 2:
            raise ValueError(f"mu and log_sigma must share shape (T+1, d) with T >= 1, "
                             f"got {mu.shape} and {ls.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(np.exp(ls)))):
            raise ValueError("trajectory parameters must be finite")
        mu.flags.writeable = False
        ls.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_sigma", ls)

    @property
    def T(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.T + 1)

    @property
    def variances(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    def replace(self, mu=None, log_sigma=None) -> "TrajectoryParams":
        return TrajectoryParams(self.mu if mu is None else mu,
                                self.log_sigma if log_sigma is None else log_sigma)


def init_trajectory(path, T: int, sigma0) -> TrajectoryParams:
    """Resample ``path`` uniformly in arc length at ``T + 1`` points; constant variance ``sigma0``."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or len(path) < 1:
        raise ValueError("path must be an (m, d) polyline")
    if T < 1:
        raise ValueError("T must be at least 1")
    if len(path) == 1:
        path = np.vstack([path, path])
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0.0:
        mu = np.repeat(path[:1], T + 1, axis=0)
    else:
        q = np.linspace(0.0, total, T + 1)
        mu = np.column_stack([np.interp(q, s, path[:, d]) for d in range(path.shape[1])])
        mu[0], mu[-1] = path[0], path[-1]
    sig = np.broadcast_to(np.asarray(sigma0, dtype=np.float64), mu.shape)
    return TrajectoryParams(mu, np.log(sig))


def trajectory_derivatives(params: TrajectoryParams, dt: float | None = None):
    """Forward differences ``(mu_dot, sigma_dot)``, each of shape ``(T, d)``."""
    dt = params.dt if dt is None else dt
    return np.diff(params.mu, axis=0) / dt, np.diff(params.variances, axis=0) / dt


def kinetic_energy(params: TrajectoryParams, dt: float | None = None) -> float:
    """``sum_i |mu_dot_i|^2 + 1/4 sum_d sigma_dot_{i,d}^2 / sigma_{i,d}`` over ``i < T``."""
    mu_dot, sig_dot = trajectory_derivatives(params, dt)
    sig = params.variances[:-1]
    return float(np.sum(mu_dot**2) + 0.25 * np.sum(sig_dot**2 / sig))


def kinetic_energy_grad(params: TrajectoryParams, dt: float | None = None):
    """Gradient of :func:`kinetic_energy` as ``(d/d mu, d/d log_sigma)``."""
    dt = params.dt if dt is None else dt
    dmu = np.diff(params.mu, axis=0)
    g_mu = np.zeros_like(params.mu)
    g_mu[1:] += 2.0 * dmu / dt**2
    g_mu[:-1] -= 2.0 * dmu / dt**2

    sig = params.variances
    ds = np.diff(sig, axis=0)
    s = sig[:-1]
    g_sig = np.zeros_like(sig)
    g_sig[1:] += 0.5 * ds / (dt**2 * s)
    g_sig[:-1] += -0.5 * ds / (dt**2 * s) - 0.25 * ds**2 / (dt**2 * s**2)
    return g_mu, g_sig * sig


def potential_energy(params: TrajectoryParams, beta: float) -> float:
    """``beta^2 sum_{i=0..T} Tr(Sigma_i^{-1})``."""
    return float(beta**2 * np.sum(np.exp(-params.log_sigma)))


def potential_energy_grad(params: TrajectoryParams, beta: float):
    return np.zeros_like(params.mu), -(beta**2) * np.exp(-params.log_sigma)


def standardized_paths(z0: np.ndarray, noise: np.ndarray, beta: float) -> np.ndarray:
    """Whitened population ``z_{i+1} = sqrt(1-2b) z_i + sqrt(2b) xi_i``; shape ``(T+1, N, d)``.

    With ``x_i = mu_i + sqrt(sigma_i) * z_i`` this is the moment-preserving
    population update for diagonal covariances, and it does not depend on the
    trajectory parameters.
    """
    if 2.0 * beta > 1.0:
        raise ValueError(f"population update needs 2*beta <= 1, got beta={beta}")
    a, b = np.sqrt(1.0 - 2.0 * beta), np.sqrt(2.0 * beta)
    Z = np.empty((noise.shape[0] + 1,) + z0.shape)
    Z[0] = z0
    for i in range(noise.shape[0]):
        Z[i + 1] = a * Z[i] + b * noise[i]
    return Z


def paths_from_standardized(params: TrajectoryParams, Z: np.ndarray) -> np.ndarray:
    return params.mu[:, None, :] + np.exp(0.5 * params.log_sigma)[:, None, :] * Z


def propagate_population(params: TrajectoryParams, x0, beta: float,
                         rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Carry samples ``x0 ~ N(mu_0, Sigma_0)`` through every grid step; shape ``(T+1, N, d)``.

    Each step is ``x' = mu' + sqrt(1-2b) R' R^{-1} (x - mu) + sqrt(2b) R' xi``
    with ``R = Sigma^{1/2}``, so the population keeps mean ``mu_i`` and
    covariance ``Sigma_i`` at every ``t_i``.
    """
    rng = np.random.default_rng(rng)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    z0 = (x0 - params.mu[0]) * np.exp(-0.5 * params.log_sigma[0])
    noise = rng.standard_normal((params.T,) + x0.shape)
    return paths_from_standardized(params, standardized_paths(z0, noise, beta))


def _hinge_and_grad(env: Environment, X: np.ndarray):
    """``h = max(0, 1 - min_o d_o)^2`` and ``grad h`` at every point of ``X``."""
    if not env.obstacles:
        return np.zeros(X.shape[:-1]), np.zeros_like(X)
    levels = np.stack([o.level(X) for o in env.obstacles])
    which = np.argmin(levels, axis=0)
    dmin = np.take_along_axis(levels, which[None], axis=0)[0]
    gap = np.maximum(0.0, 1.0 - dmin)
    h = gap**2
    grad = np.zeros_like(X)
    for k, o in enumerate(env.obstacles):
        sel = (which == k) & (gap > 0)
        if sel.any():
            grad[sel] = -2.0 * gap[sel, None] * o.level_grad(X[sel])
    return h, grad


def obstacle_penalty(params: TrajectoryParams, env: Environment, samples: np.ndarray) -> float:
    """Mean over ``(t_i, sample)`` of the squared hinge ``max(0, 1 - min_o d_o(x))^2``."""
    h, _ = _hinge_and_grad(env, np.asarray(samples, dtype=np.float64))
    return float(h.mean())


def obstacle_penalty_grad(params: TrajectoryParams, env: Environment, Z: np.ndarray):
    """Penalty and its pathwise gradient for samples ``x = mu + sqrt(sigma) * Z`` with ``Z`` frozen."""
    X = paths_from_standardized(params, Z)
    h, gx = _hinge_and_grad(env, X)
    count = h.size
    g_mu = gx.sum(axis=1) / count
    std = np.exp(0.5 * params.log_sigma)
    g_ls = 0.5 * std * np.sum(gx * Z, axis=1) / count
    return float(h.mean()), g_mu, g_ls


def collision_fraction(env: Environment, paths: np.ndarray, obstacles_only: bool = True) -> float:
    """Fraction of ``(t_i, sample)`` pairs inside an obstacle (or also out of bounds)."""
    hit = env.in_obstacle(paths) if obstacles_only else env.collides(paths)
    return float(hit.mean())
