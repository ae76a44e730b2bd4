"""Closed-form Gaussian bridges on ``t in [0, 1]``.

Three bridge laws share the linear mean path ``mu0 + (mu1 - mu0) t`` and a
covariance of the form::

    Sigma(t) = S0^{-1/2} [(1-t) S0 + t G]^2 S0^{-1/2} + s t^2 beta^2 S0^{-1}

with ``A = S0^{1/2} S1 S0^{1/2}`` and

=================  ======================  =====
kind               G                       s
=================  ======================  =====
quantum            (A - beta^2 I)^{1/2}    +1
classical_sb       (A + beta^2 I)^{1/2}    -1
bb_ot              A^{1/2}                 0
=================  ======================  =====

For the quantum bridge the module also reconstructs the gradient drift
``v = mu_dot + C (x - mu) / 2`` and the quadratic phase ``S`` with
``grad S = v``, and evaluates the governing PDEs (continuity, quantum
Hamilton-Jacobi, quantum Riccati) by finite differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import trapezoid
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import spd
from .bohm import bohm_gaussian


class InfeasibleBridgeError(ValueError):
    """The requested diffusion coefficient exceeds the quantum feasibility bound."""

    def __init__(self, beta: float, beta_max: float, component: int | None = None):
        self.beta = beta
        self.beta_max = beta_max
        self.component = component
        where = "" if component is None else f" (component {component})"
        super().__init__(
            f"beta={beta:.17g} exceeds beta_max={beta_max:.17g}{where}: "
            "S0^1/2 S1 S0^1/2 - beta^2 I is not positive semidefinite"
        )


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal ``N(mean, cov)`` with a validated SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64)).ravel()
        cov = spd.as_spd(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"mean has dimension {mean.size} but cov has shape {cov.shape}"
            )
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def precision(self) -> np.ndarray:
        return spd.spd_inv(self.cov)

    @cached_property
    def logdet(self) -> float:
        return spd.spd_logdet(self.cov)

    def logpdf(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=np.float64)
        Y = np.atleast_2d(X) - self.mean
        maha = np.einsum("ij,jk,ik->i", Y, self.precision, Y)
        out = -0.5 * (self.dim * math.log(2.0 * math.pi) + self.logdet + maha)
        return float(out[0]) if X.ndim == 1 else out

    def pdf(self, X):
        return np.exp(self.logpdf(X))

    def score(self, X):
        """``grad log p``, i.e. ``-Sigma^{-1} (x - mu)``."""
        X = np.asarray(X, dtype=np.float64)
        return -(X - self.mean) @ self.precision

    def __eq__(self, other):
        if not isinstance(other, Gaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __hash__(self):
        return hash((self.mean.tobytes(), self.cov.tobytes()))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Gaussian":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["cov"], dtype=np.float64))


class BridgeKind(str, enum.Enum):
    QUANTUM = "quantum"
    CLASSICAL_SB = "classical_sb"
    BB_OT = "bb_ot"


def beta_max(Sigma0, Sigma1) -> float:
    """Largest feasible quantum diffusion coefficient, ``sqrt(lambda_min(S0^1/2 S1 S0^1/2))``."""
    S0 = spd.as_spd(Sigma0)
    S1 = spd.as_spd(Sigma1)
    if S0.shape != S1.shape:
        raise ValueError(f"dimension mismatch: {S0.shape} vs {S1.shape}")
    r0 = spd.spd_sqrt(S0)
    lam = np.linalg.eigvalsh(spd.as_sym(r0 @ S1 @ r0))
    return math.sqrt(max(lam[0], 0.0))


def bridge_mean(mu0, mu1, t: float) -> np.ndarray:
    mu0 = np.asarray(mu0, dtype=np.float64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    if mu0.shape != mu1.shape:
        raise ValueError(f"dimension mismatch: {mu0.shape} vs {mu1.shape}")
    return mu0 + (mu1 - mu0) * t


@dataclass(frozen=True, eq=False)
class BridgeProblem:
    """Endpoint Gaussians, a constant diffusion coefficient and a bridge law."""

    g0: Gaussian
    g1: Gaussian
    beta: float = 0.0
    kind: BridgeKind = BridgeKind.QUANTUM
    _f_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", BridgeKind(self.kind))
        object.__setattr__(self, "beta", float(self.beta))
        if self.g0.dim != self.g1.dim:
            raise ValueError(f"endpoint dimensions differ: {self.g0.dim} vs {self.g1.dim}")
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a finite nonnegative number, got {self.beta}")
        if self.kind is BridgeKind.BB_OT and self.beta != 0.0:
            raise ValueError("bb_ot bridges are deterministic: beta must be 0")
        if self.kind is BridgeKind.QUANTUM:
            bmax = self.beta_max
            # relative slack so that beta = beta_max computed elsewhere is accepted
            if self.beta > bmax * (1.0 + 1e-12):
                raise InfeasibleBridgeError(self.beta, bmax)

    @property
    def dim(self) -> int:
        return self.g0.dim

    @cached_property
    def beta_max(self) -> float:
        return beta_max(self.g0.cov, self.g1.cov)

    @cached_property
    def _factors(self):
        S0 = self.g0.cov
        r0 = spd.spd_sqrt(S0)
        r0i = spd.spd_inv_sqrt(S0)
        A = spd.as_sym(r0 @ self.g1.cov @ r0)
        b2 = self.beta**2
        eye = np.eye(self.dim)
        if self.kind is BridgeKind.QUANTUM:
            G, sign = spd.psd_sqrt(A - b2 * eye), 1.0
        elif self.kind is BridgeKind.CLASSICAL_SB:
            G, sign = spd.spd_sqrt(A + b2 * eye), -1.0
        else:
            G, sign = spd.psd_sqrt(A), 0.0
        return S0, r0i, G, sign * b2 * spd.spd_inv(S0)

    @property
    def mean_velocity(self) -> np.ndarray:
        return self.g1.mean - self.g0.mean

    def mean(self, t: float) -> np.ndarray:
        return bridge_mean(self.g0.mean, self.g1.mean, t)

    def cov_batch(self, ts) -> np.ndarray:
        """Covariances at many times at once, shape ``(len(ts), n, n)``, unchecked."""
        S0, r0i, G, corr = self._factors
        ts = np.asarray(ts, dtype=np.float64)[:, None, None]
        N = (1.0 - ts) * S0 + ts * G
        out = r0i @ N @ N @ r0i + ts**2 * corr
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def cov(self, t: float) -> np.ndarray:
        return self.cov_batch([t])[0]

    def cov_dot(self, t: float) -> np.ndarray:
        S0, r0i, G, corr = self._factors
        N = (1.0 - t) * S0 + t * G
        D = G - S0
        return spd.as_sym(r0i @ (D @ N + N @ D) @ r0i + 2.0 * t * corr)

    def _require_gradient_kind(self):
        if self.kind is BridgeKind.CLASSICAL_SB:
            raise ValueError(
                "drift, phase and residuals are only available for quantum and bb_ot bridges"
            )

    def drift_matrix(self, t: float) -> np.ndarray:
        self._require_gradient_kind()
        return spd.solve_sym_lyapunov(self.cov(t), 2.0 * self.cov_dot(t))

    def phase_offset(self, t: float, n_grid: int = 1000) -> float:
        """``f(t) = int_0^t (|mu_dot|^2 / 2 - beta^2 Tr Sigma(s)^{-1}) ds`` with ``f(0) = 0``."""
        t = float(t)
        cached = self._f_cache.get((t, n_grid))
        if cached is not None:
            return cached
        v = self.mean_velocity
        val = 0.5 * float(v @ v) * t
        if self.beta > 0.0 and t != 0.0:
            s = np.linspace(0.0, t, n_grid)
            tr_inv = np.trace(np.linalg.inv(self.cov_batch(s)), axis1=1, axis2=2)
            val -= self.beta**2 * float(trapezoid(tr_inv, s))
        self._f_cache[(t, n_grid)] = val
        return val


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


def bridge_covariance(problem: BridgeProblem, t: float) -> np.ndarray:
    return spd.as_spd(problem.cov(_check_t(t)))


def bridge_covariance_dot(problem: BridgeProblem, t: float) -> np.ndarray:
    return problem.cov_dot(_check_t(t))


def bridge_marginal(problem: BridgeProblem, t: float) -> Gaussian:
    t = _check_t(t)
    return Gaussian(problem.mean(t), problem.cov(t))


def drift_matrix_C(problem: BridgeProblem, t: float) -> np.ndarray:
    """Symmetric ``C(t)`` with ``(C Sigma + Sigma C) / 2 = Sigma_dot``."""
    return problem.drift_matrix(_check_t(t))


def drift_velocity(problem: BridgeProblem, x, t: float) -> np.ndarray:
    """Drift ``v(x, t) = mu_dot + C(t) (x - mu(t)) / 2``; accepts one point or a batch."""
    t = _check_t(t)
    C = problem.drift_matrix(t)
    y = np.asarray(x, dtype=np.float64) - problem.mean(t)
    return problem.mean_velocity + 0.5 * y @ C


def phase_S(problem: BridgeProblem, x, t: float):
    """Quadratic phase ``S = (x-mu)^T C (x-mu) / 4 + mu_dot . (x-mu) + f(t)``."""
    t = _check_t(t)
    C = problem.drift_matrix(t)
    y = np.asarray(x, dtype=np.float64) - problem.mean(t)
    quad = 0.25 * np.einsum("...i,ij,...j->...", y, C, y)
    return quad + y @ problem.mean_velocity + problem.phase_offset(t)


def wavefunction(problem: BridgeProblem, x, t: float) -> tuple[float, float]:
    """Polar form ``(sqrt(p), S / (2 beta))`` of ``psi = sqrt(p) exp(i S / 2 beta)``."""
    if problem.beta == 0.0:
        raise ValueError("the wavefunction phase S/(2 beta) is undefined for beta = 0")
    g = bridge_marginal(problem, t)
    return np.sqrt(g.pdf(x)), phase_S(problem, x, t) / (2.0 * problem.beta)


def _check_interior(t: float, h: float) -> float:
    t = float(t)
    if not (h <= t <= 1.0 - h):
        raise ValueError(f"t={t} is too close to the boundary for step h={h}")
    return t


def _density(problem: BridgeProblem, x, t: float) -> float:
    return Gaussian(problem.mean(t), problem.cov(t)).pdf(x)


def continuity_residual(problem: BridgeProblem, x, t: float, h: float = 1e-4,
                        hx: float = 1e-5) -> float:
    """``|dp/dt + div(v p)|`` with every derivative taken by central differences."""
    problem._require_gradient_kind()
    t = _check_interior(t, h)
    x = np.asarray(x, dtype=np.float64)
    dp_dt = (_density(problem, x, t + h) - _density(problem, x, t - h)) / (2.0 * h)
    offsets = hx * np.eye(problem.dim)
    # v p at x +/- hx e_i for all axes in one batch
    pts = np.concatenate([x + offsets, x - offsets])
    g = Gaussian(problem.mean(t), problem.cov(t))
    flux = drift_velocity(problem, pts, t) * g.pdf(pts)[:, None]
    n = problem.dim
    div = np.sum(np.diag(flux[:n]) - np.diag(flux[n:])) / (2.0 * hx)
    return abs(dp_dt + div)


def hje_residual(problem: BridgeProblem, x, t: float, h: float = 1e-4,
                 hx: float = 1e-5) -> float:
    """``|dS/dt + |grad S|^2 / 2 + Q|`` with FD derivatives of ``S`` and closed-form ``Q``."""
    problem._require_gradient_kind()
    t = _check_interior(t, h)
    x = np.asarray(x, dtype=np.float64)
    dS_dt = (phase_S(problem, x, t + h) - phase_S(problem, x, t - h)) / (2.0 * h)
    offsets = hx * np.eye(problem.dim)
    S_plus = phase_S(problem, x + offsets, t)
    S_minus = phase_S(problem, x - offsets, t)
    grad = (S_plus - S_minus) / (2.0 * hx)
    Q = bohm_gaussian(bridge_marginal(problem, t), problem.beta, x)
    return abs(dS_dt + 0.5 * float(grad @ grad) + Q)


def complex_drift_matrix(problem: BridgeProblem, t: float) -> np.ndarray:
    """``C_Q(t) = C(t) + 2 i beta Sigma(t)^{-1}``."""
    return problem.drift_matrix(t) + 2j * problem.beta * spd.spd_inv(problem.cov(t))


def riccati_residual(problem: BridgeProblem, t: float, h: float = 1e-4) -> float:
    """Frobenius norm of ``dC_Q/dt + C_Q^2 / 2`` with the time derivative by central FD."""
    problem._require_gradient_kind()
    t = _check_interior(t, h)
    CQ = complex_drift_matrix(problem, t)
    dCQ = (complex_drift_matrix(problem, t + h) - complex_drift_matrix(problem, t - h)) / (2.0 * h)
    return float(np.linalg.norm(dCQ + 0.5 * CQ @ CQ))


def sample_marginal(problem: BridgeProblem, t: float, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. draws from the bridge marginal at ``t``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    t = _check_t(t)
    root = spd.spd_sqrt(problem.cov(t))
    Z = rng.standard_normal((n, problem.dim))
    return problem.mean(t) + Z @ root


def population_step(X, mu_from, root_inv_from, mu_to, root_to, beta: float, noise,
                    isotropic: bool = False) -> np.ndarray:
    """One step of the Gaussian population update.

    ``x' = mu_to + sqrt(1 - 2 beta) R_to R_from^{-1} (x - mu_from) + noise``, with
    ``noise = sqrt(2 beta) R_to xi`` so that a population with moments
    ``(mu_from, Sigma_from)`` lands exactly on ``(mu_to, Sigma_to)``. Setting
    ``isotropic`` uses the unscaled ``sqrt(2 beta) xi`` instead, which only
    preserves the covariance when ``Sigma_to = I``.

    ``root_*`` are symmetric square roots (full matrices) or per-axis standard
    deviations (1-D arrays, diagonal case). ``noise`` holds the standard normal
    draws ``xi`` with the shape of ``X``.
    """
    if 2.0 * beta > 1.0:
        raise ValueError(
            f"2*beta={2 * beta:.6g} > 1: the sqrt(1 - 2 beta) contraction factor is undefined"
        )
    Y = np.asarray(X, dtype=np.float64) - mu_from
    a = math.sqrt(1.0 - 2.0 * beta)
    b = math.sqrt(2.0 * beta)
    root_to = np.asarray(root_to)
    if root_to.ndim == 1:
        moved = mu_to + a * (Y * root_inv_from) * root_to
        kick = b * noise if isotropic else b * noise * root_to
    else:
        moved = mu_to + a * (Y @ root_inv_from) @ root_to
        kick = b * noise if isotropic else b * noise @ root_to
    return moved + kick


class GaussianBridge(TransformerMixin, BaseEstimator):
    """Estimator wrapper around the closed-form bridge between two sample clouds.

    ``fit(X0, X1)`` estimates endpoint Gaussians by sample moments and builds the
    bridge. ``transform(X)`` pushes points at ``t=0`` to time ``t`` with the
    deterministic linear map ``mu(t) + Sigma(t)^{1/2} Sigma0^{-1/2} (x - mu0)``.

    Parameters
    ----------
    beta : float, default=0.0
        Diffusion coefficient.
    kind : {"quantum", "classical_sb", "bb_ot"}, default="quantum"
    t : float, default=1.0
        Target time used by ``transform``.
    """

    def __init__(self, beta: float = 0.0, kind: str = "quantum", t: float = 1.0):
        self.beta = beta
        self.kind = kind
        self.t = t

    def fit(self, X0, X1=None):
        if X1 is None:
            raise ValueError("GaussianBridge.fit needs both endpoint sample sets")
        X0 = check_array(X0, ensure_min_samples=2)
        X1 = check_array(X1, ensure_min_samples=2)
        if X0.shape[1] != X1.shape[1]:
            raise ValueError("endpoint samples must share the feature dimension")
        g0 = Gaussian(X0.mean(axis=0), np.atleast_2d(np.cov(X0, rowvar=False)))
        g1 = Gaussian(X1.mean(axis=0), np.atleast_2d(np.cov(X1, rowvar=False)))
        self.problem_ = BridgeProblem(g0, g1, self.beta, BridgeKind(self.kind))
        self.n_features_in_ = X0.shape[1]
        return self

    def marginal(self, t: float) -> Gaussian:
        check_is_fitted(self, "problem_")
        return bridge_marginal(self.problem_, t)

    def transform(self, X, t: float | None = None):
        check_is_fitted(self, "problem_")
        X = check_array(X)
        t = self.t if t is None else t
        p = self.problem_
        M = spd.spd_sqrt(p.cov(t)) @ spd.spd_inv_sqrt(p.g0.cov)
        return p.mean(t) + (X - p.g0.mean) @ M.T

    def sample(self, n_samples: int = 1, t: float | None = None, random_state=None):
        check_is_fitted(self, "problem_")
        t = self.t if t is None else t
        rng = np.random.default_rng(random_state)
        return sample_marginal(self.problem_, t, n_samples, rng)
