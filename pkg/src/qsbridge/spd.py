"""Dense symmetric / SPD matrix kernel.

Matrices are plain ``numpy`` arrays. ``as_sym`` enforces exact symmetry by
averaging with the transpose, ``as_spd`` additionally checks the spectrum.
"""

from __future__ import annotations

import numpy as np

# Eigenvalues below -SPD_REL_TOL * lambda_max are rejected; eigenvalues in
# [-SPD_REL_TOL * lambda_max, EIG_FLOOR] are clamped up to EIG_FLOOR.
SPD_REL_TOL = 1e-10
EIG_FLOOR = 1e-12


class NotSPDError(ValueError):
    """Raised when a matrix is not (numerically) symmetric positive definite."""


def as_sym(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def _clamp_spectrum(w: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(w)):
        raise NotSPDError("matrix has non-finite eigenvalues")
    lam_max = max(w[-1], 0.0)
    if lam_max <= 0.0 or w[0] < -SPD_REL_TOL * lam_max:
        raise NotSPDError(
            f"matrix is not SPD: smallest eigenvalue {w[0]:.6g} "
            f"(largest {w[-1]:.6g})"
        )
    return np.maximum(w, EIG_FLOOR)


def _clamped_eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise np.linalg.LinAlgError(f"symmetric eigensolver did not converge: {exc}") from exc
    return _clamp_spectrum(w), V


def as_spd(M) -> np.ndarray:
    """Symmetrize ``M`` and validate it is SPD.

    The matrix is rebuilt from its spectrum only when the drift clamp
    actually changed an eigenvalue, so well-conditioned inputs pass through
    unchanged apart from symmetrization.
    """
    S = as_sym(M)
    w_raw, V = np.linalg.eigh(S)
    w = _clamp_spectrum(w_raw)
    if np.any(w != w_raw):
        S = as_sym((V * w) @ V.T)
    return S


def spd_eigen(M) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""
    return _clamped_eigh(as_sym(M))


def spd_function(M, func) -> np.ndarray:
    """Apply a scalar function to the spectrum of an SPD matrix."""
    w, V = spd_eigen(M)
    return as_sym((V * func(w)) @ V.T)


def spd_sqrt(M) -> np.ndarray:
    """Principal (SPD) square root."""
    return spd_function(M, np.sqrt)


def spd_inv_sqrt(M) -> np.ndarray:
    return spd_function(M, lambda w: 1.0 / np.sqrt(w))


def spd_inv(M) -> np.ndarray:
    return spd_function(M, np.reciprocal)


def spd_logdet(M) -> float:
    w, _ = spd_eigen(M)
    return float(np.sum(np.log(w)))


def psd_sqrt(M) -> np.ndarray:
    """Square root of a symmetric PSD matrix, flooring tiny negative eigenvalues at 0.

    Used for ``(A - beta^2 I)^{1/2}`` at the feasibility edge, where the
    smallest eigenvalue is legitimately zero.
    """
    S = as_sym(M)
    w, V = np.linalg.eigh(S)
    scale = max(abs(w[-1]), 1.0)
    if w[0] < -1e-9 * scale:
        raise NotSPDError(f"matrix is not PSD: smallest eigenvalue {w[0]:.6g}")
    return as_sym((V * np.sqrt(np.clip(w, 0.0, None))) @ V.T)


def solve_sym_lyapunov(Sigma, R) -> np.ndarray:
    """Solve ``C Sigma + Sigma C = R`` for symmetric ``C``.

    Works in the eigenbasis of ``Sigma``: with ``Sigma = V diag(lam) V^T`` and
    ``R~ = V^T R V`` the solution is ``C~_ij = R~_ij / (lam_i + lam_j)``.
    """
    w, V = spd_eigen(Sigma)
    Rt = V.T @ as_sym(R) @ V
    Ct = Rt / (w[:, None] + w[None, :])
    return as_sym(V @ Ct @ V.T)


def random_spd(n: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues uniform in ``[lo, hi]`` and a Haar-random basis."""
    Q, Rm = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(Rm))
    w = rng.uniform(lo, hi, size=n)
    return as_sym((Q * w) @ Q.T)
