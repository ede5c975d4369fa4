"""Closed-form kernel ridge solve with an unpenalised intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .kernels import center

__all__ = ["RidgeSolution", "solve_inner", "objective_full"]


@dataclass(frozen=True)
class RidgeSolution:
    alpha: np.ndarray
    c: float
    g_value: float


def _spd_solve(A: np.ndarray, b: np.ndarray, jitter: float) -> np.ndarray:
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except LinAlgError:
        # one retry with a small diagonal jitter, see solve_inner
        A = A + jitter * np.eye(A.shape[0])
        try:
            factor = cho_factor(A, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise LinAlgError(
                "Cholesky factorisation failed; the kernel matrix is not positive semidefinite"
            ) from exc
    return cho_solve(factor, b, check_finite=False)


def solve_inner(K, Y, lam: float) -> RidgeSolution:
    """Minimise ``(1/2n)||Y - K a - c 1||^2 + (lam/2) a^T K a`` over ``(a, c)``.

    Parameters
    ----------
    K : (n, n) array
        Positive semidefinite kernel matrix.
    Y : (n,) array
    lam : float
        Ridge parameter, must be positive.

    Returns
    -------
    RidgeSolution
        ``alpha = (Kc + n lam I)^{-1} Yc`` with ``Kc``/``Yc`` the centred
        system, ``c = mean(Y) - mean(K alpha)`` and the optimal value
        ``g_value = (lam/2) Yc^T alpha``.
    """
    K = np.asarray(K, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite values in K or Y")
    n = Y.shape[0]
    if K.shape != (n, n):
        raise ValueError(f"K has shape {K.shape}, expected {(n, n)}")
    sys = center(K, Y)
    A = sys.Ktilde + n * lam * np.eye(n)
    jitter = 1e-10 * max(np.trace(sys.Ktilde), 0.0) / n
    alpha = _spd_solve(A, sys.Ytilde, jitter if jitter > 0 else 1e-12)
    c = sys.ymean - float(np.mean(K @ alpha))
    g_value = 0.5 * lam * float(sys.Ytilde @ alpha)
    return RidgeSolution(alpha=alpha, c=c, g_value=g_value)


def objective_full(K, Y, sol: RidgeSolution, lam: float) -> float:
    """Data fit plus RKHS term at ``(sol.alpha, sol.c)``, particle penalty excluded."""
    K = np.asarray(K, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    Ka = K @ sol.alpha
    resid = Y - Ka - sol.c
    n = Y.shape[0]
    return float(resid @ resid / (2 * n) + 0.5 * lam * (sol.alpha @ Ka))
