"""Scalar kernels and the kernel matrices built from projected data.

Every particle ``w`` projects the covariates onto a line, ``p = X @ w``, and a
one-dimensional kernel is evaluated on the projections. The learned kernel is
the average over the ``m`` particles (columns of ``W``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ScalarKernelKind",
    "CenteredSystem",
    "scalar_kernel",
    "particle_kernel_matrix",
    "averaged_kernel_matrix",
    "cross_kernel",
    "kernel_expansion",
    "center",
    "mdb_kernel_matrix",
    "mdb_cross_kernel",
]


class ScalarKernelKind(str, Enum):
    BROWNIAN = "brownian"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


def _kind(kind) -> ScalarKernelKind:
    return ScalarKernelKind(kind)


def _apply(kind: ScalarKernelKind, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a and b broadcast against each other
    if kind is ScalarKernelKind.BROWNIAN:
        return (np.abs(a) + np.abs(b) - np.abs(a - b)) / 2
    if kind is ScalarKernelKind.EXPONENTIAL:
        return np.exp(-np.abs(a - b) / 2)
    return np.exp(-((a - b) ** 2) / 2)


def scalar_kernel(kind, a: float, b: float) -> float:
    """Evaluate one of the scalar kernels at ``(a, b)``.

    ``brownian`` is ``(|a| + |b| - |a - b|) / 2 = min(|a|, |b|) 1[ab > 0]``,
    ``exponential`` is ``exp(-|a - b| / 2)`` and ``gaussian`` is
    ``exp(-(a - b)**2 / 2)``.
    """
    return float(_apply(_kind(kind), np.float64(a), np.float64(b)))


def _check_dims(X: np.ndarray, W: np.ndarray) -> None:
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if W.shape[0] != X.shape[1]:
        raise ValueError(
            f"dimension mismatch: X has {X.shape[1]} columns, particles have {W.shape[0]} rows"
        )


def _projected_kernel(P_new: np.ndarray, P_train: np.ndarray, kind: ScalarKernelKind) -> np.ndarray:
    """Mean over particles of k(P_new[r, j], P_train[i, j]); shape (p, n)."""
    m = P_train.shape[1]
    acc = np.zeros((P_new.shape[0], P_train.shape[0]))
    buf = np.empty_like(acc)
    for j in range(m):
        np.subtract(P_new[:, j, None], P_train[None, :, j], out=buf)
        if kind is ScalarKernelKind.GAUSSIAN:
            np.square(buf, out=buf)
        else:
            np.abs(buf, out=buf)
        if kind is ScalarKernelKind.BROWNIAN:
            acc -= buf
        else:
            buf *= -0.5
            np.exp(buf, out=buf)
            acc += buf
    if kind is ScalarKernelKind.BROWNIAN:
        # the |a| + |b| part is rank structured, only |a - b| needs the pairwise loop
        acc /= m
        acc += np.abs(P_new).mean(axis=1)[:, None] + np.abs(P_train).mean(axis=1)[None, :]
        return acc / 2
    return acc / m


def _brownian_expansion(a: np.ndarray, p: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """``sum_i coef_i (|a| + |p_i| - |a - p_i|) / 2`` for every query ``a``, by sorting ``p``."""
    order = np.argsort(p, kind="stable")
    ps, cs = p[order], coef[order]
    A = np.concatenate([[0.0], np.cumsum(cs)])
    B = np.concatenate([[0.0], np.cumsum(cs * ps)])
    k = np.searchsorted(ps, a, side="right")
    # sum_i c_i |a - p_i| split at the sorted position of a
    dist = (a * A[k] - B[k]) + (B[-1] - B[k]) - a * (A[-1] - A[k])
    return (np.abs(a) * A[-1] + float(cs @ np.abs(ps)) - dist) / 2


def _exponential_expansion(a: np.ndarray, p: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """``sum_i coef_i exp(-|a - p_i| / 2)`` through damped running sums over sorted ``p``."""
    order = np.argsort(p, kind="stable")
    ps, cs = p[order], coef[order]
    n = ps.size
    decay = np.exp(-np.diff(ps) / 2)
    # L[k] = sum_{i<=k} c_i exp(-(ps_k - ps_i)/2), R[k] = sum_{i>=k} c_i exp(-(ps_i - ps_k)/2)
    L, R = np.empty(n), np.empty(n)
    L[0], R[-1] = cs[0], cs[-1]
    for k in range(1, n):
        L[k] = L[k - 1] * decay[k - 1] + cs[k]
        R[n - 1 - k] = R[n - k] * decay[n - 1 - k] + cs[n - 1 - k]
    k = np.searchsorted(ps, a, side="right")
    out = np.zeros_like(a)
    left = k > 0
    kl = k[left] - 1
    out[left] += L[kl] * np.exp(-(a[left] - ps[kl]) / 2)
    right = k < n
    kr = k[right]
    out[right] += R[kr] * np.exp(-(ps[kr] - a[right]) / 2)
    return out


def kernel_expansion(X_train, X_new, W, coef, kind=ScalarKernelKind.BROWNIAN) -> np.ndarray:
    """``sum_i coef_i k_W(x, x_i)`` at every row ``x`` of ``X_new``.

    Equal to ``cross_kernel(X_train, X_new, W, kind) @ coef`` but, for the
    brownian and exponential kernels, computed per particle in
    O((n + p) log n) after sorting the training projections.
    """
    X_train = np.asarray(X_train, dtype=float)
    X_new = np.asarray(X_new, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    _check_dims(X_train, W)
    _check_dims(X_new, W)
    coef = np.asarray(coef, dtype=float).ravel()
    if coef.shape[0] != X_train.shape[0]:
        raise ValueError(f"{coef.shape[0]} coefficients for {X_train.shape[0]} training points")
    kind = _kind(kind)
    if kind is ScalarKernelKind.GAUSSIAN:
        return _projected_kernel(X_new @ W, X_train @ W, kind) @ coef
    expand = _brownian_expansion if kind is ScalarKernelKind.BROWNIAN else _exponential_expansion
    P_new, P_train = X_new @ W, X_train @ W
    out = np.zeros(X_new.shape[0])
    for j in range(W.shape[1]):
        out += expand(P_new[:, j], P_train[:, j], coef)
    return out / W.shape[1]


def particle_kernel_matrix(X, w, kind=ScalarKernelKind.BROWNIAN) -> np.ndarray:
    """Kernel matrix of a single particle ``w`` on the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float).reshape(-1, 1)
    return averaged_kernel_matrix(X, w, kind)


def averaged_kernel_matrix(X, W, kind=ScalarKernelKind.BROWNIAN) -> np.ndarray:
    """Average of the per-particle kernel matrices, ``(1/m) sum_j K^(w_j)``.

    Parameters
    ----------
    X : (n, d) array
    W : (d, m) array
        Particles as columns.
    kind : ScalarKernelKind

    Returns
    -------
    (n, n) symmetric array
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    _check_dims(X, W)
    if W.shape[1] < 1:
        raise ValueError("W must have at least one particle")
    P = X @ W
    K = _projected_kernel(P, P, _kind(kind))
    # exact symmetry, the loop above is symmetric only up to rounding of the row/col means
    return (K + K.T) / 2


def cross_kernel(X_train, X_new, W, kind=ScalarKernelKind.BROWNIAN) -> np.ndarray:
    """Kernel block between new points (rows) and training points (columns)."""
    X_train = np.asarray(X_train, dtype=float)
    X_new = np.asarray(X_new, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    _check_dims(X_train, W)
    _check_dims(X_new, W)
    return _projected_kernel(X_new @ W, X_train @ W, _kind(kind))


@dataclass(frozen=True)
class CenteredSystem:
    Ktilde: np.ndarray
    Ytilde: np.ndarray
    ymean: float


def center(K, Y) -> CenteredSystem:
    """Double-centre ``K`` and centre ``Y`` (``Pi K Pi`` and ``Pi Y``)."""
    K = np.asarray(K, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    Ktilde = K - row - col + K.mean()
    ymean = float(Y.mean())
    return CenteredSystem(Ktilde=Ktilde, Ytilde=Y - ymean, ymean=ymean)


def mdb_cross_kernel(X_train, X_new) -> np.ndarray:
    """Multi-dimensional Brownian kernel ``(|x| + |x'| - |x - x'|) / 2`` (l2 norms)."""
    X_train = np.asarray(X_train, dtype=float)
    X_new = np.asarray(X_new, dtype=float)
    if X_train.shape[1] != X_new.shape[1]:
        raise ValueError("dimension mismatch between X_train and X_new")
    nt = np.linalg.norm(X_train, axis=1)
    nn = np.linalg.norm(X_new, axis=1)
    diff = np.linalg.norm(X_new[:, None, :] - X_train[None, :, :], axis=2)
    return (nn[:, None] + nt[None, :] - diff) / 2


def mdb_kernel_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    K = mdb_cross_kernel(X, X)
    return (K + K.T) / 2
