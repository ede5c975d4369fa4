"""Prediction score, feature extraction from particles, feature-learning score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .penalties import PenaltyKind, PenaltyTag

__all__ = ["FeatureBasis", "r2_score", "mse", "extract_features", "feature_score", "projection"]


@dataclass(frozen=True)
class FeatureBasis:
    """Columns of ``P`` span a k-dimensional feature subspace of R^d.

    ``padded`` is set when the source matrix had rank below ``k`` and
    orthonormal complement directions were appended.
    """

    P: np.ndarray
    padded: bool = False

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.shape[1] > P.shape[0]:
            raise ValueError(f"basis has k={P.shape[1]} > d={P.shape[0]}")
        object.__setattr__(self, "P", P)

    @property
    def d(self) -> int:
        return self.P.shape[0]

    @property
    def k(self) -> int:
        return self.P.shape[1]


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if y_true.size < 2:
        raise ValueError("r2_score needs at least two samples")
    denom = np.sum((y_true - y_true.mean()) ** 2)
    if denom == 0:
        raise ValueError("r2_score is undefined for a constant y_true")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / denom)


def mse(y_true, y_pred) -> float:
    diff = np.asarray(y_true, dtype=float).ravel() - np.asarray(y_pred, dtype=float).ravel()
    return float(np.mean(diff**2))


def _complete(Q: np.ndarray, k: int) -> np.ndarray:
    """Append orthonormal directions to the columns of Q until it has k of them."""
    d = Q.shape[0]
    proj = np.eye(d) - Q @ Q.T
    U, S, _ = np.linalg.svd(proj)
    return np.hstack([Q, U[:, : k - Q.shape[1]]])


def extract_features(W, k: int, kind) -> FeatureBasis:
    """Estimate a k-dimensional feature basis from the particles ``W`` (d, m).

    Spectral kinds (basic, feature, concave_feature) take the top-k left
    singular vectors; variable kinds pick the k coordinates with the largest
    row norms (lowest index first on ties).
    """
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    tag = PenaltyKind.parse(kind).tag
    if tag in (PenaltyTag.VARIABLE, PenaltyTag.CONCAVE_VARIABLE):
        norms = np.linalg.norm(W, axis=1)
        # stable sort on -norm keeps lower indices first among equal norms
        idx = np.argsort(-norms, kind="stable")[:k]
        P = np.eye(d)[:, np.sort(idx)]
        return FeatureBasis(P, padded=bool(np.count_nonzero(norms[idx]) < k))
    U, S, _ = np.linalg.svd(W, full_matrices=False)
    tol = (S[0] if S.size else 0.0) * max(W.shape) * np.finfo(float).eps
    rank = int(np.sum(S > tol))
    if rank >= k:
        return FeatureBasis(U[:, :k])
    return FeatureBasis(_complete(U[:, :rank], k), padded=True)


def projection(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    gram = P.T @ P
    if np.linalg.cond(gram) > 1e12:
        raise np.linalg.LinAlgError("singular Gram matrix in feature basis")
    return P @ np.linalg.solve(gram, P.T)


def feature_score(P_true, P_hat, d: int | None = None, k: int | None = None) -> float:
    """One minus the normalised squared distance between the two subspace projections.

    The squared Frobenius distance is ``2k - 2 trace(pi_P pi_Phat)``; it is
    divided by ``2k`` when ``k <= d/2`` and by ``2d - 2k`` otherwise. The
    score is 1 when ``k = d``.
    """
    A = P_true.P if isinstance(P_true, FeatureBasis) else np.asarray(P_true, dtype=float)
    B = P_hat.P if isinstance(P_hat, FeatureBasis) else np.asarray(P_hat, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape != B.shape:
        raise ValueError(f"bases differ in shape: {A.shape} vs {B.shape}")
    d = A.shape[0] if d is None else d
    k = A.shape[1] if k is None else k
    if (d, k) != A.shape:
        raise ValueError(f"(d, k)=({d}, {k}) does not match basis shape {A.shape}")
    if k == d:
        return 1.0
    dist2 = 2 * k - 2 * float(np.trace(projection(A) @ projection(B)))
    denom = 2 * k if k <= d / 2 else 2 * d - 2 * k
    return 1.0 - max(dist2, 0.0) / denom
