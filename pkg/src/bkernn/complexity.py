"""Monte-Carlo probe of the Gaussian complexity of single-projection Brownian
RKHS functions, ``{x -> g(w^T x) : ||g|| <= 1, w on the unit sphere}``.

For a fixed direction the supremum over ``g`` is available in closed form,
``sqrt(eps^T K^(w) eps) / n``; the supremum over directions is approximated by
the best of finitely many random directions, so the estimate is a lower bound
of the exact complexity of the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["ProbeConfig", "inner_sup", "estimate_gn", "dimension_bound"]


@dataclass(frozen=True)
class ProbeConfig:
    n_noise_draws: int = 100
    n_direction_draws: int = 200
    sphere: str = "l2"
    seed: int = 0

    def __post_init__(self):
        if self.n_noise_draws < 1 or self.n_direction_draws < 1:
            raise ValueError("draw counts must be >= 1")
        if self.sphere not in ("l1", "l2"):
            raise ValueError(f"sphere must be 'l1' or 'l2', got {self.sphere!r}")


def _quad_forms(P: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``eps^T K^(w) eps`` for every column of the projections ``P`` (n, D).

    Uses ``eps^T K eps = (sum eps)(sum eps |p|) - (1/2) sum_ij eps_i eps_j |p_i - p_j|``
    and evaluates the pairwise term in O(n log n) per column after sorting.
    """
    total = eps.sum()
    linear = total * (eps @ np.abs(P))
    order = np.argsort(P, axis=0, kind="stable")
    ps = np.take_along_axis(P, order, axis=0)
    es = eps[order]
    before = np.cumsum(es, axis=0) - es  # sum of eps strictly below in sorted order
    # sum_{i<j} e_i e_j (p_j - p_i) over the sorted sequence
    pair = np.sum(es * ps * before, axis=0) - np.sum(es * ps * (total - before - es), axis=0)
    return linear - pair


def inner_sup(X, w, eps) -> float:
    """``sup_{||g|| <= 1} (1/n) sum_i eps_i g(w^T x_i) = sqrt(eps^T K^(w) eps) / n``."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    eps = np.asarray(eps, dtype=float).ravel()
    if X.shape[1] != w.shape[0] or X.shape[0] != eps.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, w {w.shape}, eps {eps.shape}")
    q = _quad_forms((X @ w)[:, None], eps)[0]
    return float(np.sqrt(max(q, 0.0)) / X.shape[0])


def _directions(d: int, count: int, sphere: str, rng) -> np.ndarray:
    G = rng.standard_normal((d, count))
    norms = np.abs(G).sum(axis=0) if sphere == "l1" else np.linalg.norm(G, axis=0)
    return G / norms


def estimate_gn(X, cfg: ProbeConfig, directions: Optional[np.ndarray] = None) -> float:
    """Average over Gaussian noise draws of the best sampled direction.

    Directions are drawn once per call (shape ``(d, n_direction_draws)``) from
    a stream independent of the noise, so raising ``n_direction_draws`` with
    the same seed only adds candidates. Pass ``directions`` to fix them.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    noise_seq, dir_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if directions is None:
        directions = _directions(d, cfg.n_direction_draws, cfg.sphere, np.random.default_rng(dir_seq))
    directions = np.asarray(directions, dtype=float).reshape(d, -1)
    P = X @ directions
    noise_rng = np.random.default_rng(noise_seq)
    vals = np.empty(cfg.n_noise_draws)
    for r in range(cfg.n_noise_draws):
        eps = noise_rng.standard_normal(n)
        vals[r] = np.sqrt(max(_quad_forms(P, eps).max(), 0.0)) / n
    return float(vals.mean())


def dimension_bound(X, sphere: str = "l2") -> float:
    """``8 sqrt(d/n) sqrt(log(n+1)) sqrt(mean ||x||_*)`` with the sample mean of the dual norm."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    dual = np.abs(X).max(axis=1) if sphere == "l1" else np.linalg.norm(X, axis=1)
    return float(8 * np.sqrt(d / n) * np.sqrt(np.log(n + 1)) * np.sqrt(dual.mean()))
