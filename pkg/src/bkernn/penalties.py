"""Particle penalties and their proximal operators.

All penalties act on the particle matrix ``W`` of shape ``(d, m)``:

* ``basic``: ``(1/2m) sum_j ||w_j||_2`` (columns)
* ``variable``: ``(1/(2 sqrt m)) sum_a ||W^(a)||_2`` (rows)
* ``feature``: ``(1/(2 sqrt m)) sum_a S_a`` (singular values)
* ``concave_variable``: ``(1/2s) sum_a log(1 + (s/sqrt m) ||W^(a)||_2)``
* ``concave_feature``: ``(1/2s) sum_a log(1 + (s/sqrt m) S_a)``

``prox(kind, W, t)`` returns a minimiser of
``(1/2)||W - U||_F^2 + t * penalty(U)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "PenaltyTag",
    "PenaltyKind",
    "penalty_value",
    "prox",
    "concave_shrink",
]

_SV_RTOL = 1e-12


class PenaltyTag(str, Enum):
    BASIC = "basic"
    VARIABLE = "variable"
    FEATURE = "feature"
    CONCAVE_VARIABLE = "concave_variable"
    CONCAVE_FEATURE = "concave_feature"


def _tag(value) -> PenaltyTag:
    if isinstance(value, PenaltyTag):
        return value
    return PenaltyTag(str(value).replace("-", "_"))


@dataclass(frozen=True)
class PenaltyKind:
    """A penalty tag plus the concavity parameter ``s`` for the concave tags."""

    tag: PenaltyTag
    s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tag", _tag(self.tag))
        if self.concave:
            if self.s is None or not self.s > 0:
                raise ValueError(f"{self.tag.value} needs s > 0, got {self.s}")
            object.__setattr__(self, "s", float(self.s))
        else:
            object.__setattr__(self, "s", None)

    @classmethod
    def parse(cls, value, s: float = 1.0) -> "PenaltyKind":
        if isinstance(value, PenaltyKind):
            return value
        tag = _tag(value)
        return cls(tag, s if tag.value.startswith("concave") else None)

    @property
    def concave(self) -> bool:
        return self.tag in (PenaltyTag.CONCAVE_VARIABLE, PenaltyTag.CONCAVE_FEATURE)

    @property
    def spectral(self) -> bool:
        return self.tag in (PenaltyTag.FEATURE, PenaltyTag.CONCAVE_FEATURE)

    @property
    def convex_counterpart(self) -> "PenaltyKind":
        if self.tag is PenaltyTag.CONCAVE_VARIABLE:
            return PenaltyKind(PenaltyTag.VARIABLE)
        if self.tag is PenaltyTag.CONCAVE_FEATURE:
            return PenaltyKind(PenaltyTag.FEATURE)
        return self

    def __str__(self) -> str:
        if self.concave:
            return f"{self.tag.value}(s={self.s:g})"
        return self.tag.value


def _singular_values(W: np.ndarray) -> np.ndarray:
    return np.linalg.svd(W, compute_uv=False)


def penalty_value(kind: PenaltyKind, W) -> float:
    W = np.asarray(W, dtype=float)
    m = W.shape[1]
    tag = kind.tag
    if tag is PenaltyTag.BASIC:
        return float(np.linalg.norm(W, axis=0).sum() / (2 * m))
    if tag in (PenaltyTag.VARIABLE, PenaltyTag.CONCAVE_VARIABLE):
        groups = np.linalg.norm(W, axis=1)
    else:
        groups = _singular_values(W)
    if not kind.concave:
        return float(groups.sum() / (2 * np.sqrt(m)))
    s = kind.s
    return float(np.log1p(s / np.sqrt(m) * groups).sum() / (2 * s))


def _group_shrink(norms: np.ndarray, thresh: float) -> np.ndarray:
    """Factors ``(1 - thresh/norm)_+``, with 0 for zero-norm groups."""
    factors = np.zeros_like(norms)
    nz = norms > 0
    factors[nz] = np.maximum(0.0, 1.0 - thresh / norms[nz])
    return factors


def _concave_objective(r: np.ndarray, c: np.ndarray, t: float, s: float, m: int) -> np.ndarray:
    # (1/2) r^2 (1 - c)^2 + (t/2s) log(1 + (s/sqrt m) c r)
    return 0.5 * (r * (1 - c)) ** 2 + t / (2 * s) * np.log1p(s / np.sqrt(m) * c * r)


def concave_shrink(r, t: float, s: float, m: int) -> np.ndarray:
    """Scaling factors ``c`` of the concave log penalty prox for group norms ``r``.

    For each group norm ``r`` the scaled group ``c * group`` minimises
    ``(1/2) r^2 (1 - c)^2 + (t/2s) log(1 + (s/sqrt m) c r)`` over ``c >= 0``.
    Stationary points solve ``beta c^2 + (1 - beta) c + (kappa - 1) = 0`` with
    ``beta = s r / sqrt m`` and ``kappa = t / (2 sqrt(m) r)``; the result is
    the best of ``c = 0`` and the positive roots, ties going to 0.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    rootm = np.sqrt(m)
    for idx, ri in enumerate(r):
        if not ri > 0:
            continue
        beta = s * ri / rootm
        kappa = t / (2 * rootm * ri)
        a, b, c0 = beta, 1.0 - beta, kappa - 1.0
        disc = b * b - 4 * a * c0
        if disc <= 0:
            continue
        # cancellation-free roots; q never vanishes since disc > 0
        q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
        roots = np.array([q / a, c0 / q])
        cands = roots[(roots > 0) & np.isfinite(roots)]
        if cands.size == 0:
            continue
        vals = _concave_objective(ri, cands, t, s, m)
        best = int(np.argmin(vals))
        if vals[best] < _concave_objective(ri, np.array([0.0]), t, s, m)[0]:
            out[idx] = cands[best]
    return out


def _spectral_prox(W: np.ndarray, shrink) -> np.ndarray:
    U, S, Vt = np.linalg.svd(W, full_matrices=False)
    S = S.copy()
    if S.size:
        S[S < _SV_RTOL * S[0]] = 0.0
    return (U * (S * shrink(S))) @ Vt


def prox(kind: PenaltyKind, W, t: float) -> np.ndarray:
    """Proximal operator of ``t * penalty`` at ``W``.

    Parameters
    ----------
    kind : PenaltyKind
    W : (d, m) array
    t : float
        Penalty weight; in the training loop this is ``lam * gamma``.
    """
    W = np.asarray(W, dtype=float)
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    m = W.shape[1]
    tag = kind.tag
    if tag is PenaltyTag.BASIC:
        f = _group_shrink(np.linalg.norm(W, axis=0), t / (2 * m))
        return W * f[None, :]
    if tag is PenaltyTag.VARIABLE:
        f = _group_shrink(np.linalg.norm(W, axis=1), t / (2 * np.sqrt(m)))
        return W * f[:, None]
    if tag is PenaltyTag.FEATURE:
        return _spectral_prox(W, lambda S: _group_shrink(S, t / (2 * np.sqrt(m))))
    if tag is PenaltyTag.CONCAVE_VARIABLE:
        f = concave_shrink(np.linalg.norm(W, axis=1), t, kind.s, m)
        return W * f[:, None]
    return _spectral_prox(W, lambda S: concave_shrink(S, t, kind.s, m))
