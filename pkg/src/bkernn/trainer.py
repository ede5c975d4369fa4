"""Alternating optimisation: closed-form ridge solve, then a proximal gradient
step with backtracking on the particles."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernels import ScalarKernelKind, averaged_kernel_matrix
from .penalties import PenaltyKind, PenaltyTag, penalty_value, prox
from .ridge import RidgeSolution, solve_inner

__all__ = [
    "NumericalError",
    "TrainConfig",
    "TrainReport",
    "ModelState",
    "reduced_objective",
    "grad_G",
    "backtracking_step",
    "init_particles",
    "fit",
]

logger = logging.getLogger(__name__)

GROWTH = 1.5
GAMMA_FLOOR = 1e-12
GAMMA_CEIL = 1e6


class NumericalError(ArithmeticError):
    """Training produced a non-finite objective or failed to factorise."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of a training run.

    ``penalty=None`` switches the particle penalty off (the prox becomes the
    identity), which turns each outer step into plain gradient descent.
    """

    m: int = 20
    lam: float = 0.01
    gamma0: float = 500.0
    n_iter: int = 20
    penalty: Optional[PenaltyKind] = field(default_factory=lambda: PenaltyKind(PenaltyTag.BASIC))
    kernel: ScalarKernelKind = ScalarKernelKind.BROWNIAN
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.penalty, str):
            object.__setattr__(self, "penalty", PenaltyKind.parse(self.penalty))
        object.__setattr__(self, "kernel", ScalarKernelKind(self.kernel))
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def replace(self, **changes) -> "TrainConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return TrainConfig(**values)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kernel"] = self.kernel.value
        pen = self.penalty
        out["penalty"] = None if pen is None else {"tag": pen.tag.value, "s": pen.s}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        pen = data.get("penalty")
        if pen is not None:
            data["penalty"] = PenaltyKind(pen["tag"], pen.get("s"))
        return cls(**data)


@dataclass
class TrainReport:
    """Objective (G + lam * penalty) at W_0, ..., W_n_iter and per-step line-search data."""

    objective_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    backtrack_counts: list = field(default_factory=list)
    stalled: list = field(default_factory=list)


@dataclass(frozen=True)
class ModelState:
    W: np.ndarray
    alpha: np.ndarray
    c: float
    X_train: np.ndarray
    kernel: ScalarKernelKind
    config: Optional[TrainConfig] = None


def init_particles(d: int, m: int, seed) -> np.ndarray:
    """i.i.d. N(0, 1/d) particles, shape (d, m)."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, m))


def reduced_objective(X, Y, W, lam, kernel=ScalarKernelKind.BROWNIAN):
    """``G(W)`` and the ridge solution that attains it."""
    K = averaged_kernel_matrix(X, W, kernel)
    sol = solve_inner(K, Y, lam)
    return sol.g_value, sol


def _sign_sums(P: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``A[i, j] = sum_i' z_i' sign(P[i, j] - P[i', j])`` via sorting, ties count 0."""
    n, m = P.shape
    A = np.empty((n, m))
    for j in range(m):
        p = P[:, j]
        order = np.argsort(p, kind="stable")
        v = p[order]
        cz = np.concatenate(([0.0], np.cumsum(z[order])))
        below = cz[np.searchsorted(v, p, side="left")]
        above = cz[-1] - cz[np.searchsorted(v, p, side="right")]
        A[:, j] = below - above
    return A


def _derivative_sums(P: np.ndarray, z: np.ndarray, kind: ScalarKernelKind) -> np.ndarray:
    """``A[i, j] = sum_i' z_i' phi'(P[i, j] - P[i', j])`` for shift-invariant kernels."""
    n, m = P.shape
    A = np.empty((n, m))
    for j in range(m):
        u = P[:, j, None] - P[None, :, j]
        if kind is ScalarKernelKind.EXPONENTIAL:
            dphi = -0.5 * np.sign(u) * np.exp(-np.abs(u) / 2)
        else:
            dphi = -u * np.exp(-(u**2) / 2)
        A[:, j] = dphi @ z
    return A


def grad_G(X, W, z, lam: float, kernel=ScalarKernelKind.BROWNIAN) -> np.ndarray:
    """Gradient of the reduced objective with respect to the particles.

    For the Brownian kernel, column ``j`` is
    ``(lam / 4m) sum_{i,i'} z_i z_i' sign(w_j^T(x_i - x_i')) (x_i - x_i')``
    with ``sign(0) = 0``. The double sum is antisymmetric in ``(i, i')``, so it
    collapses to ``2 sum_i z_i a_i x_i`` where ``a_i`` is a signed sum of
    ``z`` over the points projected below/above ``x_i``; ``a`` is obtained by
    sorting the projections.

    Parameters
    ----------
    X : (n, d) array
    W : (d, m) array
    z : (n,) array
        Dual coefficients ``(Kc + n lam I)^{-1} Yc`` at ``W``.
    lam : float
    kernel : ScalarKernelKind

    Returns
    -------
    (d, m) array
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    if X.shape[1] != W.shape[0] or X.shape[0] != z.shape[0]:
        raise ValueError(f"dimension mismatch: X {X.shape}, W {W.shape}, z {z.shape}")
    m = W.shape[1]
    kernel = ScalarKernelKind(kernel)
    P = X @ W
    if kernel is ScalarKernelKind.BROWNIAN:
        A = _sign_sums(P, z)
        return (lam / (2 * m)) * (X.T @ (z[:, None] * A))
    # d/dK of G is -(lam/2) z z^T because z is already centred
    A = _derivative_sums(P, z, kernel)
    return -(lam / m) * (X.T @ (z[:, None] * A))


def _prox(cfg: TrainConfig, W: np.ndarray, t: float) -> np.ndarray:
    if cfg.penalty is None:
        return W
    return prox(cfg.penalty, W, t)


def _penalty(cfg: TrainConfig, W: np.ndarray) -> float:
    if cfg.penalty is None:
        return 0.0
    return penalty_value(cfg.penalty, W)


@dataclass
class _Step:
    W: np.ndarray
    gamma: float
    halvings: int
    g_value: float
    sol: RidgeSolution
    stalled: bool


def _line_search(X, Y, W, g_value, sol, grad, gamma_in, cfg: TrainConfig) -> _Step:
    lo, hi = GAMMA_FLOOR * cfg.gamma0, GAMMA_CEIL * cfg.gamma0
    gamma = min(gamma_in * GROWTH, hi)
    halvings = 0
    while True:
        U = _prox(cfg, W - gamma * grad, cfg.lam * gamma)
        g_new, sol_new = reduced_objective(X, Y, U, cfg.lam, cfg.kernel)
        Gg = (W - U) / gamma
        bound = g_value - gamma * np.sum(grad * Gg) + 0.5 * gamma * np.sum(Gg * Gg)
        if np.isfinite(g_new) and g_new <= bound:
            return _Step(U, gamma, halvings, g_new, sol_new, False)
        gamma /= 2
        halvings += 1
        if gamma < lo:
            logger.debug("line search stalled after %d halvings", halvings)
            return _Step(W, lo, halvings, g_value, sol, True)


def backtracking_step(X, Y, W, gamma_in: float, cfg: TrainConfig):
    """One proximal gradient step with backtracking.

    The step size starts at ``1.5 * gamma_in`` and is halved until
    ``G(U) <= G(W) - gamma <grad, G_gamma> + (gamma/2) ||G_gamma||^2`` where
    ``U = prox_{lam gamma penalty}(W - gamma grad)`` and
    ``G_gamma = (W - U) / gamma``. If gamma falls below ``1e-12 * gamma0``
    the step is abandoned and ``W`` is returned unchanged.

    Returns
    -------
    W_next : (d, m) array
    gamma_out : float
    halvings : int
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    W = np.asarray(W, dtype=float)
    g_value, sol = reduced_objective(X, Y, W, cfg.lam, cfg.kernel)
    grad = grad_G(X, W, sol.alpha, cfg.lam, cfg.kernel)
    step = _line_search(X, Y, W, g_value, sol, grad, gamma_in, cfg)
    return step.W, step.gamma, step.halvings


def fit(
    X,
    Y,
    cfg: TrainConfig,
    W0=None,
    callback: Optional[Callable[[int, np.ndarray, RidgeSolution], None]] = None,
):
    """Train the particles and the ridge coefficients.

    Parameters
    ----------
    X : (n, d) array
    Y : (n,) array
    cfg : TrainConfig
    W0 : (d, m) array, optional
        Initial particles; drawn i.i.d. ``N(0, 1/d)`` from ``cfg.seed`` when omitted.
    callback : callable, optional
        Called as ``callback(k, W_k, solution_k)`` for ``k = 0..n_iter``.

    Returns
    -------
    (ModelState, TrainReport)
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"X {X.shape} and Y {Y.shape} are inconsistent")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite values in training data")
    W = init_particles(d, cfg.m, cfg.seed) if W0 is None else np.array(W0, dtype=float)
    if W.shape != (d, cfg.m):
        raise ValueError(f"W0 has shape {W.shape}, expected {(d, cfg.m)}")

    report = TrainReport()
    try:
        g_value, sol = reduced_objective(X, Y, W, cfg.lam, cfg.kernel)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    report.objective_trace.append(g_value + cfg.lam * _penalty(cfg, W))
    if callback is not None:
        callback(0, W, sol)
    gamma = cfg.gamma0
    for it in range(1, cfg.n_iter + 1):
        grad = grad_G(X, W, sol.alpha, cfg.lam, cfg.kernel)
        try:
            step = _line_search(X, Y, W, g_value, sol, grad, gamma, cfg)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        W, gamma, g_value, sol = step.W, step.gamma, step.g_value, step.sol
        obj = g_value + cfg.lam * _penalty(cfg, W)
        if not np.isfinite(obj):
            raise NumericalError(f"iteration {it}: objective is {obj} (gamma={gamma:g})")
        report.objective_trace.append(obj)
        report.step_trace.append(gamma)
        report.backtrack_counts.append(step.halvings)
        report.stalled.append(step.stalled)
        if callback is not None:
            callback(it, W, sol)

    state = ModelState(W=W, alpha=sol.alpha, c=sol.c, X_train=X, kernel=cfg.kernel, config=cfg)
    return state, report
