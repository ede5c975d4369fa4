"""User-facing estimators: BKerNN, Brownian kernel ridge regression and a
one-hidden-layer ReLU network, plus cross-validation and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .kernels import ScalarKernelKind, averaged_kernel_matrix, kernel_expansion, mdb_cross_kernel, mdb_kernel_matrix
from .metrics import FeatureBasis, extract_features, mse, r2_score
from .penalties import PenaltyKind
from .ridge import solve_inner
from .trainer import ModelState, NumericalError, TrainConfig, fit

__all__ = [
    "ModelState",
    "BKerNN",
    "default_lambda",
    "predict",
    "fit_fixed_particles",
    "bkrr_fit_predict",
    "ReluNetState",
    "relu_init",
    "relu_forward",
    "relu_loss_and_grads",
    "relunn_fit",
    "cross_validate",
    "save_model",
    "load_model",
    "MODEL_FORMAT",
    "MODEL_VERSION",
]

MODEL_FORMAT = "bkernn-model"
MODEL_VERSION = 1


def default_lambda(X) -> float:
    """``2 max_i ||x_i||_2 / n``."""
    X = np.asarray(X, dtype=float)
    return 2.0 * float(np.linalg.norm(X, axis=1).max()) / X.shape[0]


def predict(model: ModelState, X_new) -> np.ndarray:
    """``c + sum_i alpha_i k_W(x, x_i)`` at every row of ``X_new``."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != model.X_train.shape[1]:
        raise ValueError(
            f"X_new has shape {X_new.shape}, model expects {model.X_train.shape[1]} columns"
        )
    return kernel_expansion(model.X_train, X_new, model.W, model.alpha, model.kernel) + model.c


def fit_fixed_particles(X, Y, W, lam: float, kernel=ScalarKernelKind.BROWNIAN) -> ModelState:
    """Ridge fit of ``(alpha, c)`` with the particles held at ``W``."""
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    sol = solve_inner(averaged_kernel_matrix(X, W, kernel), Y, lam)
    return ModelState(W=W, alpha=sol.alpha, c=sol.c, X_train=X, kernel=ScalarKernelKind(kernel))


class BKerNN:
    """Brownian kernel neural network regressor.

    Parameters
    ----------
    m : int
        Number of particles.
    lam : float or None
        Regularisation; ``None`` uses ``2 max_i ||x_i|| / n`` on the training set.
    penalty : str or PenaltyKind
        One of basic, variable, feature, concave_variable, concave_feature.
    s : float
        Concavity of the concave penalties.
    gamma0 : float
        Initial step size of the line search.
    n_iter : int
    kernel : str
        brownian (default), exponential or gaussian.
    seed : int
        Seed of the particle initialisation.
    """

    def __init__(
        self,
        m: int = 20,
        lam: Optional[float] = None,
        penalty="basic",
        s: float = 1.0,
        gamma0: float = 500.0,
        n_iter: int = 20,
        kernel="brownian",
        seed: int = 0,
    ):
        self.m = m
        self.lam = lam
        self.penalty = penalty
        self.s = s
        self.gamma0 = gamma0
        self.n_iter = n_iter
        self.kernel = kernel
        self.seed = seed

    def get_params(self) -> dict:
        return {k: getattr(self, k) for k in ("m", "lam", "penalty", "s", "gamma0", "n_iter", "kernel", "seed")}

    def config(self, X) -> TrainConfig:
        lam = default_lambda(X) if self.lam is None else float(self.lam)
        return TrainConfig(
            m=self.m,
            lam=lam,
            gamma0=self.gamma0,
            n_iter=self.n_iter,
            penalty=PenaltyKind.parse(self.penalty, self.s),
            kernel=self.kernel,
            seed=self.seed,
        )

    def fit(self, X, y, callback=None) -> "BKerNN":
        X = np.asarray(X, dtype=float)
        self.state_, self.report_ = fit(X, y, self.config(X), callback=callback)
        return self

    def predict(self, X) -> np.ndarray:
        return predict(self.state_, X)

    def score(self, X, y) -> float:
        return r2_score(y, self.predict(X))

    def features(self, k: int) -> FeatureBasis:
        return extract_features(self.state_.W, k, PenaltyKind.parse(self.penalty, self.s))


def bkrr_fit_predict(X, Y, X_new, lam: Optional[float] = None) -> np.ndarray:
    """Kernel ridge regression with the multi-dimensional Brownian kernel and an intercept."""
    X = np.asarray(X, dtype=float)
    lam = default_lambda(X) if lam is None else lam
    sol = solve_inner(mdb_kernel_matrix(X), Y, lam)
    return mdb_cross_kernel(X, X_new) @ sol.alpha + sol.c


@dataclass(frozen=True)
class ReluNetState:
    """``f(x) = sum_j v_j max(0, w_j^T x + b_j) + b0`` and its SGD settings."""

    hidden_weights: np.ndarray  # (m, d)
    hidden_bias: np.ndarray  # (m,)
    output_weights: np.ndarray  # (m,)
    output_bias: float
    step_size: float = 0.05
    batch_size: int = 16
    n_steps: int = 1500


def relu_init(d: int, m: int, seed, step_size=0.05, batch_size=16, n_steps=1500) -> ReluNetState:
    """Hidden weights N(0, 1/d), hidden biases U[-1, 1], output weights N(0, 1/m), output bias 0."""
    rng = np.random.default_rng(seed)
    return ReluNetState(
        hidden_weights=rng.normal(0.0, 1.0 / np.sqrt(d), size=(m, d)),
        hidden_bias=rng.uniform(-1.0, 1.0, size=m),
        output_weights=rng.normal(0.0, 1.0 / np.sqrt(m), size=m),
        output_bias=0.0,
        step_size=step_size,
        batch_size=batch_size,
        n_steps=n_steps,
    )


def relu_forward(state: ReluNetState, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    H = np.maximum(0.0, X @ state.hidden_weights.T + state.hidden_bias)
    return H @ state.output_weights + state.output_bias


def _relu_grads(Wh, bh, v, b0, X, y):
    pre = X @ Wh.T + bh
    H = np.maximum(0.0, pre)
    r = H @ v + b0 - y
    B = X.shape[0]
    loss = 0.5 * float(r @ r) / B
    g = r / B
    # ReLU derivative taken as 0 at 0
    dpre = np.outer(g, v) * (pre > 0)
    return loss, (dpre.T @ X, dpre.sum(axis=0), H.T @ g, float(g.sum()))


def relu_loss_and_grads(state: ReluNetState, X, y):
    """Loss ``mean((f - y)^2) / 2`` on a batch and its gradients.

    Returns ``(loss, (dW, db, dv, db0))`` in the field order of ReluNetState.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    return _relu_grads(
        state.hidden_weights, state.hidden_bias, state.output_weights, state.output_bias, X, y
    )


def relunn_fit(X, Y, state0: ReluNetState, seed) -> ReluNetState:
    """Minibatch SGD on the squared loss; batches are drawn epoch-wise without replacement."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.shape[0]
    bs = state0.batch_size
    if not 1 <= bs <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {bs}")
    rng = np.random.default_rng(seed)
    Wh = state0.hidden_weights.copy()
    bh = state0.hidden_bias.copy()
    v = state0.output_weights.copy()
    b0 = float(state0.output_bias)
    lr = state0.step_size
    order = np.empty(0, dtype=int)
    pos = 0
    for step in range(state0.n_steps):
        if pos >= order.size:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos : pos + bs]
        pos += bs
        loss, (dW, db, dv, db0) = _relu_grads(Wh, bh, v, b0, X[idx], Y[idx])
        if not np.isfinite(loss):
            raise NumericalError(f"ReLU network diverged at step {step} (loss={loss})")
        Wh = Wh - lr * dW
        bh = bh - lr * db
        v = v - lr * dv
        b0 = b0 - lr * db0
    return replace(state0, hidden_weights=Wh, hidden_bias=bh, output_weights=v, output_bias=b0)


def _folds(n: int, k_folds: int, seed) -> list:
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k_folds)
    if min(len(f) for f in folds) < 2:
        raise ValueError(f"{n} samples are too few for {k_folds} folds of at least 2 points")
    return folds


def cross_validate(X, Y, cfg_base: TrainConfig, lambda_grid: Sequence[float], k_folds: int = 5, seed=0):
    """Grid search over ``lam`` by k-fold negative mean squared error.

    Returns
    -------
    best_lambda : float
        Highest mean score; ties go to the larger ``lam``.
    fold_scores : dict
        ``lam -> array`` of per-fold negative MSE.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    grid = sorted({float(v) for v in lambda_grid})
    if not grid:
        raise ValueError("lambda_grid is empty")
    folds = _folds(X.shape[0], k_folds, seed)
    scores = {}
    for lam in grid:
        cfg = cfg_base.replace(lam=lam)
        vals = []
        for held in folds:
            train = np.setdiff1d(np.arange(X.shape[0]), held)
            state, _ = fit(X[train], Y[train], cfg)
            vals.append(-mse(Y[held], predict(state, X[held])))
        scores[lam] = np.array(vals)
    best = grid[0]
    for lam in grid[1:]:
        if scores[lam].mean() >= scores[best].mean():
            best = lam
    return best, scores


def save_model(model: ModelState, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": model.kernel.value,
        "config": None if model.config is None else model.config.to_dict(),
        "c": float(model.c),
        "W": model.W.tolist(),
        "alpha": model.alpha.tolist(),
        "X_train": model.X_train.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> ModelState:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    cfg = doc.get("config")
    return ModelState(
        W=np.array(doc["W"], dtype=float),
        alpha=np.array(doc["alpha"], dtype=float),
        c=float(doc["c"]),
        X_train=np.array(doc["X_train"], dtype=float),
        kernel=ScalarKernelKind(doc["kernel"]),
        config=None if cfg is None else TrainConfig.from_dict(cfg),
    )

