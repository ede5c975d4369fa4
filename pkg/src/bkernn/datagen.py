"""Synthetic data sets for the experiments, CSV input/output and standardisation.

Random draws go through ``numpy.random.default_rng`` (PCG64); a single
generator seeded with ``SyntheticSpec.seed`` produces, in order, the feature
matrix, the train covariates, the test covariates, then the noise.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .metrics import FeatureBasis

__all__ = [
    "PRNG_NAME",
    "DataError",
    "Dataset",
    "Mechanism",
    "SyntheticSpec",
    "sample_orthogonal",
    "generate",
    "load_csv",
    "save_csv",
    "write_rows",
    "standardize",
    "Standardized",
]

logger = logging.getLogger(__name__)

PRNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    P: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


class Mechanism(str, Enum):
    EXP1_ABS_SUM = "exp1_abs_sum"
    EXP2_ABS_COORDS = "exp2_abs_coords"
    EXP3_NONE = "exp3_none"
    EXP3_VARIABLES = "exp3_variables"
    EXP3_FEATURES = "exp3_features"
    EXP4_SINE = "exp4_sine"
    EXP4_SQUARE = "exp4_square"
    EXP4_TRIANGLE = "exp4_triangle"
    EXP5_ABS_SIN = "exp5_abs_sin"


_ONE_D = {Mechanism.EXP4_SINE, Mechanism.EXP4_SQUARE, Mechanism.EXP4_TRIANGLE}
_ROTATED = {Mechanism.EXP1_ABS_SUM, Mechanism.EXP3_FEATURES, Mechanism.EXP5_ABS_SIN}
_AXIS = {Mechanism.EXP2_ABS_COORDS, Mechanism.EXP3_VARIABLES}
_NOISELESS_TEST = _ONE_D | {Mechanism.EXP5_ABS_SIN}


@dataclass(frozen=True)
class SyntheticSpec:
    n_train: int
    n_test: int
    d: int
    k: int
    noise_std: float
    mechanism: Mechanism
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample sizes must be positive")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.mechanism in _ONE_D and self.d != 1:
            raise ValueError(f"{self.mechanism.value} requires d = 1, got d={self.d}")


def sample_orthogonal(d: int, k: int, seed) -> FeatureBasis:
    """First k columns of a Haar-distributed d x d orthogonal matrix.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    # fixing the signs of diag(R) makes the QR map Haar
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)[None, :]
    return FeatureBasis(Q[:, :k])


def triangle_wave(x):
    u = x + 1 - 0.25
    return 4 * np.abs(u - np.floor(u) - 0.5) - 1


def response(mechanism, X: np.ndarray, k: int, P: Optional[np.ndarray] = None) -> np.ndarray:
    """Noiseless response of a mechanism at covariates ``X``."""
    mech = Mechanism(mechanism)
    if mech is Mechanism.EXP1_ABS_SUM:
        return 2 * np.pi * np.abs((X @ P).sum(axis=1))
    if mech is Mechanism.EXP2_ABS_COORDS:
        return np.abs(2 * np.pi * X[:, :k]).sum(axis=1)
    if mech is Mechanism.EXP3_NONE:
        return np.sin(X).sum(axis=1)
    if mech is Mechanism.EXP3_VARIABLES:
        return np.sin(X[:, :k]).sum(axis=1)
    if mech is Mechanism.EXP3_FEATURES:
        return np.sin(X @ P).sum(axis=1)
    if mech is Mechanism.EXP5_ABS_SIN:
        return np.abs(np.sin(X @ P).sum(axis=1))
    x = X[:, 0]
    if mech is Mechanism.EXP4_SINE:
        return np.sin(2 * np.pi * x)
    if mech is Mechanism.EXP4_SQUARE:
        return np.sign(np.sin(2 * np.pi * x))
    return triangle_wave(x)


def generate(spec: SyntheticSpec):
    """Draw train and test sets for ``spec``.

    Returns
    -------
    train, test : Dataset
    P_true : FeatureBasis or None
        The relevant subspace: a Haar basis for rotated mechanisms, the first
        ``k`` coordinate axes for the axis-aligned ones, ``None`` otherwise.
    """
    rng = np.random.default_rng(spec.seed)
    mech = spec.mechanism
    P = None
    if mech in _ROTATED:
        P = sample_orthogonal(spec.d, spec.k, rng).P
    elif mech in _AXIS:
        P = np.eye(spec.d)[:, : spec.k]
    X_train = rng.uniform(-1.0, 1.0, size=(spec.n_train, spec.d))
    if mech in _ONE_D:
        X_test = np.linspace(-1.0, 1.0, spec.n_test)[:, None]
    else:
        X_test = rng.uniform(-1.0, 1.0, size=(spec.n_test, spec.d))
    y_train = response(mech, X_train, spec.k, P)
    y_test = response(mech, X_test, spec.k, P)
    y_train = y_train + spec.noise_std * rng.standard_normal(spec.n_train)
    if mech not in _NOISELESS_TEST:
        y_test = y_test + spec.noise_std * rng.standard_normal(spec.n_test)
    basis = None if P is None else FeatureBasis(P)
    return Dataset(X_train, y_train, P), Dataset(X_test, y_test, P), basis


def load_csv(path, target_column: Optional[str]) -> Dataset:
    """Read a header-first, comma-separated file of decimal floats.

    All columns other than ``target_column`` become covariates, in header order.
    With ``target_column=None`` every column is a covariate and ``y`` is empty.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file (no header)")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DataError(f"{path}: duplicate column names {dupes}")
    if target_column is not None and target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not in header {header}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {i}, column {header[j]!r}: cannot parse {cell!r} as a number"
                ) from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite values present")
    if values.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {values.shape[0]}")
    t = None if target_column is None else header.index(target_column)
    keep = [j for j in range(len(header)) if j != t]
    return Dataset(
        X=values[:, keep],
        y=values[:, t] if t is not None else np.empty(0),
        feature_names=tuple(header[j] for j in keep),
    )


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header: Sequence[str], rows) -> None:
    """Write numeric rows as CSV with shortest round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def save_csv(path, X, y, feature_names=None, target_column: str = "y") -> None:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    names = list(feature_names) if feature_names else [f"x{j}" for j in range(X.shape[1])]
    write_rows(path, names + [target_column], (list(xr) + [yv] for xr, yv in zip(X, y)))


class Standardized(NamedTuple):
    datasets: list
    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray


def standardize(train: Dataset, others: Sequence[Dataset] = ()) -> Standardized:
    """Centre and scale covariates with train-set moments; applies to every data set.

    Constant train columns keep a scale of 1 (so they end up at zero) and are
    reported in ``constant``.
    """
    if train.n < 2:
        raise DataError("standardize needs at least 2 training rows")
    means = train.X.mean(axis=0)
    stds = train.X.std(axis=0)
    constant = stds == 0
    if constant.any():
        logger.warning("constant covariate columns left unscaled: %s", np.flatnonzero(constant).tolist())
    stds = np.where(constant, 1.0, stds)
    out = [
        Dataset((ds.X - means) / stds, ds.y, ds.P, ds.feature_names)
        for ds in [train, *others]
    ]
    return Standardized(out, means, stds, constant)

