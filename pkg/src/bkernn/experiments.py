"""Runners for the five synthetic experiments.

Each runner turns a parameter dict into named tables of numeric rows. Work is
split into independent tasks (one per setting and seed), optionally spread over
a process pool, and collected in a fixed sorted order so the output does not
depend on scheduling. Categorical columns are stored as integer codes; the
legends live in ``LEGENDS`` and are copied into the run manifest.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .datagen import PRNG_NAME, Mechanism, SyntheticSpec, generate, write_rows
from .estimators import (
    bkrr_fit_predict,
    cross_validate,
    default_lambda,
    predict,
    relu_forward,
    relu_init,
    relunn_fit,
)
from .kernels import ScalarKernelKind
from .metrics import extract_features, feature_score, mse, r2_score
from .penalties import PenaltyKind, PenaltyTag
from .trainer import ModelState, TrainConfig, fit

__all__ = [
    "EXPERIMENTS",
    "DEFAULTS",
    "LEGENDS",
    "MANIFEST_VERSION",
    "Table",
    "RunSpec",
    "resolve_params",
    "run_experiment",
    "write_run",
    "read_manifest",
    "spec_from_manifest",
    "default_jobs",
]

MANIFEST_VERSION = 1
UNDEFINED = -1.0  # feature score without a ground-truth basis

KERNELS = list(ScalarKernelKind)
PENALTIES = list(PenaltyTag)
MECHANISMS = list(Mechanism)
METHODS = ["bkernn", "bkrr", "relunn"]

LEGENDS = {
    "kernel": {i: k.value for i, k in enumerate(KERNELS)},
    "penalty": {i: p.value for i, p in enumerate(PENALTIES)},
    "mechanism": {i: m.value for i, m in enumerate(MECHANISMS)},
    "method": dict(enumerate(METHODS)),
    "sweep_exp2": {0: "m", 1: "lambda"},
    "sweep_exp5": {0: "n", 1: "d"},
    "feature_score": {int(UNDEFINED): "undefined (no true basis or no features)"},
}

DEFAULTS = {
    "exp1": {
        "n_train": 214, "n_test": 1024, "d": 45, "k": 5, "noise_std": 0.5,
        "m": 100, "gamma0": 500.0, "cv_iter": 20, "n_iter": 200, "folds": 5,
        "lambda_factors": [0.05, 0.1, 0.5, 1.0, 1.5], "n_seeds": 5,
        "kernels": ["brownian", "exponential", "gaussian"], "penalty": "basic",
    },
    "exp2": {
        "n_train": 412, "n_test": 1024, "d": 20, "k": 5, "noise_std": 0.1,
        "gamma0": 500.0, "n_iter": 50, "penalty": "basic", "n_seeds": 1,
        "m_grid": [1, 3, 5, 7, 10, 15, 20, 30, 40, 50], "m_lambda": 0.02,
        "lambda_grid": [0.0005, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.3, 0.5], "lambda_m": 10,
    },
    "exp3": {
        "n_train": 214, "n_test": 1024, "d": 20, "k": 5, "noise_std": 0.5,
        "m": 20, "gamma0": 500.0, "n_iter": 25, "s": 1.0, "n_seeds": 20,
        "mechanisms": ["exp3_none", "exp3_variables", "exp3_features"],
        "penalties": [p.value for p in PENALTIES],
    },
    "exp4": {
        "n_train": 128, "n_test": 1024, "noise_std": 0.2, "gamma0": 500.0, "n_iter": 20,
        "penalty": "basic", "lambda_grid": [0.005, 0.01, 0.02, 0.05], "folds": 5,
        "bkernn_m": [1, 5], "relu_widths": [1, 5, 32], "relu_steps": 400000,
        "relu_lr": 0.005, "relu_batch": 16, "n_seeds": 1,
        "mechanisms": ["exp4_sine", "exp4_square", "exp4_triangle"],
    },
    "exp5": {
        "k": 3, "n_test": 201, "m": 50, "gamma0": 500.0, "n_iter": 20, "penalty": "feature",
        "relu_width": 50, "relu_lr": 0.05, "relu_batch": 16, "relu_steps": 1500,
        "n_grid": [50, 100, 200, 500], "n_grid_d": 15,
        "d_grid": [5, 10, 15, 20, 30, 40, 50], "d_grid_n": 212, "n_seeds": 10,
    },
}
EXPERIMENTS = tuple(DEFAULTS)

# keys shrunk by --scale; dimensions never drop below k
_SCALED_SIZES = ("n_train", "n_test", "d", "n_grid_d", "d_grid_n")
_SCALED_LISTS = ("n_grid", "d_grid")
_SCALED_STEPS = ("relu_steps",)


def default_jobs() -> int:
    env = os.environ.get("BKERNN_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def resolve_params(name: str, scale: float = 1.0, n_seeds=None, overrides=None) -> dict:
    """Default parameters of an experiment, shrunk by ``scale`` and overridden."""
    if name not in DEFAULTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if not 0 < scale <= 1:
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    p = json.loads(json.dumps(DEFAULTS[name]))
    kmin = p.get("k", 1)
    # sizes stay >= 20 so 5-fold CV and 16-point ReLU batches remain valid
    floor = {"d": kmin, "n_grid_d": kmin}
    if scale != 1:
        for key in _SCALED_SIZES:
            if key in p:
                p[key] = max(floor.get(key, 20), int(round(p[key] * scale)))
        for key in _SCALED_LISTS:
            if key in p:
                lo = kmin if key == "d_grid" else 20
                p[key] = sorted({max(lo, int(round(v * scale))) for v in p[key]})
        for key in _SCALED_STEPS:
            if key in p:
                p[key] = max(1, int(round(p[key] * scale)))
    if n_seeds is not None:
        p["n_seeds"] = int(n_seeds)
    if overrides:
        unknown = set(overrides) - set(p)
        if unknown:
            raise KeyError(f"unknown parameters for {name}: {sorted(unknown)}")
        p.update(overrides)
    return p


@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)


@dataclass(frozen=True)
class RunSpec:
    name: str
    seed: int = 0
    scale: float = 1.0
    n_seeds: int | None = None
    overrides: dict | None = None

    def params(self) -> dict:
        return resolve_params(self.name, self.scale, self.n_seeds, self.overrides)


def _max_increase(trace) -> float:
    t = np.asarray(trace, dtype=float)
    return float(np.max(np.diff(t))) if t.size > 1 else 0.0


def _spec(p, mech, seed, n=None, d=None, **kw) -> SyntheticSpec:
    return SyntheticSpec(
        n_train=p["n_train"] if n is None else n,
        n_test=p["n_test"],
        d=p.get("d", 1) if d is None else d,
        k=kw.get("k", p.get("k", 1)),
        noise_std=kw.get("noise_std", p.get("noise_std", 0.0)),
        mechanism=mech,
        seed=seed,
    )


# --- tasks: top-level functions so they pickle into worker processes ---


def _exp1_task(p, seed, kernel):
    tr, te, _ = generate(_spec(p, Mechanism.EXP1_ABS_SUM, seed))
    base = default_lambda(tr.X)
    cfg = TrainConfig(
        m=p["m"], lam=base, gamma0=p["gamma0"], n_iter=p["cv_iter"],
        penalty=PenaltyKind.parse(p["penalty"]), kernel=kernel, seed=seed,
    )
    lam, _ = cross_validate(tr.X, tr.y, cfg, [f * base for f in p["lambda_factors"]], p["folds"], seed)
    trace = []

    def record(it, W, sol):
        state = ModelState(W, sol.alpha, sol.c, tr.X, cfg.kernel)
        trace.append((it, mse(tr.y, predict(state, tr.X)), mse(te.y, predict(state, te.X))))

    state, report = fit(tr.X, tr.y, cfg.replace(lam=lam, n_iter=p["n_iter"]), callback=record)
    pred = predict(state, te.X)
    k = KERNELS.index(ScalarKernelKind(kernel))
    summary = [seed, k, lam, trace[-1][1], mse(te.y, pred), r2_score(te.y, pred),
               _max_increase(report.objective_trace)]
    return {"summary": [summary], "trace": [(seed, k, *t) for t in trace]}


def _exp2_task(p, seed, sweep, value):
    tr, te, _ = generate(_spec(p, Mechanism.EXP2_ABS_COORDS, seed))
    m, lam = (value, p["m_lambda"]) if sweep == 0 else (p["lambda_m"], value)
    cfg = TrainConfig(m=int(m), lam=float(lam), gamma0=p["gamma0"], n_iter=p["n_iter"],
                      penalty=PenaltyKind.parse(p["penalty"]), seed=seed)
    state, report = fit(tr.X, tr.y, cfg)
    pred = predict(state, te.X)
    row = [sweep, int(m), float(lam), seed, mse(tr.y, predict(state, tr.X)), mse(te.y, pred),
           r2_score(te.y, pred), _max_increase(report.objective_trace)]
    return {"results": [row]}


def _exp3_task(p, seed, mechanism):
    tr, te, P = generate(_spec(p, mechanism, seed))
    lam = default_lambda(tr.X)
    rows = []
    for pen in p["penalties"]:
        kind = PenaltyKind.parse(pen, p["s"])
        cfg = TrainConfig(m=p["m"], lam=lam, gamma0=p["gamma0"], n_iter=p["n_iter"], penalty=kind, seed=seed)
        state, report = fit(tr.X, tr.y, cfg)
        pred = predict(state, te.X)
        fs = UNDEFINED if P is None else feature_score(P, extract_features(state.W, P.k, kind))
        rows.append([MECHANISMS.index(Mechanism(mechanism)), PENALTIES.index(kind.tag), seed,
                     mse(te.y, pred), r2_score(te.y, pred), fs, _max_increase(report.objective_trace)])
    return {"results": rows}


def _exp4_task(p, seed, mechanism):
    tr, te, _ = generate(_spec(p, mechanism, seed, d=1, k=1))
    mech = MECHANISMS.index(Mechanism(mechanism))
    results, curves = [], []
    for m in p["bkernn_m"]:
        cfg = TrainConfig(m=m, lam=p["lambda_grid"][0], gamma0=p["gamma0"], n_iter=p["n_iter"],
                          penalty=PenaltyKind.parse(p["penalty"]), seed=seed)
        lam, _ = cross_validate(tr.X, tr.y, cfg, p["lambda_grid"], p["folds"], seed)
        state, report = fit(tr.X, tr.y, cfg.replace(lam=lam))
        pred = predict(state, te.X)
        results.append([mech, 0, m, seed, lam, mse(tr.y, predict(state, tr.X)), mse(te.y, pred),
                        r2_score(te.y, pred), _max_increase(report.objective_trace)])
        curves += [[mech, 0, m, seed, x, y] for x, y in zip(te.X[:, 0], pred)]
    for width in p["relu_widths"]:
        st = relunn_fit(tr.X, tr.y, relu_init(1, width, seed, p["relu_lr"], p["relu_batch"], p["relu_steps"]), seed)
        pred = relu_forward(st, te.X)
        results.append([mech, 2, width, seed, 0.0, mse(tr.y, relu_forward(st, tr.X)), mse(te.y, pred),
                        r2_score(te.y, pred), 0.0])
        curves += [[mech, 2, width, seed, x, y] for x, y in zip(te.X[:, 0], pred)]
    return {"results": results, "curves": curves}


def _exp5_task(p, seed, sweep, n, d):
    spec = SyntheticSpec(n, p["n_test"], d, p["k"], 0.0, Mechanism.EXP5_ABS_SIN, seed)
    tr, te, P = generate(spec)
    lam = default_lambda(tr.X)
    kind = PenaltyKind.parse(p["penalty"])
    cfg = TrainConfig(m=p["m"], lam=lam, gamma0=p["gamma0"], n_iter=p["n_iter"], penalty=kind, seed=seed)
    state, report = fit(tr.X, tr.y, cfg)
    pred = predict(state, te.X)
    rows = [[sweep, n, d, 0, seed, mse(te.y, pred), r2_score(te.y, pred),
             feature_score(P, extract_features(state.W, p["k"], kind)), _max_increase(report.objective_trace)]]
    pred = bkrr_fit_predict(tr.X, tr.y, te.X, lam)
    rows.append([sweep, n, d, 1, seed, mse(te.y, pred), r2_score(te.y, pred), UNDEFINED, 0.0])
    st = relunn_fit(tr.X, tr.y, relu_init(d, p["relu_width"], seed, p["relu_lr"], p["relu_batch"], p["relu_steps"]), seed)
    pred = relu_forward(st, te.X)
    fs = feature_score(P, extract_features(st.hidden_weights.T, p["k"], PenaltyTag.FEATURE))
    rows.append([sweep, n, d, 2, seed, mse(te.y, pred), r2_score(te.y, pred), fs, 0.0])
    return {"results": rows}


# --- task lists and table layouts ---

_HEADERS = {
    "exp1": {
        "summary": ["seed", "kernel", "lambda", "train_mse", "test_mse", "test_r2", "max_objective_increase"],
    },
    "exp2": {
        "results": ["sweep", "m", "lambda", "seed", "train_mse", "test_mse", "test_r2", "max_objective_increase"],
    },
    "exp3": {
        "results": ["mechanism", "penalty", "seed", "test_mse", "test_r2", "feature_score", "max_objective_increase"],
    },
    "exp4": {
        "results": ["mechanism", "method", "width", "seed", "lambda", "train_mse", "test_mse", "test_r2",
                    "max_objective_increase"],
        "curves": ["mechanism", "method", "width", "seed", "x", "prediction"],
    },
    "exp5": {
        "results": ["sweep", "n", "d", "method", "seed", "test_mse", "test_r2", "feature_score",
                    "max_objective_increase"],
    },
}


def _tasks(name: str, p: dict, seed: int) -> list:
    seeds = [seed + i for i in range(p["n_seeds"])]
    if name == "exp1":
        return [(_exp1_task, (p, s, k)) for s in seeds for k in p["kernels"]]
    if name == "exp2":
        return [(_exp2_task, (p, s, sw, v)) for s in seeds
                for sw, grid in ((0, p["m_grid"]), (1, p["lambda_grid"])) for v in grid]
    if name == "exp3":
        return [(_exp3_task, (p, s, mech)) for s in seeds for mech in p["mechanisms"]]
    if name == "exp4":
        return [(_exp4_task, (p, s, mech)) for s in seeds for mech in p["mechanisms"]]
    settings = [(0, n, p["n_grid_d"]) for n in p["n_grid"]] + [(1, p["d_grid_n"], d) for d in p["d_grid"]]
    return [(_exp5_task, (p, s, *st)) for st in settings for s in seeds]


def _call(task):
    fn, args = task
    return fn(*args)


def _exp1_trace_table(rows, kernels) -> Table:
    """Pivot (seed, kernel, iteration, train, test) rows into one column pair per kernel."""
    codes = [KERNELS.index(ScalarKernelKind(k)) for k in kernels]
    header = ["seed", "iteration"]
    for c in codes:
        name = KERNELS[c].value
        header += [f"train_mse_{name}", f"test_mse_{name}"]
    cells = {(s, it, k): (a, b) for s, k, it, a, b in rows}
    keys = sorted({(s, it) for s, _, it, _, _ in rows})
    out = Table(header)
    for s, it in keys:
        row = [s, it]
        for c in codes:
            row += list(cells[(s, it, c)])
        out.rows.append(row)
    return out


def run_experiment(name: str, params: dict, seed: int = 0, jobs: int = 1,
                   progress: Callable[[str], None] | None = None) -> dict:
    """Run every task of an experiment and return ``{table_name: Table}`` with sorted rows."""
    if name not in DEFAULTS:
        raise KeyError(f"unknown experiment {name!r}")
    tasks = _tasks(name, params, seed)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            outputs = list(pool.map(_call, tasks))
    else:
        outputs = []
        for i, task in enumerate(tasks):
            outputs.append(_call(task))
            if progress is not None:
                progress(f"{name}: task {i + 1}/{len(tasks)} done")
    merged = {}
    for out in outputs:
        for key, rows in out.items():
            merged.setdefault(key, []).extend(rows)
    tables = {}
    for key, rows in merged.items():
        rows = sorted(rows, key=lambda r: tuple(r))
        if name == "exp1" and key == "trace":
            tables[key] = _exp1_trace_table(rows, params["kernels"])
        else:
            tables[key] = Table(_HEADERS[name][key], rows)
    return tables


def write_run(spec: RunSpec, out_dir, jobs: int = 1, argv=None, progress=None) -> dict:
    """Run ``spec`` and write its CSVs plus ``manifest.txt`` into ``out_dir``.

    Returns the mapping of table name to written path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = spec.params()
    start = time.perf_counter()
    tables = run_experiment(spec.name, params, spec.seed, jobs, progress)
    elapsed = time.perf_counter() - start
    paths = {}
    for key in sorted(tables):
        path = out_dir / f"{spec.name}_{key}.csv"
        write_rows(path, tables[key].header, tables[key].rows)
        paths[key] = path
    lines = [
        f"manifest_version={MANIFEST_VERSION}",
        f"experiment={spec.name}",
        f"command={json.dumps(list(argv) if argv is not None else [])}",
        f"seed={spec.seed}",
        f"seeds={json.dumps([spec.seed + i for i in range(params['n_seeds'])])}",
        f"scale={spec.scale!r}",
        f"n_seeds={json.dumps(spec.n_seeds)}",
        f"overrides={json.dumps(spec.overrides or {}, sort_keys=True)}",
        f"prng={PRNG_NAME}",
        f"jobs={jobs}",
    ]
    lines += [f"param.{k}={json.dumps(v)}" for k, v in sorted(params.items())]
    lines += [f"legend.{k}={json.dumps(v)}" for k, v in sorted(LEGENDS.items())]
    lines += [f"artifact.{k}={paths[k].name}" for k in sorted(paths)]
    lines.append(f"wall_clock_seconds={elapsed:.3f}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


def read_manifest(path) -> dict:
    """Parse a manifest into a ``key -> raw string`` dict."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: line {lineno} is not key=value")
        out[key] = value
    version = out.get("manifest_version")
    if version != str(MANIFEST_VERSION):
        raise ValueError(f"{path}: unsupported manifest version {version!r}")
    return out


def spec_from_manifest(path) -> RunSpec:
    doc = read_manifest(path)
    return RunSpec(
        name=doc["experiment"],
        seed=int(doc["seed"]),
        scale=float(doc["scale"]),
        n_seeds=json.loads(doc["n_seeds"]),
        overrides=json.loads(doc["overrides"]) or None,
    )
