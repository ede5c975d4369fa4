import json

import numpy as np
import pytest

from bkernn.datagen import load_csv
from bkernn.experiments import (
    DEFAULTS,
    RunSpec,
    default_jobs,
    read_manifest,
    resolve_params,
    spec_from_manifest,
    write_run,
)

SMALL_EXP1 = {"n_iter": 4, "cv_iter": 2, "m": 5}


@pytest.fixture(scope="module")
def exp3_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp3")
    paths = write_run(RunSpec("exp3", seed=0, scale=0.25, n_seeds=2), out, argv=["experiment", "exp3"])
    return out, paths


def test_exp3_row_count(exp3_run):
    out, paths = exp3_run
    ds = load_csv(paths["results"], None)
    assert ds.X.shape[0] == 5 * 3 * 2
    header = paths["results"].read_text().splitlines()[0].split(",")
    assert header == ["mechanism", "penalty", "seed", "test_mse", "test_r2", "feature_score", "max_objective_increase"]


def test_exp3_rows_sorted(exp3_run):
    _, paths = exp3_run
    X = load_csv(paths["results"], None).X
    keys = [tuple(r[:3]) for r in X]
    assert keys == sorted(keys)


def test_manifest_contents(exp3_run):
    out, _ = exp3_run
    doc = read_manifest(out / "manifest.txt")
    assert doc["experiment"] == "exp3"
    assert json.loads(doc["seeds"]) == [0, 1]
    assert json.loads(doc["param.n_train"]) == round(214 * 0.25)
    assert doc["artifact.results"] == "exp3_results.csv"
    assert "PCG64" in doc["prng"]
    assert float(doc["wall_clock_seconds"]) >= 0


def test_rerun_identical_bytes(exp3_run, tmp_path):
    out, paths = exp3_run
    again = write_run(RunSpec("exp3", seed=0, scale=0.25, n_seeds=2), tmp_path)
    assert again["results"].read_bytes() == paths["results"].read_bytes()


def test_rerun_from_manifest(exp3_run, tmp_path):
    out, paths = exp3_run
    spec = spec_from_manifest(out / "manifest.txt")
    again = write_run(spec, tmp_path, jobs=2)
    assert again["results"].read_bytes() == paths["results"].read_bytes()


def test_exp1_trace_schema(tmp_path):
    paths = write_run(RunSpec("exp1", scale=0.1, n_seeds=1, overrides=SMALL_EXP1), tmp_path)
    header = paths["trace"].read_text().splitlines()[0].split(",")
    expected = ["seed", "iteration"]
    for k in ("brownian", "exponential", "gaussian"):
        expected += [f"train_mse_{k}", f"test_mse_{k}"]
    assert header == expected
    trace = load_csv(paths["trace"], None).X
    assert trace.shape[0] == SMALL_EXP1["n_iter"] + 1
    summary = load_csv(paths["summary"], None)
    assert summary.X.shape[0] == 3


@pytest.mark.parametrize("name", ["exp2", "exp4", "exp5"])
def test_other_experiments_smoke(name, tmp_path):
    overrides = {
        "exp2": {"m_grid": [1, 4], "lambda_grid": [0.01, 0.1], "n_iter": 3},
        "exp4": {"n_iter": 3, "lambda_grid": [0.01, 0.05], "relu_widths": [2], "bkernn_m": [2]},
        "exp5": {"n_iter": 3, "n_grid": [20, 40], "d_grid": [3, 6], "relu_steps": 20},
    }[name]
    paths = write_run(RunSpec(name, scale=0.1, n_seeds=1, overrides=overrides), tmp_path)
    for path in paths.values():
        ds = load_csv(path, None)
        assert ds.X.shape[0] > 0 and np.all(np.isfinite(ds.X))
    results = load_csv(paths["results"], None)
    col = results.feature_names.index("max_objective_increase")
    assert np.all(results.X[:, col] <= 1e-10)


def test_resolve_params():
    p = resolve_params("exp5", 0.1)
    assert p["n_grid"] == [20, 50]
    assert min(p["d_grid"]) >= 3
    assert resolve_params("exp1")["gamma0"] == 500
    with pytest.raises(KeyError):
        resolve_params("exp1", overrides={"bogus": 1})
    with pytest.raises(KeyError):
        resolve_params("exp7")
    with pytest.raises(ValueError):
        resolve_params("exp1", scale=1.5)
    assert DEFAULTS["exp1"]["n_train"] == 214


def test_default_jobs(monkeypatch):
    monkeypatch.setenv("BKERNN_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.delenv("BKERNN_JOBS")
    assert default_jobs() >= 1
