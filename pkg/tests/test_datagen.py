import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bkernn.datagen import (
    DataError,
    Dataset,
    Mechanism,
    SyntheticSpec,
    generate,
    load_csv,
    response,
    sample_orthogonal,
    save_csv,
    standardize,
    triangle_wave,
)

seeds = st.integers(0, 2**32 - 1)


class TestOrthogonal:
    def test_square(self):
        Q = sample_orthogonal(6, 6, 0).P
        assert np.linalg.norm(Q.T @ Q - np.eye(6)) <= 1e-10

    @given(seeds, st.integers(1, 8))
    def test_unit_columns(self, seed, k):
        P = sample_orthogonal(8, k, seed).P
        assert np.allclose(np.linalg.norm(P, axis=0), 1.0, atol=1e-12)
        assert np.allclose(P.T @ P, np.eye(k), atol=1e-10)

    def test_haar_first_moment(self):
        # for a Haar column in R^2, E|q_1| = 2/pi
        vals = [abs(sample_orthogonal(2, 1, s).P[0, 0]) for s in range(10_000)]
        assert np.mean(vals) == pytest.approx(2 / np.pi, abs=0.01)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            sample_orthogonal(3, 4, 0)


class TestMechanisms:
    def test_exp5_origin(self):
        P = sample_orthogonal(4, 2, 1).P
        assert response("exp5_abs_sin", np.zeros((1, 4)), 2, P)[0] == 0.0

    def test_exp3_variables_formula(self):
        x = 0.7 * np.eye(5)[:1]
        assert response("exp3_variables", x, 3)[0] == pytest.approx(np.sin(0.7))
        x = np.array([[0.1, -0.4, 0.9, 0.5, 0.2]])
        assert response("exp3_variables", x, 3)[0] == pytest.approx(np.sin([0.1, -0.4, 0.9]).sum())

    def test_exp3_features_with_identity(self, rng):
        X = rng.uniform(-1, 1, (10, 5))
        a = response("exp3_features", X, 2, np.eye(5)[:, :2])
        assert np.allclose(a, response("exp3_variables", X, 2))

    def test_exp1_and_exp2(self, rng):
        X = rng.uniform(-1, 1, (6, 4))
        P = sample_orthogonal(4, 2, 0).P
        assert np.allclose(response("exp1_abs_sum", X, 2, P), 2 * np.pi * np.abs(X @ P @ np.ones(2)))
        assert np.allclose(response("exp2_abs_coords", X, 2), 2 * np.pi * np.abs(X[:, :2]).sum(axis=1))

    def test_one_dimensional(self):
        x = np.array([[-0.75], [-0.25], [0.25], [0.75], [0.0]])
        assert np.allclose(response("exp4_sine", x, 1), np.sin(2 * np.pi * x[:, 0]))
        assert np.array_equal(response("exp4_square", x, 1), [1.0, -1.0, 1.0, -1.0, 0.0])
        assert np.allclose(triangle_wave(x[:, 0]), [1.0, -1.0, 1.0, -1.0, 0.0])

    def test_exp4_needs_d1(self):
        with pytest.raises(ValueError):
            SyntheticSpec(10, 10, 2, 1, 0.1, "exp4_sine")

    def test_grid_test_set(self):
        _, te, basis = generate(SyntheticSpec(10, 5, 1, 1, 0.2, "exp4_triangle", 0))
        assert np.array_equal(te.X[:, 0], np.linspace(-1, 1, 5))
        assert np.allclose(te.y, triangle_wave(te.X[:, 0]))
        assert basis is None

    def test_shapes_and_range(self):
        tr, te, basis = generate(SyntheticSpec(30, 12, 7, 3, 0.5, "exp3_features", 3))
        assert tr.X.shape == (30, 7) and te.X.shape == (12, 7)
        assert np.all(np.abs(tr.X) <= 1)
        assert basis.P.shape == (7, 3)

    def test_axis_basis(self):
        _, _, basis = generate(SyntheticSpec(5, 5, 4, 2, 0.0, "exp2_abs_coords", 0))
        assert np.array_equal(basis.P, np.eye(4)[:, :2])

    @settings(max_examples=10)
    @given(seeds, st.sampled_from([m.value for m in Mechanism if not m.value.startswith("exp4")]))
    def test_deterministic(self, seed, mech):
        spec = SyntheticSpec(20, 10, 4, 2, 0.3, mech, seed)
        a, b = generate(spec), generate(spec)
        assert np.array_equal(a[0].X, b[0].X) and np.array_equal(a[0].y, b[0].y)
        assert np.array_equal(a[1].y, b[1].y)

    def test_noise_std(self):
        sigma = 0.5
        tr, _, basis = generate(SyntheticSpec(100_000, 1, 3, 2, sigma, "exp3_features", 7))
        resid = tr.y - response("exp3_features", tr.X, 2, basis.P)
        assert abs(resid.std() - sigma) <= 0.02 * sigma


class TestCsv:
    def test_small_file(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b,y\n1,2,3\n4,5,6\n")
        ds = load_csv(p, "y")
        assert ds.X.shape == (2, 2) and np.array_equal(ds.y, [3.0, 6.0])
        assert ds.feature_names == ("a", "b")

    def test_target_in_middle(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,y,b\n1,2,3\n4,5,6\n")
        ds = load_csv(p, "y")
        assert np.array_equal(ds.X, [[1.0, 3.0], [4.0, 6.0]])

    def test_no_target(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,2\n4,5\n")
        ds = load_csv(p, None)
        assert ds.X.shape == (2, 2) and ds.y.size == 0

    @pytest.mark.parametrize(
        "content, message",
        [
            ("a,y\n", "no data rows"),
            ("", "empty"),
            ("a,a,y\n1,2,3\n4,5,6\n", "duplicate"),
            ("a,b\n1,2\n3,4\n", "not in header"),
            ("a,y\n1,2\nfoo,3\n", "line 3, column 'a'"),
            ("a,y\n1,2\n3\n", "fields"),
            ("a,y\n1,2\nnan,3\n", "non-finite"),
            ("a,y\n1,2\n", "at least 2"),
        ],
    )
    def test_errors(self, tmp_path, content, message):
        p = tmp_path / "bad.csv"
        p.write_text(content)
        with pytest.raises(DataError, match=message):
            load_csv(p, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "none.csv", "y")

    @given(seeds)
    def test_round_trip(self, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        X, y = rng.standard_normal((4, 3)) * 10.0 ** rng.integers(-8, 8), rng.standard_normal(4)
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "r.csv"
            save_csv(p, X, y)
            ds = load_csv(p, "y")
        assert np.array_equal(ds.X, X) and np.array_equal(ds.y, y)


class TestStandardize:
    def test_already_standard(self, rng):
        X = rng.standard_normal((50, 3))
        X = (X - X.mean(0)) / X.std(0)
        out = standardize(Dataset(X, np.zeros(50)))
        assert np.allclose(out.datasets[0].X, X, atol=1e-10)

    def test_constant_column(self, rng, caplog):
        X = np.column_stack([rng.standard_normal(10), np.full(10, 4.0)])
        with caplog.at_level(logging.WARNING):
            out = standardize(Dataset(X, np.zeros(10)), [Dataset(X[:3], np.zeros(3))])
        assert np.array_equal(out.datasets[0].X[:, 1], np.zeros(10))
        assert list(out.constant) == [False, True]
        assert len(out.datasets) == 2
        assert "constant" in caplog.text

    def test_uses_train_moments(self, rng):
        tr = Dataset(rng.standard_normal((20, 2)) * 3 + 1, np.zeros(20))
        te = Dataset(rng.standard_normal((5, 2)), np.zeros(5))
        out = standardize(tr, [te])
        assert np.allclose(out.datasets[1].X, (te.X - out.means) / out.stds)
