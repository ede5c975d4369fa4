import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bkernn.estimators import predict
from bkernn.kernels import averaged_kernel_matrix
from bkernn.metrics import r2_score
from bkernn.penalties import PenaltyKind, penalty_value
from bkernn.ridge import solve_inner
from bkernn.trainer import (
    NumericalError,
    TrainConfig,
    backtracking_step,
    fit,
    grad_G,
    init_particles,
    reduced_objective,
)
from conftest import separated_particles
from oracles import half_sum_gradient, fd_gradient, pair_gradient

seeds = st.integers(0, 2**32 - 1)


def instance(seed, n=5, d=3, m=2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal(n)
    return X, Y, separated_particles(X, m, rng)


class TestGradient:
    def test_zero_z(self, rng):
        X, W = rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
        assert np.array_equal(grad_G(X, W, np.zeros(5), 0.1), np.zeros((3, 2)))

    def test_doubling_m_halves_columns(self, rng):
        X, W, z = rng.standard_normal((6, 3)), rng.standard_normal((3, 2)), rng.standard_normal(6)
        g1 = grad_G(X, W, z, 0.1)
        g2 = grad_G(X, np.hstack([W, W]), z, 0.1)
        assert np.allclose(g2[:, :2], g1 / 2)

    @pytest.mark.parametrize("seed", range(5))
    def test_pair_sum_and_half_sum_forms(self, seed):
        rng = np.random.default_rng(seed)
        X, W, z = rng.standard_normal((7, 3)), rng.standard_normal((3, 4)), rng.standard_normal(7)
        g = grad_G(X, W, z, 0.3)
        assert np.allclose(g, pair_gradient(X, W, z, 0.3), atol=1e-13)
        assert np.allclose(g, half_sum_gradient(X, W, z, 0.3), atol=1e-13)

    def test_ties_use_zero_sign(self):
        # duplicated points project to the same value: sign(0) = 0 must cancel
        X = np.array([[1.0, 0.0], [1.0, 0.0], [-0.5, 2.0]])
        W = np.array([[1.0], [0.0]])
        z = np.array([0.3, -0.1, 0.7])
        assert np.allclose(grad_G(X, W, z, 0.2), pair_gradient(X, W, z, 0.2), atol=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, seed):
        X, Y, W = instance(seed)
        lam = 0.05
        _, sol = reduced_objective(X, Y, W, lam)
        g = grad_G(X, W, sol.alpha, lam)
        assert np.linalg.norm(g - fd_gradient(X, Y, W, lam)) <= 1e-4 * np.linalg.norm(g)

    @pytest.mark.parametrize("kind", ["exponential", "gaussian"])
    def test_finite_differences_smooth_kernels(self, kind):
        rng = np.random.default_rng(3)
        X, Y, W = rng.standard_normal((8, 3)), rng.standard_normal(8), rng.standard_normal((3, 2))
        _, sol = reduced_objective(X, Y, W, 0.05, kind)
        g = grad_G(X, W, sol.alpha, 0.05, kind)
        assert np.linalg.norm(g - fd_gradient(X, Y, W, 0.05, kind)) <= 1e-6 * np.linalg.norm(g)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            grad_G(np.zeros((4, 2)), np.zeros((3, 1)), np.zeros(4), 0.1)


class TestBacktracking:
    def test_fixed_point(self):
        # constant Y gives z = 0, so grad = 0; W = 0 is a fixed point of every prox
        X = np.random.default_rng(0).standard_normal((6, 2))
        W = np.zeros((2, 3))
        cfg = TrainConfig(m=3, lam=0.1)
        W_next, _, halvings = backtracking_step(X, np.ones(6), W, 500.0, cfg)
        assert np.array_equal(W_next, W)
        assert halvings == 0

    def test_unpenalised_sufficient_decrease(self):
        X, Y, W = instance(11, n=12, d=3, m=3)
        cfg = TrainConfig(m=3, lam=0.05, penalty=None)
        W_next, gamma, _ = backtracking_step(X, Y, W, 1.0, cfg)
        g0, sol = reduced_objective(X, Y, W, cfg.lam)
        grad = grad_G(X, W, sol.alpha, cfg.lam)
        g1, _ = reduced_objective(X, Y, W_next, cfg.lam)
        assert np.allclose(W_next, W - gamma * grad)
        assert g1 <= g0 - gamma / 2 * np.sum(grad**2) + 1e-15

    def test_huge_threshold_zeroes(self):
        X, Y, W = instance(4, n=10)
        cfg = TrainConfig(m=2, lam=1e6, gamma0=500.0)
        W_next, _, _ = backtracking_step(X, Y, W, 500.0, cfg)
        assert np.array_equal(W_next, np.zeros_like(W))

    def test_step_grows_by_1_5(self):
        X, Y, W = instance(5, n=10)
        cfg = TrainConfig(m=2, lam=0.05, penalty=None)
        _, gamma, halvings = backtracking_step(X, Y, W, 1e-6, cfg)
        assert gamma == pytest.approx(1.5e-6 / 2**halvings)


class TestFit:
    def test_constant_response(self, rng):
        X = rng.standard_normal((10, 3))
        state, _ = fit(X, np.full(10, 2.5), TrainConfig(m=4, lam=0.1, n_iter=3))
        assert np.allclose(state.alpha, 0.0)
        assert state.c == pytest.approx(2.5)

    def test_one_dimensional_monotone(self):
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(-1, 1, 80))[:, None]
        f = lambda t: t[:, 0] ** 3 + t[:, 0]
        cfg = TrainConfig(m=1, lam=1e-4, n_iter=10, penalty=None)
        state, _ = fit(x, f(x), cfg)
        x_test = rng.uniform(-0.95, 0.95, (200, 1))
        assert r2_score(f(x_test), predict(state, x_test)) > 0.95

    def test_deterministic(self, rng):
        X, Y = rng.standard_normal((20, 3)), rng.standard_normal(20)
        cfg = TrainConfig(m=5, lam=0.05, n_iter=5, seed=3)
        a, ra = fit(X, Y, cfg)
        b, rb = fit(X, Y, cfg)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.alpha, b.alpha) and a.c == b.c
        assert ra.objective_trace == rb.objective_trace

    def test_initial_particles(self):
        W = init_particles(400, 50, 0)
        assert W.shape == (400, 50)
        assert W.var() == pytest.approx(1 / 400, rel=0.05)

    def test_callback_and_report_lengths(self, rng):
        X, Y = rng.standard_normal((15, 2)), rng.standard_normal(15)
        seen = []
        _, report = fit(X, Y, TrainConfig(m=3, lam=0.05, n_iter=4), callback=lambda k, W, s: seen.append(k))
        assert seen == [0, 1, 2, 3, 4]
        assert len(report.objective_trace) == 5
        assert len(report.step_trace) == len(report.backtrack_counts) == 4

    def test_final_state_consistent(self, rng):
        X, Y = rng.standard_normal((15, 2)), rng.standard_normal(15)
        cfg = TrainConfig(m=3, lam=0.05, n_iter=4)
        state, _ = fit(X, Y, cfg)
        sol = solve_inner(averaged_kernel_matrix(X, state.W), Y, cfg.lam)
        assert np.allclose(sol.alpha, state.alpha) and sol.c == pytest.approx(state.c)

    @pytest.mark.parametrize("bad", [dict(m=0), dict(lam=0.0), dict(gamma0=-1.0), dict(n_iter=0), dict(seed=-1)])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_rejects_bad_data(self, rng):
        cfg = TrainConfig(m=2, lam=0.1, n_iter=1)
        with pytest.raises(ValueError):
            fit(np.ones((1, 2)), np.ones(1), cfg)
        with pytest.raises(ValueError):
            fit(np.array([[np.nan, 1.0], [0.0, 1.0]]), np.ones(2), cfg)
        with pytest.raises(ValueError):
            fit(rng.standard_normal((4, 2)), np.ones(4), cfg, W0=np.ones((3, 2)))

    def test_config_round_trip(self):
        cfg = TrainConfig(m=7, lam=0.3, penalty=PenaltyKind("concave_feature", 2.0), kernel="gaussian", seed=4)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        assert TrainConfig.from_dict(TrainConfig(penalty=None).to_dict()).penalty is None

    def test_numerical_error_is_arithmetic(self):
        assert issubclass(NumericalError, ArithmeticError)


@settings(max_examples=15)
@given(seeds, st.sampled_from(["basic", "variable", "feature", "concave_variable", "concave_feature"]))
def test_full_objective_descent(seed, penalty):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (25, 4))
    Y = np.abs(X[:, 0]) + 0.1 * rng.standard_normal(25)
    cfg = TrainConfig(m=5, lam=0.02, n_iter=8, penalty=PenaltyKind.parse(penalty, 1.0), seed=seed % 1000)
    _, report = fit(X, Y, cfg)
    assert np.all(np.diff(report.objective_trace) <= 1e-10)


@given(seeds, st.floats(0.1, 10.0))
def test_homogeneity_of_G(seed, kappa):
    rng = np.random.default_rng(seed)
    X, Y, W = rng.standard_normal((8, 3)), rng.standard_normal(8), rng.standard_normal((3, 2))
    K = averaged_kernel_matrix(X, W)
    g_scaled, _ = reduced_objective(X, Y, kappa * W, 0.1)
    assert g_scaled == pytest.approx(solve_inner(kappa * K, Y, 0.1).g_value, rel=1e-10)


def test_descent_matches_penalty_bookkeeping(rng):
    X, Y = rng.uniform(-1, 1, (20, 3)), rng.standard_normal(20)
    cfg = TrainConfig(m=4, lam=0.05, n_iter=3, penalty=PenaltyKind("feature"))
    states = []
    _, report = fit(X, Y, cfg, callback=lambda k, W, sol: states.append((W.copy(), sol.g_value)))
    for (W, g), obj in zip(states, report.objective_trace):
        assert obj == pytest.approx(g + cfg.lam * penalty_value(cfg.penalty, W))
