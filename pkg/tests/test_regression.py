import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wsmpc.errors import AllEmptyWarning, ConfigError, EmptyReducedLibrary, TooFewSamples
from wsmpc.regression import (LAMBDA_GRID, EnsembleConfig, RegressionProblem, ensemble_fit,
                              fd_derivative, mstls, stls)
from wsmpc.sysid import build_problem, fit_sparse


# ---------------------------------------------------------------- brute-force oracle

def _oracle_stls(A, b, lam, max_sweeps=10):
    """Thresholded least squares on the raw design, solved with numpy lstsq."""
    J = A.shape[1]
    s = np.maximum(1.0, np.linalg.norm(b) / np.linalg.norm(A, axis=0))
    lo, hi = lam * s * (1 - 1e-12), s / lam * (1 + 1e-12)
    w = np.linalg.lstsq(A, b, rcond=None)[0]
    active = np.ones(J, bool)
    for _ in range(max_sweeps):
        keep = active & (np.abs(w) >= lo) & (np.abs(w) <= hi)
        if np.array_equal(keep, active):
            break
        active = keep
        w = np.zeros(J)
        if active.any():
            w[active] = np.linalg.lstsq(A[:, active], b, rcond=None)[0]
    return w


def _oracle_select(A, b):
    J = A.shape[1]
    w0 = np.linalg.lstsq(A, b, rcond=None)[0]
    denom = np.linalg.norm(A @ w0)
    fits = [_oracle_stls(A, b, lam) for lam in LAMBDA_GRID]
    loss = np.array([np.linalg.norm(A @ (w - w0)) / denom + np.count_nonzero(w) / J
                     for w in fits])
    ok = [i for i in range(len(loss)) if loss[i] <= loss.min() + 1e-9]
    if any(np.any(fits[i]) for i in ok):
        ok = [i for i in ok if np.any(fits[i])]
    best = max(ok)
    return best, fits[best], loss


def _sparse_problem(rng, N, J, noise):
    A = rng.normal(size=(N, J)) * rng.uniform(0.1, 10, size=J)
    w = np.zeros(J)
    k = rng.integers(1, J + 1)
    idx = rng.choice(J, size=k, replace=False)
    w[idx] = rng.uniform(0.5, 5, size=k) * rng.choice([-1, 1], size=k)
    b = A @ w
    b = b + noise * np.std(b) * rng.normal(size=N)
    return A, b


@pytest.mark.parametrize("seed", range(40))
def test_mstls_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, 9))
    A, b = _sparse_problem(rng, int(rng.integers(20, 200)), J, [0.0, 0.01, 0.3, 2.0][seed % 4])
    fit = mstls(RegressionProblem(A, b[:, None]))
    best, w, loss = _oracle_select(A, b)
    assert fit.lambda_star[0] == LAMBDA_GRID[best]
    assert np.array_equal(np.flatnonzero(fit.W[:, 0]), np.flatnonzero(w))
    assert np.allclose(fit.loss_curve[0], loss, rtol=1e-8, atol=1e-10)


# ---------------------------------------------------------------- derivatives

class TestFd:
    def test_linear_exact(self):
        t = np.arange(20) * 0.3
        d, interior = fd_derivative(t, 0.3)
        assert np.allclose(d, 1.0, rtol=0, atol=1e-12)
        assert interior.sum() == 16 and not interior[:2].any() and not interior[-2:].any()

    def test_quartic_exact(self):
        t = np.round(np.arange(21) * 0.1, 12)
        d, _ = fd_derivative(t ** 4, 0.1)
        assert d[10] == pytest.approx(4.0, abs=1e-12)
        # one-sided stencils are exact for quartics too
        assert np.allclose(d, 4 * t ** 3, atol=1e-10)

    def test_sine_accuracy(self):
        t = np.arange(0, 6, 1e-2)
        d, interior = fd_derivative(np.sin(t), 1e-2)
        assert np.max(np.abs(d - np.cos(t))[interior]) < 1e-8

    def test_too_short(self):
        with pytest.raises(TooFewSamples):
            fd_derivative(np.zeros(4), 0.1)


# ---------------------------------------------------------------- stls

class TestStls:
    def test_exact_recovery(self, rng):
        A = rng.normal(size=(50, 5))
        w = stls(A, 2 * A[:, 1], 1e-3)
        assert np.allclose(w, [0, 2, 0, 0, 0], atol=1e-12)
        assert np.count_nonzero(w) == 1

    def test_large_lambda_zeroes(self, rng):
        A = rng.normal(size=(50, 4))
        assert not np.any(stls(A, A @ [1, 2, 3, 4], 1e3))

    def test_zero_lambda_is_least_squares(self, rng):
        A = rng.normal(size=(40, 4))
        b = rng.normal(size=40)
        assert np.allclose(stls(A, b, 0.0), np.linalg.lstsq(A, b, rcond=None)[0], atol=1e-12)

    def test_plain_rule(self, rng):
        A = rng.normal(size=(200, 3))
        b = A @ [0.05, 1.0, -0.2]
        w = stls(A, b, 0.1, rule="plain")
        ref = np.linalg.lstsq(A[:, 1:], b, rcond=None)[0]
        assert w[0] == 0 and np.allclose(w[1:], ref, rtol=1e-12)

    def test_rank_deficient_falls_back(self, rng):
        a = rng.normal(size=(30, 1))
        A = np.hstack([a, a, rng.normal(size=(30, 1))])
        w = stls(A, a[:, 0], 1e-4)
        assert np.all(np.isfinite(w))
        assert np.allclose(A @ w, a[:, 0], atol=1e-6)

    @given(st.integers(0, 10**6), st.sampled_from(LAMBDA_GRID[::7]))
    def test_fixed_point(self, seed, lam):
        rng = np.random.default_rng(seed)
        A, b = _sparse_problem(rng, 60, 6, 0.1)
        w = stls(A, b, lam)
        s = np.flatnonzero(w)
        if s.size == 0:
            return
        w2 = np.zeros_like(w)
        w2[s] = stls(A[:, s], b, lam)
        # thresholds depend on the restricted column set only through ||A_j||, so the fit is stable
        assert np.max(np.abs(w2 - w)) <= 1e-12 * max(1.0, np.max(np.abs(w)))


# ---------------------------------------------------------------- mstls

class TestMstls:
    def test_zero_target(self, rng):
        A = rng.normal(size=(30, 4))
        fit = mstls(RegressionProblem(A, np.zeros((30, 1))))
        assert not np.any(fit.W)
        assert np.all(fit.loss_curve == 0)

    def test_single_column(self, rng):
        A = rng.normal(size=(30, 1))
        fit = mstls(RegressionProblem(A, 3 * A))
        assert fit.W[0, 0] == pytest.approx(3.0, rel=1e-12)
        assert fit.loss_curve.shape == (1, 100)
        assert fit.lambda_star[0] in LAMBDA_GRID
        best, _, _ = _oracle_select(A, 3 * A[:, 0])
        assert fit.lambda_star[0] == LAMBDA_GRID[best]

    def test_grid(self):
        assert LAMBDA_GRID.size == 100
        assert LAMBDA_GRID[0] == pytest.approx(1e-4) and LAMBDA_GRID[-1] == pytest.approx(1.0)
        assert np.allclose(np.diff(np.log10(LAMBDA_GRID)), 4 / 99)

    def test_all_empty_warns(self):
        # b orthogonal to every column: least squares is zero and every lambda removes all terms
        A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [0.0], [1.0]])
        with pytest.warns(AllEmptyWarning):
            fit = mstls(RegressionProblem(A, b))
        assert fit.all_empty[0] and not np.any(fit.W)

    @given(st.integers(0, 10**6))
    def test_loss_curve_properties(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(40, 5))
        b = A @ rng.uniform(1, 3, size=5) + 0.01 * rng.normal(size=40)
        fit = mstls(RegressionProblem(A, b[:, None]))
        assert np.all(fit.loss_curve >= 0)
        assert fit.loss_curve[0, 0] == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 10**6), st.floats(1.0, 1e3))
    def test_scale_invariant_support(self, seed, alpha):
        # invariance holds while every ||b|| / ||A_j|| >= 1, where the max(1, .) floor is idle
        rng = np.random.default_rng(seed)
        A, b = _sparse_problem(rng, 80, 6, 0.2)
        b = b * 1.01 * np.max(np.linalg.norm(A, axis=0)) / np.linalg.norm(b)
        f1 = mstls(RegressionProblem(A, b[:, None]))
        f2 = mstls(RegressionProblem(A, alpha * b[:, None]))
        assert np.array_equal(f1.W != 0, f2.W != 0)
        assert f1.lambda_star[0] == f2.lambda_star[0]

    def test_multiple_targets_independent(self, rng):
        A, b1 = _sparse_problem(rng, 80, 5, 0.05)
        _, b2 = _sparse_problem(rng, 80, 5, 0.05)
        both = mstls(RegressionProblem(A, np.column_stack([b1, b2])))
        one = mstls(RegressionProblem(A, b2[:, None]))
        assert np.array_equal(both.W[:, 1], one.W[:, 0])

    def test_report(self, rng):
        A = rng.normal(size=(30, 2))
        fit = mstls(RegressionProblem(A, A[:, :1] * 2))
        rep = fit.report(["a", "b"])
        assert rep["support"] == [["a"]]
        assert set(rep) == {"lambda_star", "support", "coefficients", "loss_curve", "all_empty"}


# ---------------------------------------------------------------- ensemble

class TestEnsemble:
    def _problem(self, seed=0):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(200, 6))
        W = np.zeros((6, 2))
        W[1, 0], W[4, 0], W[0, 1] = 2.0, -1.5, 0.7
        return RegressionProblem(A, A @ W), W

    def test_noiseless_support(self):
        prob, W = self._problem()
        fit = ensemble_fit(prob, EnsembleConfig(n_library_bags=20, n_data_bags=20), rng=1)
        single = mstls(prob)
        assert np.array_equal(fit.W != 0, W != 0)
        assert np.array_equal(single.W != 0, W != 0)
        assert np.allclose(fit.W, W, atol=1e-10)

    def test_degenerate_config_reproduces_base(self):
        rng = np.random.default_rng(3)
        A, b = _sparse_problem(rng, 100, 6, 0.3)
        prob = RegressionProblem(A, b[:, None])
        cfg = EnsembleConfig(n_library_bags=1, library_sample_frac=1.0,
                             term_inclusion_threshold=0.0, n_data_bags=0,
                             coef_inclusion_threshold=0.0)
        ens = ensemble_fit(prob, cfg, rng=0)
        base = mstls(prob)
        assert np.array_equal(ens.W, base.W)

    def test_seed_determinism(self):
        rng = np.random.default_rng(5)
        A, b = _sparse_problem(rng, 100, 6, 0.5)
        prob = RegressionProblem(A, b[:, None])
        cfg = EnsembleConfig(n_library_bags=10, n_data_bags=10)
        f1, f2 = ensemble_fit(prob, cfg, rng=9), ensemble_fit(prob, cfg, rng=9)
        assert np.array_equal(f1.W, f2.W)
        assert np.array_equal(f1.term_frequency, f2.term_frequency)
        assert np.array_equal(f1.coef_frequency, f2.coef_frequency)

    def test_too_small(self):
        with pytest.raises(TooFewSamples):
            ensemble_fit(RegressionProblem(np.ones((5, 3)), np.ones((5, 1))))

    def test_empty_reduced_library(self):
        prob, _ = self._problem()
        prob = RegressionProblem(prob.A, np.zeros((200, 1)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(EmptyReducedLibrary):
                ensemble_fit(prob, EnsembleConfig(n_library_bags=3, n_data_bags=3), rng=0)

    @pytest.mark.parametrize("kw", [{"library_sample_frac": 0.0}, {"n_library_bags": 0},
                                    {"term_inclusion_threshold": 1.5}, {"aggregation": "max"}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            EnsembleConfig(**kw)


# ---------------------------------------------------------------- method dispatch

class TestSysid:
    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            build_problem("lasso", np.ones((60, 1)), np.ones((60, 1)), 0.1)

    def test_strong_form_drops_boundary_rows(self):
        X = np.linspace(0, 1, 60)[:, None]
        prob = build_problem("sindyc", X, X, 0.1)
        assert prob.A.shape[0] == 56

    def test_weak_form_rows(self):
        X = np.linspace(0, 1, 100)[:, None]
        prob = build_problem("wsindyc", X, X, 0.1)
        assert prob.A.shape[0] == 100 - 2 * 5

    def test_forced_system_recovery(self):
        from wsmpc.dynamics import simulate
        from wsmpc.funclib import build_poly_library
        # x' = -x + u with a two-tone input
        dt = 1e-3
        u = lambda t: np.array([np.sin(3 * t) + 0.5 * np.cos(7 * t)])
        ts = simulate(lambda x, v: -x + v, np.array([1.0]), u, 5.0, dt)
        X, U = ts.states, ts.inputs
        lib = build_poly_library(1, 1, 2)
        want = np.zeros((6, 1))
        want[lib.names.index("x1")] = -1
        want[lib.names.index("u1")] = 1
        for method in ("wsindyc", "sindyc"):
            fit = fit_sparse(method, lib, X, U, dt)
            assert np.array_equal(fit.W != 0, want != 0), method
            assert np.max(np.abs(fit.W - want)) < 1e-4
