import json
import math

import numpy as np
import pytest
from scipy.linalg import block_diag

from tvcomb.errors import ConfigurationError, ConvergenceError, DegenerateGroupError
from tvcomb.panel import ForecastPanel, standardize
from tvcomb.smoother import epanechnikov, local_linear_fit, synthesized_window, uniform
from tvcomb.sparse import (
    PenaltyConfig,
    _gcd,
    bic_score,
    default_bandwidth,
    fit_two_stage,
    lambda1_max,
    local_grams,
    orthogonalize_groups,
    scad_derivative,
    smoothness_measure,
    stage1_lasso,
    stage2_gscad,
)

from conftest import random_panel


def window_blocks(panel, ts, h, kernel):
    """Per-index design blocks built row by row: regressors, weights, response."""
    N, X, y = panel.T, panel.X, panel.y
    out = []
    for t in ts:
        rows, w, r = [], [], []
        for s, ys, fs in synthesized_window(int(t), N, h):
            rows.append(np.kron([1.0, (s - t) / (N * h)], X[fs - 1]))
            w.append(kernel((s - t) / (N * h)) / h / N)
            r.append(y[ys - 1])
        out.append((np.array(rows), np.array(w), np.array(r)))
    return out


def xi_matrix(blocks, i):
    """Dense Xi_i: one column per index, holding regressor i of that index's rows."""
    cols = [b[0][:, i] for b in blocks]
    return block_diag(*[c[:, None] for c in cols])


def sparse_problem(seed, T=40, p=3, h=0.4):
    rng = np.random.default_rng(seed)
    panel, _ = standardize(random_panel(rng, T, p))
    ws = orthogonalize_groups(panel, h, epanechnikov())
    return panel, ws, rng


class TestScad:
    def test_branches(self):
        assert scad_derivative(0.5, 1.0) == 1.0
        assert scad_derivative(2.0, 1.0) == pytest.approx(0.629630, abs=1e-6)
        assert scad_derivative(4.0, 1.0) == 0.0

    def test_vectorized_and_errors(self):
        np.testing.assert_allclose(scad_derivative(np.array([0.0, 1.0, 3.7]), 1.0), [1.0, 1.0, 0.0])
        assert scad_derivative(1.0, 0.0) == 0.0
        with pytest.raises(ValueError):
            scad_derivative(-0.1, 1.0)


class TestSmoothness:
    def test_examples(self):
        assert smoothness_measure(np.full((5, 1), 3.0))[0] == 0.0
        assert smoothness_measure(np.array([[1.0], [-1.0]]))[0] == pytest.approx(math.sqrt(2))

    def test_homogeneity(self, rng):
        B = rng.standard_normal((20, 3))
        np.testing.assert_allclose(smoothness_measure(-2.5 * B), 2.5 * smoothness_measure(B))


class TestStage1:
    def test_unpenalized_matches_local_fit(self, rng):
        panel = random_panel(rng, 60, 2)
        ts = np.arange(11, 61)
        lev, slope = stage1_lasso(panel, 0.3, epanechnikov(), 0.0, ts=ts)
        for i, t in enumerate(ts):
            fit = local_linear_fit(panel, int(t), 0.3, epanechnikov())
            assert np.max(np.abs(lev[i] - fit.beta)) < 1e-6
            assert np.max(np.abs(slope[i] - fit.slope)) < 1e-6

    def test_zero_threshold(self, rng):
        panel = random_panel(rng, 50, 3)
        ts = np.arange(11, 51)
        blocks = window_blocks(panel, ts, 0.3, epanechnikov())
        lmax = max(2 * np.max(np.abs(Q.T @ (w * r))) for Q, w, r in blocks)
        assert lambda1_max(local_grams(panel, 0.3, epanechnikov(), ts)) == pytest.approx(lmax, rel=1e-12)
        lev, slope = stage1_lasso(panel, 0.3, epanechnikov(), lmax, ts=ts)
        assert np.all(lev == 0) and np.all(slope == 0)
        lev, _ = stage1_lasso(panel, 0.3, epanechnikov(), 0.9 * lmax, ts=ts)
        assert np.any(lev != 0)

    def test_convergence_error_reports_t(self, rng):
        panel = random_panel(rng, 40, 3)
        with pytest.raises(ConvergenceError) as info:
            stage1_lasso(panel, 0.3, epanechnikov(), 1e-4, tolerance=1e-300, max_sweeps=1)
        loc = info.value.to_dict()["location"]
        assert loc["t"] == 11 and loc["lambda1"] == 1e-4


class TestGroups:
    def test_group_grams_diagonal(self, rng):
        panel = random_panel(rng, 12, 3)
        ts = np.arange(6, 13)
        k = epanechnikov()
        ws = orthogonalize_groups(panel, 0.5, k, ts)
        blocks = window_blocks(panel, ts, 0.5, k)
        W = np.concatenate([b[1] for b in blocks])
        for i in range(ws.n_groups):
            Xi = xi_matrix(blocks, i)
            gram = Xi.T @ (W[:, None] * Xi)
            off = gram - np.diag(np.diag(gram))
            assert np.max(np.abs(off)) < 1e-12
            np.testing.assert_allclose(np.diag(gram), np.diag(ws.group_gram(i)), rtol=1e-12)
            A = np.diag(1.0 / ws.group_scales[:, i])
            ortho = A @ gram @ A
            assert np.max(np.abs(ortho - np.eye(ts.size))) < 1e-10
            assert np.max(np.abs(ws.group_gram(i, orthogonalized=True) - np.eye(ts.size))) < 1e-10

    def test_uniform_kernel_entry(self, rng):
        panel = random_panel(rng, 80, 2)
        h, t = 0.1, 40
        ws = orthogonalize_groups(panel, h, uniform(), [t])
        rows = synthesized_window(t, 80, h)
        fvals = np.array([panel.F[fs - 1, 1] for _, _, fs in rows])
        # uniform density is 1/2 on [-1, 1]
        expected = 0.5 / h * np.mean(fvals**2) * len(rows) / 80
        assert ws.G[0, 2, 2] == pytest.approx(expected, rel=1e-12)
        assert ws.G[0, 0, 0] == pytest.approx(0.5 / h * len(rows) / 80, rel=1e-12)

    def test_degenerate_group(self, rng):
        F = rng.standard_normal((40, 2))
        F[:20, 1] = 0.0
        panel = ForecastPanel(rng.standard_normal(41), F)
        with pytest.raises(DegenerateGroupError) as info:
            orthogonalize_groups(panel, 0.2, epanechnikov())
        loc = info.value.to_dict()["location"]
        assert loc["group"] == 2 and loc["t"] == 11


class TestStage2:
    def test_zero_penalty_matches_stacked_wls(self, rng):
        panel = random_panel(rng, 12, 3)
        ts = np.arange(6, 13)
        k = epanechnikov()
        ws = orthogonalize_groups(panel, 0.5, k, ts)
        blocks = window_blocks(panel, ts, 0.5, k)
        Q = block_diag(*[b[0] for b in blocks])
        W = np.concatenate([b[1] for b in blocks])
        Y = np.concatenate([b[2] for b in blocks])
        sw = np.sqrt(W)
        oracle = np.linalg.lstsq(Q * sw[:, None], Y * sw, rcond=None)[0].reshape(ts.size, -1)
        cfg = PenaltyConfig(lambda1=0.0, lambda3=0.0, h=0.5, tolerance=1e-10, max_sweeps=10**6)
        res = stage2_gscad(ws, np.zeros_like(ws.c), cfg)
        assert np.max(np.abs(res.gamma - oracle)) < 1e-4

    def test_objective_monotone(self):
        for seed in range(50):
            _, ws, rng = sparse_problem(seed, T=30, p=3)
            start = rng.standard_normal(ws.c.shape)
            cfg = PenaltyConfig(lambda1=0.01, lambda3=float(rng.uniform(0.01, 2.0)), h=0.4)
            res = stage2_gscad(ws, start, cfg, record_trace=True)
            steps = np.diff(res.trace)
            assert res.trace.size > ws.n_groups
            assert np.all(steps <= 1e-12 * np.maximum(1.0, np.abs(res.trace[:-1])))

    def test_thresholded_groups_exactly_zero(self):
        seen_zero = 0
        for seed in range(20):
            _, ws, rng = sparse_problem(seed, T=40, p=4)
            start = rng.standard_normal(ws.c.shape)
            cfg = PenaltyConfig(lambda1=0.01, lambda3=1.0, h=0.4)
            res = stage2_gscad(ws, start, cfg, level_norms=np.full(5, 0.5), smoothness=np.full(5, 0.5))
            gamma = res.gamma
            Gg = np.einsum("njk,nk->nj", ws.G, gamma)
            S = gamma * ws.group_scales + (ws.c - Gg) / ws.group_scales
            for j in range(ws.n_groups):
                if np.linalg.norm(S[:, j]) <= res.tau[j]:
                    assert np.all(gamma[:, j] == 0.0)
                    seen_zero += 1
        assert seen_zero > 0

    def test_single_group_closed_form(self, rng):
        _, ws, _ = sparse_problem(3, T=30, p=1)
        G = np.ascontiguousarray(ws.G[:, :1, :1])
        c = np.ascontiguousarray(ws.c[:, :1])
        sc = np.ascontiguousarray(ws.group_scales[:, :1])
        S = c[:, 0] / sc[:, 0]
        for tau in (0.0, 0.5 * np.linalg.norm(S), 1.5 * np.linalg.norm(S)):
            theta = np.zeros_like(c)
            sweeps, _, _ = _gcd(G, c, sc, np.array([tau]), theta, 1e-12, 100, np.empty(0))
            expected = max(1 - tau / np.linalg.norm(S), 0.0) * S
            assert sweeps <= 2
            np.testing.assert_allclose(theta[:, 0], expected, rtol=1e-12, atol=1e-14)

    def test_convergence_error(self):
        _, ws, rng = sparse_problem(1)
        cfg = PenaltyConfig(lambda1=0.01, lambda3=0.1, h=0.4, tolerance=1e-15, max_sweeps=2)
        with pytest.raises(ConvergenceError):
            stage2_gscad(ws, rng.standard_normal(ws.c.shape), cfg)

    def test_shape_mismatch(self):
        _, ws, _ = sparse_problem(2)
        with pytest.raises(ConfigurationError):
            stage2_gscad(ws, np.zeros((3, 3)), PenaltyConfig(h=0.4))


class TestBic:
    def test_examples(self):
        assert bic_score(1.0, 0, 10, 20) == (0.0, False)
        score, _ = bic_score(1.0, 2, math.e, math.e)
        assert score == pytest.approx(2 / math.e, abs=1e-4)
        assert bic_score(0.0, 1, 5, 10) == (-math.inf, True)

    def test_depends_only_on_inputs(self):
        assert bic_score(0.7, 2, 12, 30) == bic_score(0.7, 2, 12, 30)


def test_penalty_config_ties():
    cfg = PenaltyConfig(lambda1=0.2, lambda3=0.7, h=0.3)
    assert (cfg.lambda2, cfg.lambda4) == (0.2, 0.7)
    for bad in ({"lambda1": -1.0}, {"a": 2.0}, {"tolerance": 0.0}, {"h": 1.0}):
        with pytest.raises(ConfigurationError):
            PenaltyConfig(**bad)


def test_default_bandwidth_rule():
    assert default_bandwidth(100, 12) == pytest.approx((math.log(13) / 100) ** 0.2)


def sparse_panel(seed, T=80, J=4):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, 2 + J))
    tau = np.arange(1, T + 1) / T
    y = np.r_[0.0, 0.2 + (0.8 + 0.2 * tau) * F[:, 0] + 0.6 * F[:, 1] + 0.5 * rng.standard_normal(T)]
    return ForecastPanel(y, F)


class TestFitTwoStage:
    def test_contract(self):
        panel = sparse_panel(0)
        f_new = np.ones(panel.p)
        fit = fit_two_stage(panel, f_new=f_new)
        assert fit.t[0] == 11 and fit.t[-1] == panel.T + 1
        assert np.all(fit.D >= 0)
        for j in range(1, panel.p + 1):
            if j not in fit.active_set:
                assert np.all(fit.stage2[:, j] == 0.0)
                assert np.all(fit.stage2_slope[:, j] == 0.0)
        assert fit.forecast == pytest.approx(fit.stage2[-1, 0] + f_new @ fit.stage2[-1, 1:])
        assert {1, 2} <= set(fit.active_set)
        assert fit.lambda3 in fit.lambda3_grid
        d = json.loads(fit.to_json())
        assert d["lambda2"] == d["lambda1"] and d["lambda4"] == d["lambda3"]
        assert len(fit.to_csv().splitlines()) == fit.t.size + 1

    def test_permutation_equivariance(self):
        panel = sparse_panel(1)
        perm = [3, 0, 5, 1, 4, 2]
        a = fit_two_stage(panel)
        b = fit_two_stage(panel.select(perm))
        mapped = sorted(perm[j - 1] + 1 for j in b.active_set)
        assert mapped == sorted(a.active_set)

    def test_irrelevant_forecasts_dropped(self, rng):
        panel = ForecastPanel(0.1 * rng.standard_normal(61), rng.standard_normal((60, 4)))
        fit = fit_two_stage(panel, lambda3_grid=[1e3])
        assert fit.active_set == ()
        assert np.all(fit.stage2[:, 1:] == 0.0)

    def test_parallel_grid_identical(self):
        panel = sparse_panel(2)
        a = fit_two_stage(panel)
        b = fit_two_stage(panel, n_jobs=3)
        assert a.to_csv() == b.to_csv()
        np.testing.assert_array_equal(a.bic, b.bic)

    def test_empty_grid(self):
        with pytest.raises(ConfigurationError):
            fit_two_stage(sparse_panel(3), lambda3_grid=[])
