import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrid_uq.errors import InvalidArgument, InvalidCovariance
from regrid_uq.gp import (
    ConditionalLaw,
    CovParams,
    conditional_law,
    conditional_simulate,
    exp_cov,
    fit_mle,
    kriging_operator,
    neg_log_lik,
    psd_factor,
    theta_bounds,
)
from regrid_uq.grid import Grid, make_regular_grid, pairwise_distances


def dense_nll(p, pts, x):
    """Direct multivariate normal oracle: explicit inverse and determinant."""
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    k = p.rho * np.exp(-d / p.theta) + p.jitter * np.eye(len(pts))
    ki = np.linalg.inv(k)
    _, ld = np.linalg.slogdet(k)
    r = np.atleast_2d(x) - p.mu
    n = len(pts)
    return sum(0.5 * ld + 0.5 * ri @ ki @ ri + 0.5 * n * math.log(2 * math.pi) for ri in r)


def test_exp_cov_examples():
    p = CovParams(2.0, 10.0, jitter=0.1)
    assert exp_cov(np.zeros((1, 1)), p)[0, 0] == pytest.approx(2.1)
    assert exp_cov(np.array([[0.0, 10.0], [10.0, 0.0]]), p)[0, 1] == pytest.approx(2.0 * math.exp(-1))
    assert exp_cov(np.array([[1000.0]]), CovParams(2.0, 10.0))[0, 0] < 1e-40 * 2.0


def test_cov_params_validation_and_text():
    for bad in [dict(rho=0, theta=1), dict(rho=1, theta=-1), dict(rho=1, theta=1, jitter=-1)]:
        with pytest.raises(InvalidArgument):
            CovParams(**bad)
    p = CovParams(0.3, 123.456, 4.5, 3e-9)
    assert CovParams.from_text(p.to_text()) == p


def test_nll_single_point():
    p = CovParams(2.0, 5.0, mu=1.0, jitter=0.01)
    g = Grid(np.array([[0.0, 0.0]]))
    x = 3.0
    rp = 2.01
    ref = 0.5 * math.log(2 * math.pi * rp) + (x - 1.0) ** 2 / (2 * rp)
    assert neg_log_lik(p, g, [[x]]) == pytest.approx(ref, rel=1e-12)


def test_nll_duplicated_days_double():
    rng = np.random.default_rng(1)
    g = Grid(rng.uniform(0, 50, (6, 2)))
    p = CovParams(1.3, 17.0, 0.2, 1e-8)
    x = rng.normal(size=(3, 6))
    assert neg_log_lik(p, g, np.vstack([x, x])) == pytest.approx(2 * neg_log_lik(p, g, x), rel=1e-12)


def test_nll_matches_dense_oracle():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 40, (5, 2))
    x = rng.normal(1.0, 1.0, (3, 5))
    p = CovParams(0.8, 12.0, 0.7, 1e-8)
    assert neg_log_lik(p, Grid(pts), x) == pytest.approx(dense_nll(p, pts, x), abs=1e-8)


def _simulate(grid, p, days, seed):
    k = exp_cov(pairwise_distances(grid, grid), p)
    L = np.linalg.cholesky(k + 1e-10 * np.eye(len(k)))
    z = np.random.default_rng(seed).standard_normal((days, len(grid)))
    return p.mu + z @ L.T


def test_fit_mle_matches_2d_grid_search():
    g = make_regular_grid((0, 0), 10, 5, 5)
    x = _simulate(g, CovParams(1.0, 25.0, 2.0), 30, seed=11)
    fit = fit_mle(g, x)
    # exhaustive oracle over (rho, theta) with mu at the fitted GLS value
    rhos = np.exp(np.linspace(np.log(0.3), np.log(3.0), 41))
    thetas = np.exp(np.linspace(np.log(5.0), np.log(120.0), 41))
    best = min((neg_log_lik(CovParams(r, t, fit.mu, 1e-8 * r), g, x), r, t) for r in rhos for t in thetas)
    step_r = np.log(rhos[1] / rhos[0])
    step_t = np.log(thetas[1] / thetas[0])
    assert abs(np.log(fit.rho / best[1])) <= step_r
    assert abs(np.log(fit.theta / best[2])) <= step_t
    assert neg_log_lik(fit, g, x) <= best[0] + 1e-6


def test_fit_mle_white_noise_hits_lower_bound():
    g = make_regular_grid((0, 0), 10, 6, 6)
    x = np.random.default_rng(5).normal(size=(40, 36))
    fit = fit_mle(g, x)
    assert fit.theta <= 0.5 * 10
    lo, hi = theta_bounds(g)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(10 * pairwise_distances(g, g).max())


def test_fit_mle_constant_field_is_degenerate():
    g = make_regular_grid((0, 0), 10, 3, 3)
    fit = fit_mle(g, np.full((4, 9), 2.5))
    assert fit.degenerate and fit.mu == pytest.approx(2.5)


def test_kriging_interpolates_at_native_points():
    g = make_regular_grid((0, 0), 10, 4, 4)
    p = CovParams(1.5, 30.0, 1.0, 1e-12)
    v = np.random.default_rng(2).normal(1.0, 1.0, 16)
    target = Grid(g.points[[0, 5, 15]])
    law = conditional_law(p, g, target, v)
    assert np.allclose(law.mean, v[[0, 5, 15]], rtol=1e-8, atol=1e-8)
    assert np.all(np.diag(law.cov) <= 1e-8 * p.rho)


def test_kriging_far_point_decorrelates():
    g = make_regular_grid((0, 0), 10, 3, 3)
    p = CovParams(2.0, 5.0, 3.0, 1e-10)
    v = np.random.default_rng(4).normal(3.0, 1.0, 9)
    law = conditional_law(p, g, Grid(np.array([[1000.0, 1000.0]])), v)
    assert abs(law.mean[0] - 3.0) <= 1e-6 * math.sqrt(2.0)
    assert law.cov[0, 0] == pytest.approx(2.0, rel=1e-9)


def test_kriging_midpoint_symmetry_matches_conditioning_oracle():
    native = Grid(np.array([[0.0, 0.0], [10.0, 0.0]]))
    target = Grid(np.array([[5.0, 0.0]]))
    p = CovParams(1.0, 8.0, 0.5, 1e-12)
    v = np.array([2.0, -1.0])
    law = conditional_law(p, native, target, v)
    # brute-force normal conditioning on the stacked vector (target, native)
    pts = np.vstack([target.points, native.points])
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    c = np.exp(-d / 8.0) + 1e-12 * np.eye(3)
    m = 0.5 + c[0, 1:] @ np.linalg.inv(c[1:, 1:]) @ (v - 0.5)
    s = c[0, 0] - c[0, 1:] @ np.linalg.inv(c[1:, 1:]) @ c[1:, 0]
    assert law.mean[0] == pytest.approx(m, abs=1e-12)
    assert law.cov[0, 0] == pytest.approx(s, abs=1e-12)
    w = kriging_operator(p, native, target).weights
    assert w[0, 0] == pytest.approx(w[0, 1], rel=1e-12)


def test_zero_covariance_draws_equal_mean():
    law = ConditionalLaw(np.array([1.0, 2.0, 3.0]), np.zeros((3, 3)))
    d = conditional_simulate(law, 5, seed=1)
    assert np.array_equal(d, np.tile(law.mean, (5, 1)))


def test_simulation_deterministic_per_seed():
    law = ConditionalLaw(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert np.array_equal(conditional_simulate(law, 10, 3), conditional_simulate(law, 10, 3))
    assert not np.array_equal(conditional_simulate(law, 10, 3), conditional_simulate(law, 10, 4))


def test_psd_factor_rejects_indefinite():
    with pytest.raises(InvalidCovariance):
        psd_factor(np.array([[1.0, 0.0], [0.0, -1.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0), st.floats(2.0, 60.0))
def test_conditional_cov_is_psd_and_shrinks_variance(seed, rho, theta):
    rng = np.random.default_rng(seed)
    native = Grid(rng.uniform(0, 50, (8, 2)))
    target = Grid(rng.uniform(0, 50, (5, 2)) + 0.37)
    op = kriging_operator(CovParams(rho, theta, 0.0, 1e-8 * rho), native, target)
    w = np.linalg.eigvalsh(op.cov)
    assert w.min() >= -1e-8 * rho
    assert np.all(np.diag(op.cov) <= rho * (1 + 1e-8) + 1e-12)
    assert np.allclose(op.cov, op.cov.T)
