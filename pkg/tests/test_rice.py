from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exgeo.covariance import NondegeneracyError, make_gaussian_cov, make_scaled_model
from exgeo.fieldsim import Grid, simulate
from exgeo.rice import (d2cov_on_flat, det_rank_one, expected_abs_det_hessian,
                        gradient_pair_density_at_zero, gradient_pair_det_identity,
                        kac_rice_first_moment, kac_rice_second_moment_integrand,
                        second_factorial_moment, taylor_remainder_check)
from exgeo.util import rng_from


def test_det_rank_one_examples():
    assert det_rank_one(1.0, 0.0, [1.0, 2.0, 3.0], 3) == 1.0
    assert det_rank_one(2.0, 3.0, [1.0, 0.0], 2) == 10.0
    assert np.linalg.det(np.diag([5.0, 2.0])) == pytest.approx(10.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10 ** 6))
def test_det_rank_one_vs_dense(dim, seed):
    rng = rng_from(seed, "dr1")
    c1, c2 = rng.normal(size=2)
    v = rng.normal(size=dim)
    direct = np.linalg.det(c1 * np.eye(dim) + c2 * np.outer(v, v))
    assert abs(direct - det_rank_one(c1, c2, v, dim)) < 1e-10


def test_d2cov_on_flat_examples(gauss2):
    jet = d2cov_on_flat(gauss2, 1, [1.0])
    assert jet.d2cov[0, 0] == pytest.approx(0.0, abs=1e-15)  # R''(1) = 0
    assert jet.det_identity_value == pytest.approx(1.0)

    lim = d2cov_on_flat(gauss2, 2, [0.0, 0.0])
    assert np.allclose(lim.d2cov, -np.eye(2))
    assert lim.det_identity_value == 0.0


def test_d2cov_matches_fd_hessian(gauss2):
    # restricted Hessian of Cov vs finite differences on the plane
    t = np.array([1.0, 1.0])
    jet = d2cov_on_flat(gauss2, 2, t)
    h = 1e-4
    fd = np.empty((2, 2))
    cov = lambda x: np.exp(-0.5 * (x @ x))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            fd[i, j] = (cov(t + ei + ej) - cov(t + ei - ej)
                        - cov(t - ei + ej) + cov(t - ei - ej)) / (4 * h * h)
    assert np.max(np.abs(fd - jet.d2cov)) < 1e-6


@pytest.mark.parametrize("k", [1, 2, 3])
def test_det_identity_closed_form(k, gauss2):
    for r in np.linspace(0.1, 5.0, 80):
        t = np.r_[r, np.zeros(k - 1)]
        closed = gradient_pair_det_identity(gauss2, k, r)
        direct = d2cov_on_flat(gauss2, k, t).det_identity_value
        assert abs(closed - direct) <= 1e-10 * max(abs(direct), 1e-30)


def test_det_identity_values(gauss2):
    assert gradient_pair_det_identity(gauss2, 1, 1.0) == pytest.approx(1.0)
    assert gradient_pair_det_identity(gauss2, 2, 1.0) == pytest.approx(1 - np.exp(-1))
    # coincident gradients degenerate as r -> 0
    assert gradient_pair_det_identity(gauss2, 2, 1e-4) < 1e-7


def test_taylor_remainder_check(gauss1):
    rep = taylor_remainder_check(gauss1)
    assert rep["passed"]
    assert rep["mu"] == pytest.approx(3.0, abs=1e-14)
    assert rep["slope_r1"] >= 4.9  # next term is r^5
    assert rep["slope_r2"] >= 3.9

    # contaminated mu: cubic term mismatch drops the slope to ~3
    bad_mu = make_gaussian_cov(1)
    r = np.logspace(-3, -1, 25)
    rem = np.abs(bad_mu.radial_derivative(r, 1) + r - (1.1 * 3.0 / 6) * r ** 3)
    slope = np.polyfit(np.log(r), np.log(rem), 1)[0]
    assert slope < 3.9

    broken = make_scaled_model(gauss1, 2.0)  # R''(0) = -2
    rep2 = taylor_remainder_check(broken)
    assert not rep2["passed"]


def test_kac_rice_first_moment_closed_form(gauss1):
    val, se = kac_rice_first_moment(gauss1, 1, 10.0, [0.0])
    assert val == pytest.approx(10 * np.sqrt(3) / np.pi, rel=1e-12)
    assert se == 0.0
    far, _ = kac_rice_first_moment(gauss1, 1, 10.0, [50.0])
    assert far < 1e-100


def test_kac_rice_first_moment_vs_simulation_k1(gauss1):
    grid = Grid.for_window(1, 0.01, 5)
    counts = []
    for rep in range(400):
        s = simulate(gauss1, grid, 40_000 + rep)
        g = s.gradient[0]
        counts.append(np.count_nonzero(np.sign(g[1:]) != np.sign(g[:-1])))
    counts = np.array(counts, float)
    target, _ = kac_rice_first_moment(gauss1, 1, 10.0, [0.0])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - target) < 3 * se


def test_kac_rice_first_moment_vs_simulation_k2(gauss2):
    # critical points of a 2-d field, detected as cells where the gradient
    # field has nonzero winding number, vs the Kac-Rice density
    # |W| E|det H| phi_2(0)
    from exgeo.lkc import critical_cell_degrees
    grid = Grid.for_window(2, 0.05, 2.2)
    counts = []
    inside = np.abs(grid.axis) <= 2.0 - grid.h
    sl = np.ix_(np.nonzero(inside)[0], np.nonzero(inside)[0])
    axis_in = grid.axis[inside]
    W = (axis_in[-1] - axis_in[0]) ** 2
    for rep in range(150):
        s = simulate(gauss2, grid, 60_000 + rep)
        deg = critical_cell_degrees(s.gradient[0][sl], s.gradient[1][sl])
        counts.append(np.sum(np.abs(deg)))
    counts = np.array(counts, float)
    edet, edet_se = expected_abs_det_hessian(gauss2, 2, n_mc=400_000)
    target = W * edet / (2 * np.pi)
    se = np.hypot(counts.std(ddof=1) / np.sqrt(len(counts)),
                  W * edet_se / (2 * np.pi))
    assert abs(counts.mean() - target) < 3 * se


def test_second_moment_decorrelation(gauss1):
    val, se = kac_rice_second_moment_integrand(gauss1, 1, [8.0], [0.0],
                                               n_mc=200_000)
    edet, _ = expected_abs_det_hessian(gauss1, 1)
    product = (edet * (2 * np.pi) ** -0.5) ** 2
    assert abs(val - product) / product < 0.02


def test_second_moment_singularity_and_slopes(gauss1, gauss2):
    with pytest.raises(NondegeneracyError):
        kac_rice_second_moment_integrand(gauss1, 1, [0.0], [0.0])
    for k, model, min_slope in ((1, gauss1, 0.8), (2, gauss2, -0.2)):
        rs = np.array([0.05, 0.1, 0.2, 0.35, 0.5])
        vals = [kac_rice_second_moment_integrand(model, k, np.r_[r, np.zeros(k - 1)],
                                                 np.zeros(k), n_mc=60_000)[0]
                for r in rs]
        slope = np.polyfit(np.log(rs), np.log(vals), 1)[0]
        assert slope >= min_slope


def test_density_bound_shape(gauss1):
    # (2 pi)^-k gpdi^-1/2 equals the joint gradient density at (0,0)
    for r in (0.3, 1.0, 2.5):
        lhs = gradient_pair_density_at_zero(gauss1, 1, r)
        cov = np.array([[1.0, -gauss1.radial_derivative(r, 2)],
                        [-gauss1.radial_derivative(r, 2), 1.0]])
        direct = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
        assert lhs == pytest.approx(direct, rel=1e-12)


def test_second_factorial_moment_vs_simulated_variance(gauss1):
    # E[N(N-1)] from the integrand vs the simulated critical-point count on
    # a length-10 interval
    t2, t2_err = second_factorial_moment(gauss1, 1, 10.0, n_nodes=48, n_mc=30_000)
    grid = Grid.for_window(1, 0.005, 5)
    counts = []
    for rep in range(2000):
        s = simulate(gauss1, grid, 80_000 + rep)
        g = s.gradient[0]
        counts.append(np.count_nonzero(np.sign(g[1:]) != np.sign(g[:-1])))
    counts = np.array(counts, float)
    sim_fact = (counts * (counts - 1)).mean()
    assert abs(t2 - sim_fact) / sim_fact < 0.05
