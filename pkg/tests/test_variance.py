import json

import numpy as np
import pytest
from scipy.stats import norm

from exgeo.chaos import ChaosTable, mehler_expectation, multi_indices
from exgeo.covariance import build_sigma, make_gaussian_cov
from exgeo.fieldsim import Grid, simulate
from exgeo.variance import (cross_cov_Y, lower_bound, sigma2_q1_detail,
                            sigma2_q1_integral, sigma2_q_truncated,
                            variance_breakdown)


def test_lower_bound_values():
    f0_2 = 1.0 / (2 * np.pi)
    assert lower_bound(2, 1, 0.0, f0_2) == 0.0            # H_1(0) = 0
    assert lower_bound(2, 0, 1.0, f0_2) == pytest.approx(0.0, abs=1e-30)  # H_2(1) = 0
    # pi^2 (2 pi) f0 H_1(1)^2 phi(1)^2 = pi^2 phi(1)^2 = 0.5778637
    assert lower_bound(2, 1, 1.0, f0_2) == pytest.approx(
        np.pi ** 2 * norm.pdf(1.0) ** 2, rel=1e-12)
    assert lower_bound(2, 1, 1.0, f0_2) == pytest.approx(0.5778637, abs=1e-6)
    f0_1 = (2 * np.pi) ** -0.5
    assert lower_bound(1, 0, 0.0, f0_1) == 0.0
    assert lower_bound(1, 0, 1.0, f0_1) == pytest.approx(0.0233580, abs=1e-6)
    # m = d extension: exact first-chaos variance of the volume functional
    assert lower_bound(2, 2, 1.0, f0_2) == pytest.approx(
        2 * np.pi * norm.pdf(1.0) ** 2, rel=1e-12)


@pytest.mark.parametrize("d,m,u", [(1, 0, 1.0), (2, 1, 1.0), (2, 0, 1.0)])
def test_sigma2_q1_equals_lower_bound(d, m, u):
    model = make_gaussian_cov(d)
    val, err = sigma2_q1_integral(model, d, m, u)
    lb = lower_bound(d, m, u, float(model.spectral_density(0.0)))
    assert abs(val - lb) <= 1e-8 + err


def test_sigma2_q1_internals(gauss1):
    det = sigma2_q1_detail(gauss1, 1, 0, 1.0)
    # int E[X(t) X(0)] dt = sqrt(2 pi) = (2 pi) f(0) for the gaussian model
    D = 3
    jet_int = det.jet_integral
    assert det.f0_recovered == pytest.approx((2 * np.pi) ** -0.5, rel=1e-10)
    off = jet_int.copy()
    off[D - 1, D - 1] = 0.0
    assert np.max(np.abs(off)) < 1e-6  # odd integrands vanish over R^d
    assert abs(det.brute_value - det.value) <= 3 * (det.error + 1e-10)


def test_cross_cov_Y_vs_field_statistics(gauss1):
    # E[Y_i(t) Y_j(0)] assembled from tensors vs MC statistics of jets
    sigma = build_sigma(gauss1, 1, 0)
    grid = Grid.for_window(1, 0.05, 4)
    i0 = (grid.n - 1) // 2
    lam_inv = sigma.lam_inv
    lags = (0.5, 1.0, 2.0)
    acc = {lag: [] for lag in lags}
    for rep in range(2500):
        s = simulate(gauss1, grid, 90_000 + rep)
        jets = np.stack([s.gradient[0], s.hessian[0], s.X])  # (3, n)
        Y = lam_inv @ jets
        for lag in lags:
            j = i0 + int(round(lag / grid.h))
            acc[lag].append(np.outer(Y[:, j], Y[:, i0]))
    for lag in lags:
        emp = np.array(acc[lag])
        se = emp.std(axis=0, ddof=1) / np.sqrt(len(emp))
        theo = cross_cov_Y(gauss1, sigma, np.array([lag]), np.eye(1), np.eye(1))
        assert np.all(np.abs(emp.mean(axis=0) - theo) < 3.5 * se + 1e-3)


def test_sigma2_q2_positive_and_stable(gauss1):
    table = ChaosTable.build(gauss1, 1, 0, 1.0, 2)
    v1, _ = sigma2_q_truncated(gauss1, 1, 0, 1.0, 2, table=table, n_radial=128)
    v2, _ = sigma2_q_truncated(gauss1, 1, 0, 1.0, 2, table=table, n_radial=256)
    assert v1 > 0
    assert abs(v1 - v2) / v1 < 0.01


def test_sigma2_orders_nonnegative(gauss1):
    table = ChaosTable.build(gauss1, 1, 0, 1.0, 4)
    for q in (2, 3, 4):
        v, _ = sigma2_q_truncated(gauss1, 1, 0, 1.0, q, table=table)
        assert v >= 0


def test_integrand_negligible_at_radius_8(gauss1):
    sigma = build_sigma(gauss1, 1, 0)
    table = ChaosTable.build(gauss1, 1, 0, 1.0, 2)
    r = cross_cov_Y(gauss1, sigma, np.array([[8.0]]), np.eye(1), np.eye(1))
    total = 0.0
    for n in multi_indices(3, 2):
        for n2 in multi_indices(3, 2):
            total += abs(table.c(n)[0] * table.c(n2)[0]
                         * mehler_expectation(n, n2, r)[0])
    assert total < 1e-13


def test_sigma2_q_guard(gauss1):
    with pytest.raises(ValueError):
        sigma2_q_truncated(gauss1, 1, 0, 1.0, 7)


def test_variance_breakdown_json(gauss1):
    bd = variance_breakdown(gauss1, 1, 0, 1.0, Q=2)
    payload = json.loads(bd.to_json())
    assert payload["lower_bound"] == pytest.approx(0.0233580, abs=1e-6)
    assert payload["sigma2_by_order"]["1"]["value"] == pytest.approx(
        payload["lower_bound"], abs=1e-8)
    assert payload["truncated_total"] >= payload["lower_bound"]
    assert bd.truncated_total == pytest.approx(
        sum(v["value"] for v in payload["sigma2_by_order"].values()))
