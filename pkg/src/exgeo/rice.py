"""Analytic covariance identities on flats and Kac-Rice moment formulas,
used as independent oracles for the simulation pipeline."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .covariance import (CovarianceModel, NondegeneracyError, build_sigma,
                         cov_tensors, mu4)
from .util import rng_from, vech_pairs


def det_rank_one(c1: float, c2: float, v, dim: int) -> float:
    """det(c1 I + c2 v v^T) = c1^dim + c1^(dim-1) c2 |v|^2."""
    v = np.asarray(v, dtype=float)
    return c1 ** dim + c1 ** (dim - 1) * c2 * float(v @ v)


@dataclass(frozen=True)
class FlatCovJet:
    k: int
    r: float
    d2cov: np.ndarray
    det_identity_value: float  # det(I - d2cov^2)


def d2cov_on_flat(model: CovarianceModel, k: int, t) -> FlatCovJet:
    """Hessian of Cov restricted to a k-flat at lag t: R'(r)/r I plus the
    rank-one radial term; at r -> 0 the limit -I (and identity value 0)."""
    t = np.asarray(t, dtype=float)
    r = float(np.linalg.norm(t))
    if r < 1e-8:
        return FlatCovJet(k, r, -np.eye(k), 0.0)
    R1 = float(model.radial_derivative(r, 1))
    R2 = float(model.radial_derivative(r, 2))
    mat = (R1 / r) * np.eye(k) + (R2 / r ** 2 - R1 / r ** 3) * np.outer(t, t)
    det_val = float(np.linalg.det(np.eye(k) - mat @ mat))
    return FlatCovJet(k, r, mat, det_val)


def gradient_pair_det_identity(model: CovarianceModel, k: int, r: float) -> float:
    """Closed form det(I - D^2Cov^2) = (1 - (R'/r)^2)^(k-1) (1 - R''^2)."""
    if r <= 0:
        raise ValueError("r must be positive")
    R1 = float(model.radial_derivative(r, 1))
    R2 = float(model.radial_derivative(r, 2))
    return (1.0 - (R1 / r) ** 2) ** (k - 1) * (1.0 - R2 ** 2)


def taylor_remainder_check(model: CovarianceModel, r_lo: float = 1e-3,
                           r_hi: float = 1e-1, n: int = 25):
    """Fits the log-log slopes of |R'(r) + r - mu/6 r^3| and
    |R''(r) + 1 - mu/2 r^2|; the expansions demand slopes >= 4 resp. >= 3
    (pass thresholds 3.9 / 2.9)."""
    mu = float(model.radial_derivative(0.0, 4))
    r = np.logspace(np.log10(r_lo), np.log10(r_hi), n)
    rem1 = np.abs(model.radial_derivative(r, 1) + r - (mu / 6.0) * r ** 3)
    rem2 = np.abs(model.radial_derivative(r, 2) + 1.0 - (mu / 2.0) * r ** 2)

    def slope(vals):
        good = vals > 0
        if np.count_nonzero(good) < 3:
            return 0.0
        return float(np.polyfit(np.log(r[good]), np.log(vals[good]), 1)[0])

    s1, s2 = slope(rem1), slope(rem2)
    return {"slope_r1": s1, "slope_r2": s2, "mu": mu,
            "passed": s1 >= 3.9 and s2 >= 2.9}


def expected_abs_det_hessian(model: CovarianceModel, k: int,
                             n_mc: int = 1_000_000, seed: int = 7):
    """E|det D^2 (X|flat)(0)|: exact sqrt(2 mu / pi) for k=1, antithetic
    Monte Carlo over the Gaussian Hessian law otherwise."""
    mu = mu4(model)
    if k == 1:
        return float(np.sqrt(2.0 * mu / np.pi)), 0.0
    pairs = vech_pairs(k)
    K = len(pairs)
    cov = np.empty((K, K))
    for a, (i, j) in enumerate(pairs):
        for b, (p, q) in enumerate(pairs):
            cov[a, b] = (mu / 3.0) * ((i == j) * (p == q) + (i == p) * (j == q)
                                      + (i == q) * (j == p))
    chol = np.linalg.cholesky(cov)
    rng = rng_from(seed, "absdet", k)
    z = rng.standard_normal((n_mc // 2, K)) @ chol.T
    z = np.concatenate([z, -z])  # antithetic
    mats = np.zeros((len(z), k, k))
    for a, (i, j) in enumerate(pairs):
        mats[:, i, j] = z[:, a]
        mats[:, j, i] = z[:, a]
    vals = np.abs(np.linalg.det(mats))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


def kac_rice_first_moment(model: CovarianceModel, k: int, window_measure: float,
                          y, n_mc: int = 1_000_000):
    """E[#{t in W cap F : grad (X|F)(t) = y}] =
    E|det D^2 X| * phi_k(y) * H^k(W cap F)   (gradient has identity covariance)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    edet, edet_se = expected_abs_det_hessian(model, k, n_mc=n_mc)
    dens = float(np.exp(-0.5 * y @ y) / (2.0 * np.pi) ** (k / 2.0))
    return edet * dens * window_measure, edet_se * dens * window_measure


def _second_moment_blocks(model: CovarianceModel, k: int, t):
    """Joint covariance of (grad(t), grad(0)) and (vechH(t), vechH(0)) and
    their cross block, from the derivative tensors of Cov."""
    pairs = vech_pairs(k)
    K = len(pairs)
    C0, C1, C2, C3, C4 = cov_tensors(model, np.asarray(t, dtype=float))
    Z = cov_tensors(model, np.zeros(k))
    gg = np.block([[np.eye(k), -C2], [-C2, np.eye(k)]])
    S0 = np.empty((K, K))
    Ct = np.empty((K, K))
    for a, (i, j) in enumerate(pairs):
        for b, (p, q) in enumerate(pairs):
            S0[a, b] = Z[4][i, j, p, q]
            Ct[a, b] = C4[i, j, p, q]
    vv = np.block([[S0, Ct], [Ct.T, S0]])
    T3 = np.empty((K, k))
    for a, (i, j) in enumerate(pairs):
        for c in range(k):
            T3[a, c] = C3[i, j, c]
    # rows: (H(t), H(0)); cols: (grad(t), grad(0))
    vg = np.block([[np.zeros((K, k)), -T3], [T3, np.zeros((K, k))]])
    return gg, vv, vg


def kac_rice_second_moment_integrand(model: CovarianceModel, k: int, t, y,
                                     n_mc: int = 100_000, seed: int = 11):
    """E[|det H(t) det H(0)| | grad(t)=grad(0)=y] * p_{grad(t),grad(0)}(y,y),
    by Gaussian regression of the Hessians on the gradient pair and Monte
    Carlo over the conditional law."""
    if k not in (1, 2):
        raise NotImplementedError("second-moment integrand supports k in {1,2}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = float(np.linalg.norm(t))
    if r < 1e-10:
        raise NondegeneracyError("coincident-point conditioning is singular")
    gg, vv, vg = _second_moment_blocks(model, k, t)
    sign, logdet = np.linalg.slogdet(gg)
    if sign <= 0:
        raise NondegeneracyError("gradient-pair covariance not positive definite")
    gg_inv = np.linalg.inv(gg)
    yy = np.concatenate([y, y])
    mean = vg @ gg_inv @ yy
    cond = vv - vg @ gg_inv @ vg.T
    cond = 0.5 * (cond + cond.T)
    w, V = np.linalg.eigh(cond)
    half = V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    rng = rng_from(seed, "kr2", k, round(r, 12))
    K = len(vech_pairs(k))
    z = rng.standard_normal((n_mc, 2 * K)) @ half.T + mean

    def dets(v):
        if k == 1:
            return v[:, 0]
        return v[:, 0] * v[:, 2] - v[:, 1] ** 2

    vals = np.abs(dets(z[:, :K]) * dets(z[:, K:]))
    e = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_mc))
    dens = float(np.exp(-0.5 * yy @ gg_inv @ yy)
                 / ((2.0 * np.pi) ** k * np.exp(0.5 * logdet)))
    return e * dens, se * dens


def gradient_pair_density_at_zero(model: CovarianceModel, k: int, r: float) -> float:
    """(2 pi)^-k det(I - D2cov^2)^(-1/2): the peak of the gradient-pair
    density, against which the closed-form determinant identity is tested."""
    return (2.0 * np.pi) ** (-k) * gradient_pair_det_identity(model, k, r) ** (-0.5)


def second_factorial_moment(model: CovarianceModel, k: int, T: float, y=0.0,
                            n_nodes: int = 64, n_mc: int = 40_000):
    """E[N(N-1)] for the count of gradient-level-y points on a length-T
    interval (k=1): int over [-T,T] of integrand(t) (T - |t|) dt."""
    if k != 1:
        raise NotImplementedError("factorial moment implemented for k=1")
    from numpy.polynomial.legendre import leggauss
    xs, ws = leggauss(n_nodes)
    # substitute t in (0, T], integrand even; avoid the integrable r^1 endpoint
    lo, hi = 1e-3, T
    t = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * ws
    total, err2 = 0.0, 0.0
    for ti, wi in zip(t, w):
        v, se = kac_rice_second_moment_integrand(model, 1, [ti], [y], n_mc=n_mc,
                                                 seed=int(1000 * ti) % 99991)
        total += 2.0 * wi * v * (T - ti)
        err2 += (2.0 * wi * (T - ti) * se) ** 2
    return total, float(np.sqrt(err2))
