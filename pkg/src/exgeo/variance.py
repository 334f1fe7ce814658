"""Asymptotic variance of standardized LK curvatures: the closed-form lower
bound, the exact first-chaos variance, and truncated higher-order terms
assembled from the Mehler expectation of decorrelated jets."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .chaos import ChaosTable, c_e_D_closed_form, hermite, mehler_expectation, multi_indices
from .covariance import CovarianceModel, build_sigma, cov_tensors
from .flats import flag_coefficient, sample_linear_flat
from .util import rng_from, vech_pairs


class InternalConsistencyError(AssertionError):
    pass


def lower_bound(d: int, m: int, u: float, f0: float) -> float:
    """flag(d,d-m)^2 (2 pi)^m f(0) H_{d-m}(u)^2 phi(u)^2.

    Defined for 0 <= m <= d-1; at m = d the same expression (flag = 1,
    H_0 = 1) is the exact first-chaos variance of the volume functional and
    is used by the experiment bound checks.
    """
    if not (0 <= m <= d):
        raise ValueError(f"need 0 <= m <= d, got m={m}")
    if f0 <= 0:
        raise ValueError("f0 must be positive")
    k = d - m
    return (flag_coefficient(d, k) ** 2 * (2.0 * np.pi) ** m * f0
            * float(hermite(k, u)) ** 2 * float(norm.pdf(u)) ** 2)


# ---------------------------------------------------------------------------
# cross covariance of the jets X^F(t) vs X^{F'}(0)
# ---------------------------------------------------------------------------

def cross_cov_jets(model: CovarianceModel, t, basisF, basisF2):
    """E[X^F(t) X^{F'}(0)^T] for the D-vectors (grad, vech Hessian, field)
    along flats with the given orthonormal bases; t may be batched (..., d).
    """
    basisF = np.atleast_2d(np.asarray(basisF, dtype=float))
    basisF2 = np.atleast_2d(np.asarray(basisF2, dtype=float))
    k = basisF.shape[0]
    pairs = vech_pairs(k)
    K = len(pairs)
    D = k + K + 1
    t = np.asarray(t, dtype=float)
    C0, C1, C2, C3, C4 = cov_tensors(model, t)
    batch = t.shape[:-1]
    out = np.zeros(batch + (D, D))

    gg = -np.einsum("ap,...pq,bq->...ab", basisF, C2, basisF2)
    gh_full = np.einsum("ap,...pqr,cq,er->...ace", basisF, C3, basisF2, basisF2)
    hg_full = -np.einsum("ip,jq,...pqr,br->...ijb", basisF, basisF, C3, basisF2)
    hh_full = np.einsum("ip,jq,...pqrs,cr,es->...ijce", basisF, basisF, C4,
                        basisF2, basisF2)
    gx = np.einsum("...p,ap->...a", C1, basisF)
    xg = -np.einsum("...p,bp->...b", C1, basisF2)
    hx_full = np.einsum("ip,jq,...pq->...ij", basisF, basisF, C2)
    xh_full = np.einsum("cp,eq,...pq->...ce", basisF2, basisF2, C2)

    out[..., :k, :k] = gg
    out[..., :k, D - 1] = gx
    out[..., D - 1, :k] = xg
    out[..., D - 1, D - 1] = C0
    for a, (i, j) in enumerate(pairs):
        out[..., k + a, D - 1] = hx_full[..., i, j]
        out[..., D - 1, k + a] = xh_full[..., i, j]
        for b in range(k):
            out[..., b, k + a] = gh_full[..., b, i, j]
            out[..., k + a, b] = hg_full[..., i, j, b]
        for bidx, (c, e) in enumerate(pairs):
            out[..., k + a, k + bidx] = hh_full[..., i, j, c, e]
    return out


def cross_cov_Y(model: CovarianceModel, sigma, t, basisF, basisF2):
    """E[Y^F(t) Y^{F'}(0)^T] = Lam^-1 E[X^F(t) X^{F'}(0)^T] Lam^-T."""
    M = cross_cov_jets(model, t, basisF, basisF2)
    Li = sigma.lam_inv
    return np.einsum("ip,...pq,jq->...ij", Li, M, Li)


# ---------------------------------------------------------------------------
# quadrature over R^d (radial Gauss-Legendre x deterministic angular rules)
# ---------------------------------------------------------------------------

def _rd_quadrature(d: int, rmax: float, n_radial: int, n_angular: int = 48):
    """Nodes (npts, d) and weights so that sum w_i f(t_i) ~ int_{|t|<rmax} f dt."""
    from numpy.polynomial.legendre import leggauss
    xs, ws = leggauss(n_radial)
    r = 0.5 * rmax * (xs + 1.0)
    wr = 0.5 * rmax * ws
    if d == 1:
        pts = np.concatenate([r, -r])[:, None]
        wts = np.concatenate([wr, wr])
        return pts, wts
    if d == 2:
        theta = (np.arange(n_angular) + 0.5) * (2.0 * np.pi / n_angular)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 2)
        wts = np.repeat(wr * r * (2.0 * np.pi / n_angular), n_angular)
        return pts, wts
    if d == 3:
        nc, nphi = 12, 24
        xc, wc = leggauss(nc)
        phi = (np.arange(nphi) + 0.5) * (2.0 * np.pi / nphi)
        st = np.sqrt(1.0 - xc ** 2)
        dirs = np.stack([np.outer(st, np.cos(phi)).ravel(),
                         np.outer(st, np.sin(phi)).ravel(),
                         np.repeat(xc, nphi)], axis=-1)
        wdir = np.repeat(wc, nphi) * (2.0 * np.pi / nphi)
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        wts = (wr[:, None] * r[:, None] ** 2 * wdir[None, :]).ravel()
        return pts, wts
    raise NotImplementedError("quadrature implemented for d <= 3")


# ---------------------------------------------------------------------------
# first chaos
# ---------------------------------------------------------------------------

@dataclass
class Q1Detail:
    value: float
    error: float
    brute_value: float
    jet_integral: np.ndarray   # int E[Y_k(t) Y_l(0)] dt over the truncated ball
    f0_recovered: float


def sigma2_q1_integral(model: CovarianceModel, d: int, m: int, u: float,
                       rmax: float = 10.0, n_radial: int = 256) -> tuple:
    """First-chaos asymptotic variance.

    Exact reduction flag^2 c(e_D)^2 (Lam^-1_DD)^2 (2 pi)^d f(0), cross-checked
    against brute-force radial integration of the decorrelated-jet cross
    covariance (only the (D,D) entry survives the t-integral).
    """
    detail = sigma2_q1_detail(model, d, m, u, rmax=rmax, n_radial=n_radial)
    return detail.value, detail.error


def sigma2_q1_detail(model: CovarianceModel, d: int, m: int, u: float,
                     rmax: float = 10.0, n_radial: int = 256) -> Q1Detail:
    sigma = build_sigma(model, d, m)
    k = d - m
    D = sigma.D
    f0 = float(model.spectral_density(0.0))
    flag = flag_coefficient(d, k)
    cD = c_e_D_closed_form(sigma, u)
    value = flag ** 2 * cD ** 2 * (1.0 / sigma.alpha) ** 2 * (2.0 * np.pi) ** d * f0

    basis = np.eye(d)[:k]
    pts, wts = _rd_quadrature(d, rmax, n_radial)
    ycov = cross_cov_Y(model, sigma, pts, basis, basis)
    integral = np.einsum("p,pij->ij", wts, ycov)

    # only the pure-field slot survives: c(e_i) = 0 for i < D and the jet
    # integral is supported on the (D,D) entry, so the brute-force variance
    # is flag^2 c(e_D)^2 int E[Y_D(t) Y_D(0)] dt
    brute = flag ** 2 * cD ** 2 * float(integral[D - 1, D - 1])
    f0_rec = float(integral[D - 1, D - 1]) * sigma.alpha ** 2 / (2.0 * np.pi) ** d

    # quadrature error: radial refinement difference plus truncation
    pts2, wts2 = _rd_quadrature(d, rmax, n_radial // 2)
    ycov2 = cross_cov_Y(model, sigma, pts2, basis, basis)
    integral2 = np.einsum("p,pij->ij", wts2, ycov2)
    quad_err = flag ** 2 * cD ** 2 * abs(float(integral[D - 1, D - 1]
                                               - integral2[D - 1, D - 1]))
    err = quad_err + 1e-12 * abs(value)

    off = integral.copy()
    off[D - 1, D - 1] = 0.0
    if np.max(np.abs(off)) > 1e-6:
        raise InternalConsistencyError(
            f"jet integral off-diagonal max {np.max(np.abs(off)):.2e} exceeds 1e-6")
    if abs(brute - value) > 3.0 * (err + 1e-10) + 1e-8 * abs(value):
        raise InternalConsistencyError(
            f"brute-force q1 {brute} vs reduction {value} beyond tolerance")
    return Q1Detail(value, err, brute, integral, f0_rec)


# ---------------------------------------------------------------------------
# higher chaos orders
# ---------------------------------------------------------------------------

def sigma2_q_truncated(model: CovarianceModel, d: int, m: int, u: float, q: int,
                       table: ChaosTable = None, rmax: float = 10.0,
                       n_radial: int = 200, n_flat_pairs: int = 200,
                       seed: int = 2024) -> tuple:
    """Order-q term of the asymptotic variance,
    flag^2 E_{F,F'} int sum_{|n|=|n'|=q} c(n) c(n') Mehler(n,n',r^{F,F'}(t)) dt,
    with the Grassmannian average by Haar Monte Carlo (single flat for d=1).
    """
    if not 2 <= q <= 4:
        raise ValueError("sigma2_q_truncated covers 2 <= q <= 4")
    sigma = build_sigma(model, d, m)
    k = d - m
    if table is None:
        table = ChaosTable.build(model, d, m, u, q)
    else:
        table.ensure_order(q)
    ns = [n for n in multi_indices(sigma.D, q) if abs(table.c(n)[0]) > 1e-14]
    if not ns:
        return 0.0, 0.0
    cs = np.array([table.c(n)[0] for n in ns])
    pts, wts = _rd_quadrature(d, rmax, n_radial)
    flag = flag_coefficient(d, k)

    if d == k:
        pairs_list = [(np.eye(d)[:k], np.eye(d)[:k])]
    else:
        rng = rng_from(seed, "flatpairs", d, m)
        pairs_list = [(sample_linear_flat(d, k, rng).basis,
                       sample_linear_flat(d, k, rng).basis)
                      for _ in range(n_flat_pairs)]

    per_pair = np.empty(len(pairs_list))
    for idx, (bF, bF2) in enumerate(pairs_list):
        r = cross_cov_Y(model, sigma, pts, bF, bF2)
        total = np.zeros(len(pts))
        for i, n in enumerate(ns):
            for j, n2 in enumerate(ns):
                total += cs[i] * cs[j] * mehler_expectation(n, n2, r)
        per_pair[idx] = float(np.dot(wts, total))
    value = flag ** 2 * float(per_pair.mean())
    if len(pairs_list) > 1:
        err = flag ** 2 * float(per_pair.std(ddof=1) / np.sqrt(len(pairs_list)))
    else:
        # radial-refinement error for the deterministic single-flat case
        pts2, wts2 = _rd_quadrature(d, rmax, n_radial // 2)
        r2 = cross_cov_Y(model, sigma, pts2, pairs_list[0][0], pairs_list[0][1])
        tot2 = np.zeros(len(pts2))
        for i, n in enumerate(ns):
            for j, n2 in enumerate(ns):
                tot2 += cs[i] * cs[j] * mehler_expectation(n, n2, r2)
        err = abs(value - flag ** 2 * float(np.dot(wts2, tot2)))
    return value, err


@dataclass
class VarianceBreakdown:
    d: int
    m: int
    u: float
    lower_bound: float
    sigma2_by_order: dict = field(default_factory=dict)  # q -> (value, error)
    Q: int = 1

    @property
    def truncated_total(self) -> float:
        return float(sum(v for v, _ in self.sigma2_by_order.values()))

    def to_json(self) -> str:
        payload = {
            "d": self.d, "m": self.m, "u": self.u,
            "lower_bound": self.lower_bound,
            "sigma2_by_order": {str(q): {"value": v, "error": e}
                                for q, (v, e) in sorted(self.sigma2_by_order.items())},
            "truncated_total": self.truncated_total,
            "Q": self.Q,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def variance_breakdown(model: CovarianceModel, d: int, m: int, u: float,
                       Q: int = 4, **kwargs) -> VarianceBreakdown:
    f0 = float(model.spectral_density(0.0))
    lb = lower_bound(d, m, u, f0)
    out = VarianceBreakdown(d, m, u, lb, Q=Q)
    out.sigma2_by_order[1] = sigma2_q1_integral(model, d, m, u)
    if Q >= 2:
        table = ChaosTable.build(model, d, m, u, Q)
        for q in range(2, Q + 1):
            out.sigma2_by_order[q] = sigma2_q_truncated(model, d, m, u, q,
                                                        table=table, **kwargs)
    return out
