"""Isotropic covariance models and their joint-derivative covariance structure.

A model is the radial profile R with derivatives up to order four plus a
spectral density.  From R we assemble every covariance the rest of the
package needs: the matrix of (field, gradient, Hessian) at one point, the
same matrix with a lag, and the full derivative tensors of Cov(t) = R(|t|)
at arbitrary lags.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .util import vech_pairs


class DimensionError(ValueError):
    pass


class NondegeneracyError(ValueError):
    """Raised when the joint covariance fails positive definiteness."""


class CapabilityError(RuntimeError):
    """Raised when a model lacks the derivative or spectral access needed."""


@dataclass(frozen=True)
class CovarianceModel:
    name: str
    d: int
    radial_derivative: Callable  # (r, order k in 0..4) -> d^k R / dr^k, vectorized
    spectral_density: Optional[Callable] = None  # f(rho) per unit d-volume of frequency
    # derivatives of g(x) = R(sqrt(x)) w.r.t. x; exact for the Gaussian model,
    # converted from radial derivatives otherwise
    sq_radial_derivative: Optional[Callable] = None

    def R(self, r):
        return self.radial_derivative(r, 0)

    def with_dimension(self, k: int) -> "CovarianceModel":
        """Same radial profile viewed as a k-dimensional isotropic model
        (restriction of the field to a k-flat has this law)."""
        if self.name == "gaussian":
            return make_gaussian_cov(k)
        return replace(self, d=k, spectral_density=None)


def make_gaussian_cov(d: int) -> CovarianceModel:
    """Reference model Cov(t) = exp(-|t|^2/2); satisfies (A1)-(A3) exactly."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")

    def radial(r, order=0):
        r = np.asarray(r, dtype=float)
        e = np.exp(-0.5 * r * r)
        polys = {
            0: lambda r: np.ones_like(r),
            1: lambda r: -r,
            2: lambda r: r * r - 1.0,
            3: lambda r: 3.0 * r - r**3,
            4: lambda r: r**4 - 6.0 * r * r + 3.0,
        }
        if order not in polys:
            raise CapabilityError(f"radial derivative order {order} unsupported")
        return polys[order](r) * e

    def f(rho):
        rho = np.asarray(rho, dtype=float)
        return (2.0 * np.pi) ** (-d / 2.0) * np.exp(-0.5 * rho * rho)

    def g_deriv(x, order=0):
        # g(x) = exp(-x/2): every derivative is closed form
        x = np.asarray(x, dtype=float)
        return (-0.5) ** order * np.exp(-0.5 * x)

    return CovarianceModel("gaussian", d, radial, f, g_deriv)


def make_cosine_cov() -> CovarianceModel:
    """R(r) = cos r on d=1: valid A1 but violates A2/A3 (point-mass spectrum).
    Test model for assumption failure paths."""

    def radial(r, order=0):
        r = np.asarray(r, dtype=float)
        fns = [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x),
               np.sin, np.cos]
        return fns[order](r)

    return CovarianceModel("cosine", 1, radial, None, None)


def make_scaled_model(base: CovarianceModel, scale: float) -> CovarianceModel:
    """scale * R: breaks the A1 normalization when scale != 1 (test helper)."""

    def radial(r, order=0):
        return scale * base.radial_derivative(r, order)

    sq = None
    if base.sq_radial_derivative is not None:
        sq = lambda x, order=0: scale * base.sq_radial_derivative(x, order)
    return CovarianceModel(base.name + "-scaled", base.d, radial,
                           base.spectral_density, sq)


def make_table_model(name: str, d: int, r, R, R1, R2, R3, R4) -> CovarianceModel:
    """Model backed by a radial table (columns r, R, R1..R4), cubic-spline
    interpolated.  No spectral density; simulation is refused for these."""
    from scipy.interpolate import CubicSpline

    cols = [np.asarray(c, dtype=float) for c in (R, R1, R2, R3, R4)]
    splines = [CubicSpline(np.asarray(r, dtype=float), c) for c in cols]

    def radial(rr, order=0):
        if order > 4:
            raise CapabilityError("table models carry derivatives up to order 4")
        return splines[order](np.asarray(rr, dtype=float))

    return CovarianceModel(name, d, radial, None, None)


def load_table_model(path: str, d: int) -> CovarianceModel:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return make_table_model(f"table:{path}", d, *(data[:, i] for i in range(6)))


def get_model(name: str, d: int) -> CovarianceModel:
    if name == "gaussian":
        return make_gaussian_cov(d)
    if name == "cosine":
        return make_cosine_cov()
    if name.startswith("table:"):
        return load_table_model(name.split(":", 1)[1], d)
    raise KeyError(f"unknown covariance model {name!r}")


def mu4(model: CovarianceModel) -> float:
    """Fourth radial derivative of Cov at 0 = E[(d^2 X / dt_1^2)^2]; must be > 0."""
    val = float(model.radial_derivative(0.0, 4))
    if not val > 0.0:
        raise NondegeneracyError(f"mu4 = {val} is not positive")
    return val


# ---------------------------------------------------------------------------
# derivative tensors of Cov(t) = R(|t|) = g(|t|^2)
# ---------------------------------------------------------------------------

def _g_derivatives(model: CovarianceModel, r):
    """g^(n)(x) at x = r^2 for n = 0..4, from closed form when available,
    otherwise converted from radial derivatives (r bounded away from 0)."""
    r = np.asarray(r, dtype=float)
    if model.sq_radial_derivative is not None:
        x = r * r
        return [model.sq_radial_derivative(x, n) for n in range(5)]
    tiny = r < 1e-6
    rs = np.where(tiny, 1.0, r)  # placeholder, fixed below
    Rd = [model.radial_derivative(rs, n) for n in range(5)]
    g0 = Rd[0]
    g1 = Rd[1] / (2 * rs)
    g2 = (Rd[2] - Rd[1] / rs) / (4 * rs**2)
    g3 = (Rd[3] - 3 * Rd[2] / rs + 3 * Rd[1] / rs**2) / (8 * rs**3)
    g4 = (Rd[4] - 6 * Rd[3] / rs + 15 * Rd[2] / rs**2 - 15 * Rd[1] / rs**3) / (16 * rs**4)
    if np.any(tiny):
        # small-r limits from the even Taylor expansion of R; g3, g4 terms are
        # multiplied by t^3, t^4 downstream so zeroing them errs by O(r^3)
        mu = float(model.radial_derivative(0.0, 4))
        g0 = np.where(tiny, model.radial_derivative(r, 0), g0)
        g1 = np.where(tiny, float(model.radial_derivative(0.0, 2)) / 2.0, g1)
        g2 = np.where(tiny, mu / 12.0, g2)
        g3 = np.where(tiny, 0.0, g3)
        g4 = np.where(tiny, 0.0, g4)
    return [g0, g1, g2, g3, g4]


def cov_tensors(model: CovarianceModel, t):
    """Partial-derivative tensors of Cov at lags t.

    t: (..., k) array of lag vectors.  Returns (C, C1, C2, C3, C4) with shapes
    (...,), (...,k), (...,k,k), (...,k,k,k), (...,k,k,k,k); fully symmetric.
    """
    t = np.asarray(t, dtype=float)
    k = t.shape[-1]
    r = np.sqrt(np.sum(t * t, axis=-1))
    g0, g1, g2, g3, g4 = _g_derivatives(model, r)
    eye = np.eye(k)
    tt = t[..., :, None] * t[..., None, :]

    C = g0
    C1 = 2.0 * g1[..., None] * t
    C2 = 2.0 * g1[..., None, None] * eye + 4.0 * g2[..., None, None] * tt

    # third order: 4 g2 (delta_ij t_k + perms) + 8 g3 t_i t_j t_k
    d_t = (np.multiply.outer(np.ones(t.shape[:-1]), eye)[..., :, :, None]
           * t[..., None, None, :])
    sym3 = d_t + np.swapaxes(d_t, -1, -2) + np.swapaxes(d_t, -1, -3)
    ttt = tt[..., :, :, None] * t[..., None, None, :]
    C3 = 4.0 * g2[..., None, None, None] * sym3 + 8.0 * g3[..., None, None, None] * ttt

    # fourth order: 4 g2 (dd 3 terms) + 8 g3 (d tt 6 terms) + 16 g4 t^4
    dd = (np.einsum("ij,kl->ijkl", eye, eye)
          + np.einsum("ik,jl->ijkl", eye, eye)
          + np.einsum("il,jk->ijkl", eye, eye))
    dtt = (np.einsum("ij,...kl->...ijkl", eye, tt)
           + np.einsum("ik,...jl->...ijkl", eye, tt)
           + np.einsum("il,...jk->...ijkl", eye, tt)
           + np.einsum("jk,...il->...ijkl", eye, tt)
           + np.einsum("jl,...ik->...ijkl", eye, tt)
           + np.einsum("kl,...ij->...ijkl", eye, tt))
    tttt = ttt[..., :, :, :, None] * t[..., None, None, None, :]
    C4 = (4.0 * g2[..., None, None, None, None] * dd
          + 8.0 * g3[..., None, None, None, None] * dtt
          + 16.0 * g4[..., None, None, None, None] * tttt)
    return C, C1, C2, C3, C4


# ---------------------------------------------------------------------------
# the D x D covariance of (grad, vech Hessian, field) at one point
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SigmaMatrix:
    d: int
    m: int
    sigma: np.ndarray
    lam: np.ndarray

    @property
    def k(self) -> int:
        return self.d - self.m

    @property
    def K(self) -> int:
        return self.k * (self.k + 1) // 2

    @property
    def D(self) -> int:
        return self.k + self.K + 1

    @property
    def lam2(self) -> np.ndarray:
        return self.lam[self.k:, self.k:]

    @property
    def alpha(self) -> float:
        return float(self.lam[-1, -1])

    @property
    def L(self) -> np.ndarray:
        return self.lam2[: self.K, : self.K]

    @property
    def l(self) -> np.ndarray:
        return self.lam2[self.K, : self.K]

    @property
    def lam_inv(self) -> np.ndarray:
        return np.linalg.inv(self.lam)


def build_sigma(model: CovarianceModel, d: int, m: int) -> SigmaMatrix:
    """Covariance of (grad X, vech D^2 X, X) along a (d-m)-flat at one point.

    Entries come from radial derivatives of Cov at 0 in the flat's basis;
    isotropy makes the basis irrelevant.  The first-derivative block is the
    identity exactly; the Cholesky factor is block-diagonal [[I,0],[0,L2]].
    """
    if not (0 <= m <= d - 1):
        raise DimensionError(f"need 0 <= m <= d-1, got d={d}, m={m}")
    k = d - m
    pairs = vech_pairs(k)
    K = len(pairs)
    D = k + K + 1
    mu = mu4(model)
    r2 = float(model.radial_derivative(0.0, 2))

    sigma = np.zeros((D, D))
    sigma[:k, :k] = -r2 * np.eye(k)  # = I under A1
    for a, (i, j) in enumerate(pairs):
        for b, (p, q) in enumerate(pairs):
            dd = (mu / 3.0) * ((i == j) * (p == q) + (i == p) * (j == q)
                               + (i == q) * (j == p))
            sigma[k + a, k + b] = dd
        sigma[k + a, D - 1] = r2 * (i == j)  # E[d^2_ii X * X] = R''(0)
        sigma[D - 1, k + a] = sigma[k + a, D - 1]
    sigma[D - 1, D - 1] = float(model.radial_derivative(0.0, 0))

    try:
        lam = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NondegeneracyError("Sigma is not positive definite (A2)") from exc
    return SigmaMatrix(d, m, sigma, lam)


def sigma_with_lag(model: CovarianceModel, d: int, t) -> np.ndarray:
    """Covariance matrix of (X(t), grad X(t), vech D^2 X(t), grad X(0));
    the vector whose full rank is assumption (A2)."""
    t = np.asarray(t, dtype=float)
    pairs = vech_pairs(d)
    K = len(pairs)
    n = 1 + d + K + d
    C0, C1, C2, C3, C4 = cov_tensors(model, t)
    Z0 = cov_tensors(model, np.zeros(d))
    out = np.zeros((n, n))

    # equal-time block for (X, grad, vech Hessian) at t
    out[0, 0] = float(model.radial_derivative(0.0, 0))
    out[1:1 + d, 1:1 + d] = -Z0[2]
    for a, (i, j) in enumerate(pairs):
        out[0, 1 + d + a] = Z0[2][i, j]
        out[1 + d + a, 0] = Z0[2][i, j]
        for b, (p, q) in enumerate(pairs):
            out[1 + d + a, 1 + d + b] = Z0[4][i, j, p, q]
    # cross terms against grad X(0)
    g0 = 1 + d + K
    out[g0:, g0:] = -Z0[2]
    for c in range(d):
        out[0, g0 + c] = -C1[c]
        out[g0 + c, 0] = -C1[c]
        for i in range(d):
            out[1 + i, g0 + c] = -C2[i, c]
            out[g0 + c, 1 + i] = -C2[i, c]
        for a, (i, j) in enumerate(pairs):
            out[1 + d + a, g0 + c] = -C3[i, j, c]
            out[g0 + c, 1 + d + a] = -C3[i, j, c]
    return out


# ---------------------------------------------------------------------------
# assumption report
# ---------------------------------------------------------------------------

@dataclass
class AssumptionReport:
    model_name: str
    d: int
    m: int
    normalization_error: float        # |R(0) - 1|
    second_derivative_error: float    # |R''(0) + 1|
    psi_integral: float               # over the radius-10 ball
    psi_increments: list              # integral increments on [10,15], [15,20]
    psi_integrable: bool
    lag_min_eigenvalues: dict         # lag -> min eigenvalue of sigma_with_lag
    sigma_positive_definite: bool
    notes: list

    @property
    def passed(self) -> bool:
        return (self.normalization_error <= 1e-10
                and self.second_derivative_error <= 1e-10
                and self.psi_integrable
                and self.sigma_positive_definite
                and all(v > 0 for v in self.lag_min_eigenvalues.values()))


def _psi_radial(model: CovarianceModel, d: int, r):
    """max |partial derivative of Cov| over orders 0..4 at t = r e_1."""
    t = np.zeros(np.shape(r) + (d,))
    t[..., 0] = r
    C0, C1, C2, C3, C4 = cov_tensors(model, t)
    flat = lambda a: np.abs(a).reshape(np.shape(r) + (-1,)).max(axis=-1)
    return np.maximum.reduce([np.abs(C0), flat(C1), flat(C2), flat(C3), flat(C4)])


def check_assumptions(model: CovarianceModel, d: int, m: int = 0,
                      lags=(0.5, 1.0, 2.0)) -> AssumptionReport:
    """Numeric face of (A1)-(A3) for an isotropic model."""
    try:
        _ = [model.radial_derivative(0.5, n) for n in range(5)]
    except Exception as exc:
        raise CapabilityError("radial derivatives to order 4 required") from exc

    notes = []
    norm_err = abs(float(model.radial_derivative(0.0, 0)) - 1.0)
    sec_err = abs(float(model.radial_derivative(0.0, 2)) + 1.0)

    from .flats import omega
    r = np.linspace(1e-6, 20.0, 4001)
    psi = _psi_radial(model, d, r)
    dens = psi * omega(d) * r ** (d - 1) if d > 1 else 2.0 * psi
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
    def at(radius):
        return float(np.interp(radius, r, cum))
    I10, I15, I20 = at(10.0), at(15.0), at(20.0)
    inc = [I15 - I10, I20 - I15]
    integrable = inc[1] <= 0.75 * inc[0] + 1e-12 and inc[1] <= 0.01 * max(I20, 1e-12)
    if not integrable:
        notes.append("psi tail mass not decaying on [10,20]: A3 integrability suspect")

    lag_eigs = {}
    for lag in lags:
        t = np.zeros(d)
        t[0] = lag
        w = np.linalg.eigvalsh(sigma_with_lag(model, d, t))
        lag_eigs[lag] = float(w.min())
        if lag_eigs[lag] <= 0:
            notes.append(f"sigma-with-lag at |t|={lag} not positive definite (A2)")

    sigma_pd = True
    if norm_err <= 1e-10 and sec_err <= 1e-10:
        try:
            build_sigma(model, d, m)
        except NondegeneracyError:
            sigma_pd = False
            notes.append("Sigma(d,m) not positive definite (A2)")
    else:
        notes.append("A1 normalization violated; Sigma check skipped")
        sigma_pd = False

    return AssumptionReport(model.name, d, m, norm_err, sec_err, I10, inc,
                            integrable, lag_eigs, sigma_pd, notes)
