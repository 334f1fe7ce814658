"""Affine and linear flats, invariant-measure sampling, and sphere constants.

Flats are sampled so that weighted Monte Carlo averages over them estimate
the Crofton integral of the motion invariant measure restricted to flats
hitting a ball.  The Grassmannian mass used for those weights is the one
that makes the Crofton identity LK_m(M) = integral of chi(M cap F) exact
(validated by the disk test); see grassmannian_mass vs flag_coefficient.
"""

from dataclasses import dataclass
from math import comb, gamma, pi

import numpy as np


class DomainError(ValueError):
    pass


def omega(n: int) -> float:
    """Surface area of the unit sphere S^(n-1)."""
    if n < 1:
        raise DomainError(f"omega requires n >= 1, got {n}")
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def kappa(n: int) -> float:
    """Volume of the unit n-ball; kappa(0) = 1 (a point has H^0 measure 1)."""
    if n < 0:
        raise DomainError(f"kappa requires n >= 0, got {n}")
    if n == 0:
        return 1.0
    return omega(n) / n


def flag_coefficient(d: int, k: int) -> float:
    """binom(d,k) * omega_d / (omega_k * omega_{d-k}), with the endpoint
    convention flag(d,0) = flag(d,d) = 1."""
    if not 0 <= k <= d:
        raise DomainError(f"need 0 <= k <= d, got d={d}, k={k}")
    if k == 0 or k == d:
        return 1.0
    return comb(d, k) * omega(d) / (omega(k) * omega(d - k))


def grassmannian_mass(d: int, k: int) -> float:
    """Total mass of the invariant measure on G(d,k) under which the Crofton
    formula holds with unit constant: binom(d,k) * kappa_d / (kappa_k * kappa_{d-k})."""
    if not 0 <= k <= d:
        raise DomainError(f"need 0 <= k <= d, got d={d}, k={k}")
    return comb(d, k) * kappa(d) / (kappa(k) * kappa(d - k))


@dataclass(frozen=True)
class Flat:
    """A k-flat in R^d: orthonormal basis rows of the direction space and the
    foot point (closest point to the origin, orthogonal to the directions)."""
    d: int
    k: int
    basis: np.ndarray  # (k, d), orthonormal rows
    foot: np.ndarray   # (d,), foot perpendicular to span(basis)

    def __post_init__(self):
        gram = self.basis @ self.basis.T
        if not np.allclose(gram, np.eye(self.k), atol=1e-12):
            raise ValueError("basis rows are not orthonormal")
        if np.max(np.abs(self.basis @ self.foot)) > 1e-12:
            raise ValueError("foot is not orthogonal to the direction space")


def rho(flat: Flat, s):
    """Isometric parametrization s -> foot + sum s_i v_i of the flat."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return s @ flat.basis + flat.foot


def sigma_map(flat: Flat, s):
    """Linear part of rho (foot omitted)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return s @ flat.basis


def _haar_orthogonal(d: int, rng) -> np.ndarray:
    z = rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diagonal(r))


def sample_linear_flat(d: int, k: int, rng) -> Flat:
    """Haar-random element of G(d,k) through the origin."""
    if not 1 <= k <= d:
        raise DomainError(f"need 1 <= k <= d, got d={d}, k={k}")
    q = _haar_orthogonal(d, rng)
    return Flat(d, k, q[:, :k].T.copy(), np.zeros(d))


def uniform_ball_point(n: int, radius: float, rng) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    g = rng.standard_normal(n)
    g /= np.linalg.norm(g)
    return radius * rng.uniform() ** (1.0 / n) * g


def sample_affine_flat_hitting(d: int, k: int, radius: float, rng):
    """Flat with Haar direction and foot uniform in the (d-k)-ball of the
    given radius inside the orthogonal complement, plus the importance
    weight making weighted averages estimate the mu-integral over flats
    hitting that ball.
    """
    if radius <= 0:
        raise DomainError("radius must be positive")
    if not 1 <= k <= d:
        raise DomainError(f"need 1 <= k <= d, got d={d}, k={k}")
    q = _haar_orthogonal(d, rng)
    basis = q[:, :k].T.copy()
    comp = q[:, k:]
    foot = comp @ uniform_ball_point(d - k, radius, rng)
    weight = grassmannian_mass(d, k) * kappa(d - k) * radius ** (d - k)
    return Flat(d, k, basis, foot), weight
