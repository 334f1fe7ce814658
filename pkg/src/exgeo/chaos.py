"""Hermite calculus and the chaos machinery: expansion coefficients c(n) and
b(k), the generalized Mehler expectation, Wick moments, and the Arcones
covariance bound.
"""

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.stats import norm

from .covariance import CovarianceModel, SigmaMatrix, build_sigma
from .util import rng_from, sym_from_vech

MEHLER_ORDER_LIMIT = 12
WICK_ORDER_LIMIT = 16


def hermite(k: int, x):
    """Probabilists' Hermite polynomial H_k via the three-term recurrence."""
    if k < 0:
        raise ValueError("order must be nonnegative")
    x = np.asarray(x, dtype=float)
    hm, h = np.zeros_like(x), np.ones_like(x)
    for j in range(k):
        hm, h = h, x * h - j * hm
    return h if np.ndim(x) else float(h)


def hermite_table(kmax: int, x):
    """All H_0..H_kmax at once; shape (kmax+1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    for j in range(1, kmax):
        out[j + 1] = x * out[j] - j * out[j - 1]
    return out


def hermite_multi(n, x):
    """Tensor Hermite polynomial prod_i H_{n_i}(x_i); x shape (..., D)."""
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape[:-1])
    for i, k in enumerate(n):
        out = out * hermite(k, x[..., i])
    return out


def hermite_at_zero(k: int) -> float:
    """H_k(0): zero for odd k, (-1)^(k/2) (k-1)!! for even k."""
    if k < 0:
        raise ValueError("order must be nonnegative")
    if k % 2 == 1:
        return 0.0
    val = 1.0
    for j in range(1, k, 2):
        val *= j
    return (-1) ** (k // 2) * val


def multi_indices(D: int, q: int):
    """All n in N^D with |n| = q, lexicographic."""
    if D == 1:
        yield (q,)
        return
    for first in range(q, -1, -1):
        for rest in multi_indices(D - 1, q - first):
            yield (first,) + rest


def multinomial_orbit_size(n) -> int:
    """|A_n| = q!/prod n_i!: number of position multi-indices k with histogram n."""
    q = sum(n)
    size = factorial(q)
    for ni in n:
        size //= factorial(ni)
    return size


# ---------------------------------------------------------------------------
# expansion coefficients
# ---------------------------------------------------------------------------

def _z_integral(sigma: SigmaMatrix, u: float, n_tail, gh_nodes: int = 48,
                qmc_seed: int = 0):
    """Gaussian integral Z(n) over the (Hessian, field) block with the field
    coordinate integrated analytically.

    The integrand det(sym(L y)) prod H(y) is smooth once the level indicator
    is replaced by its conditional integral: for the last slot of order p,
    int_{alpha z >= u - <l,y>} H_p(z) phi(z) dz = H_{p-1}(a) phi(a) with
    a = (u - <l,y>)/alpha (survival function for p = 0).
    """
    K = sigma.K
    L, l, alpha = sigma.L, sigma.l, sigma.alpha
    n_hess, n_last = n_tail[:K], n_tail[K]
    k = sigma.k

    def integrand(y):  # y shape (npts, K)
        vec = y @ L.T
        mats = sym_from_vech(vec, k)
        det = np.linalg.det(mats) if k > 1 else vec[:, 0]
        a = (u - y @ l) / alpha
        if n_last == 0:
            last = norm.sf(a)
        else:
            last = hermite(n_last - 1, a) * norm.pdf(a)
        herm = np.ones(len(y))
        for i, p in enumerate(n_hess):
            if p:
                herm = herm * hermite(p, y[:, i])
        return det * herm * last

    if K <= 3:
        xs, ws = np.polynomial.hermite_e.hermegauss(gh_nodes)
        ws = ws / np.sqrt(2.0 * np.pi)
        grids = np.meshgrid(*([xs] * K), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(len(pts))
        for g in np.meshgrid(*([ws] * K), indexing="ij"):
            wts = wts * g.ravel()

        def quad(nodes):
            if nodes == gh_nodes:
                return float(np.sum(wts * integrand(pts)))
            xs2, ws2 = np.polynomial.hermite_e.hermegauss(nodes)
            ws2 = ws2 / np.sqrt(2.0 * np.pi)
            g2 = np.meshgrid(*([xs2] * K), indexing="ij")
            p2 = np.stack([g.ravel() for g in g2], axis=-1)
            w2 = np.ones(len(p2))
            for g in np.meshgrid(*([ws2] * K), indexing="ij"):
                w2 = w2 * g.ravel()
            return float(np.sum(w2 * integrand(p2)))

        val = quad(gh_nodes)
        err = abs(val - quad(gh_nodes // 2))
        return val, err, "gauss-hermite"

    # K >= 4: scrambled Sobol, 8 independent scrambles of 2^17 points
    from scipy.stats import qmc
    reps = []
    for rep in range(8):
        sob = qmc.Sobol(d=K, scramble=True, seed=qmc_seed + rep)
        uu = sob.random(2 ** 17)
        y = norm.ppf(np.clip(uu, 1e-15, 1 - 1e-15))
        reps.append(float(np.mean(integrand(y))))
    reps = np.asarray(reps)
    return float(reps.mean()), float(reps.std(ddof=1) / np.sqrt(len(reps))), "qmc-sobol"


def coefficient_c(n, sigma: SigmaMatrix, u: float, gh_nodes: int = 48):
    """Chaos coefficient c(n) with standard error of the quadrature.

    Vanishes exactly (short-circuit) when any entry of the gradient block is
    odd, since H_odd(0) = 0 in the prefactor.
    """
    n = tuple(int(v) for v in n)
    if len(n) != sigma.D:
        raise ValueError(f"multi-index length {len(n)} != D = {sigma.D}")
    k = sigma.k
    if any(ni % 2 == 1 for ni in n[:k]):
        return 0.0, 0.0
    pre = (2.0 * np.pi) ** (-k / 2.0)
    for ni in n[:k]:
        pre *= hermite_at_zero(ni) / factorial(ni)
    pre *= (-1.0) ** k
    for ni in n[k:]:
        pre /= factorial(ni)
    import hashlib
    raw = repr(("c", sigma.d, sigma.m, round(u, 12), n)).encode()
    seed = int.from_bytes(hashlib.blake2b(raw, digest_size=4).digest(), "little")
    z, z_err, _ = _z_integral(sigma, u, n[k:], gh_nodes=gh_nodes, qmc_seed=seed)
    value, err = pre * z, abs(pre) * z_err
    if err > 0.1 * (abs(value) + 1e-6):
        import warnings
        warnings.warn(f"c({n}): quadrature error {err:.2e} above 10% of |value|")
    return float(value), float(err)


def c_e_D_closed_form(sigma: SigmaMatrix, u: float) -> float:
    """(2 pi)^{-k/2} alpha H_k(u) phi(u): the coefficient of the pure-field
    first-order index, in closed form."""
    k = sigma.k
    return ((2.0 * np.pi) ** (-k / 2.0) * sigma.alpha
            * float(hermite(k, u)) * float(norm.pdf(u)))


@dataclass
class ChaosTable:
    model_name: str
    d: int
    m: int
    u: float
    sigma: SigmaMatrix
    max_order: int = 0
    coefficients: dict = field(default_factory=dict)  # n -> (value, std_error)

    @classmethod
    def build(cls, model: CovarianceModel, d: int, m: int, u: float,
              max_order: int, gh_nodes: int = 48):
        table = cls(model.name, d, m, u, build_sigma(model, d, m))
        table.ensure_order(max_order, gh_nodes=gh_nodes)
        return table

    @property
    def D(self) -> int:
        return self.sigma.D

    def ensure_order(self, q: int, gh_nodes: int = 48):
        for order in range(self.max_order + 1, q + 1):
            for n in multi_indices(self.D, order):
                self.coefficients[n] = coefficient_c(
                    n, self.sigma, self.u, gh_nodes=gh_nodes)
        self.max_order = max(self.max_order, q)

    def c(self, n):
        n = tuple(n)
        if n not in self.coefficients:
            self.coefficients[n] = coefficient_c(n, self.sigma, self.u)
        return self.coefficients[n]

    def save_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["d", "m", "u", "model", "n", "value", "std_error", "method"])
            for n in sorted(self.coefficients):
                v, e = self.coefficients[n]
                wr.writerow([self.d, self.m, repr(self.u), self.model_name,
                             "-".join(map(str, n)), repr(v), repr(e),
                             "gauss-hermite" if self.sigma.K <= 3 else "qmc-sobol"])

    @classmethod
    def load_csv(cls, path: str, model: CovarianceModel):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        first = rows[0]
        d, m, u = int(first["d"]), int(first["m"]), float(first["u"])
        table = cls(first["model"], d, m, u, build_sigma(model, d, m))
        for row in rows:
            n = tuple(int(s) for s in row["n"].split("-"))
            table.coefficients[n] = (float(row["value"]), float(row["std_error"]))
        table.max_order = max(sum(n) for n in table.coefficients)
        return table


def coefficients_b(q: int, table: ChaosTable) -> dict:
    """b(k) for sorted representatives k in {1..D}^q: c(n)/|A_n| where n is
    the histogram of k; symmetric under permutations by construction."""
    out = {}
    for n in multi_indices(table.D, q):
        if n not in table.coefficients:
            raise KeyError(f"coefficient c({n}) not computed")
        rep = tuple(sorted(i + 1 for i in range(table.D) for _ in range(n[i])))
        out[rep] = table.coefficients[n][0] / multinomial_orbit_size(n)
    return out


def b_of(k_tuple, b_map) -> float:
    return b_map[tuple(sorted(k_tuple))]


# ---------------------------------------------------------------------------
# Mehler, Wick, Arcones
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _contingency_tables(col_sums, row_sums):
    """Nonnegative integer matrices with the given column and row sums."""
    D = len(col_sums)
    tables = []
    mat = np.zeros((D, D), dtype=int)

    def fill(j, rows_left):
        if j == D:
            if all(v == 0 for v in rows_left):
                tables.append(mat.copy())
            return
        target = col_sums[j]

        def fill_col(i, remaining):
            if i == D - 1:
                if remaining <= rows_left[i]:
                    mat[i, j] = remaining
                    fill(j + 1, tuple(r - mat[r_i, j] for r_i, r in enumerate(rows_left)))
                    mat[i, j] = 0
                return
            for v in range(min(remaining, rows_left[i]) + 1):
                mat[i, j] = v
                fill_col(i + 1, remaining - v)
                mat[i, j] = 0

        fill_col(0, target)

    fill(0, tuple(row_sums))
    return tuple(tuple(tuple(row) for row in t) for t in tables)


def mehler_expectation(n, n_prime, r):
    """E[H~_n(V) H~_n'(W)] for jointly Gaussian standard vectors with cross
    covariance r_ij = E[V_i W_j']: zero unless |n| = |n'|, else the sum over
    integer matrices with column sums n and row sums n' of
    n! n'! prod r_ij^d_ij / d_ij!.

    r may carry leading batch dimensions (..., D, D).
    """
    n, n_prime = tuple(map(int, n)), tuple(map(int, n_prime))
    if sum(n) != sum(n_prime):
        return 0.0
    if sum(n) > MEHLER_ORDER_LIMIT:
        raise ValueError(f"|n| = {sum(n)} exceeds the complexity guard "
                         f"({MEHLER_ORDER_LIMIT})")
    r = np.asarray(r, dtype=float)
    D = len(n)
    const = float(np.prod([factorial(v) for v in n])
                  * np.prod([factorial(v) for v in n_prime]))
    batch = r.shape[:-2]
    total = np.zeros(batch)
    # tables pair copies of V_i with copies of W_j: row sums = n, column
    # sums = n', factor r[i, j]^{d_ij}
    for table in _contingency_tables(n_prime, n):
        term = np.ones(batch)
        denom = 1.0
        for i in range(D):
            for j in range(D):
                dij = table[i][j]
                if dij:
                    term = term * r[..., i, j] ** dij
                    denom *= factorial(dij)
        total = total + term / denom
    out = const * total
    return float(out) if out.ndim == 0 else out


def wick_moment(cov) -> float:
    """E[Z_1 ... Z_p] for centered jointly Gaussian Z: sum over perfect
    pairings of products of covariances (zero for odd p)."""
    cov = np.asarray(cov, dtype=float)
    p = cov.shape[0]
    if p > WICK_ORDER_LIMIT:
        raise ValueError(f"p = {p} exceeds the complexity guard ({WICK_ORDER_LIMIT})")
    if p % 2 == 1:
        return 0.0

    def rec(active):
        if not active:
            return 1.0
        i, rest = active[0], active[1:]
        return sum(cov[i, j] * rec(tuple(v for v in rest if v != j)) for j in rest)

    return float(rec(tuple(range(p))))


def arcones_tau(r) -> float:
    """max over rows and columns of the absolute sums of the cross-covariance
    matrix; the dependence coefficient in the Arcones bound."""
    r = np.asarray(r, dtype=float)
    return float(max(np.abs(r).sum(axis=1).max(), np.abs(r).sum(axis=0).max()))


def arcones_bound_check(h, r, rank: int, n_mc: int = 200_000, seed: int = 0,
                        slack_se: float = 3.0) -> bool:
    """Monte Carlo check of |Cov(h(V), h(W))| <= tau^rank E[h(V)^2] for the
    jointly Gaussian pair with unit marginals and cross covariance r."""
    r = np.asarray(r, dtype=float)
    tau = arcones_tau(r)
    if tau >= 1.0:
        raise ValueError("tau >= 1: Arcones bound inapplicable")
    D = r.shape[0]
    joint = np.block([[np.eye(D), r], [r.T, np.eye(D)]])
    chol = np.linalg.cholesky(joint + 1e-12 * np.eye(2 * D))
    rng = rng_from(seed, "arcones")
    z = rng.standard_normal((n_mc, 2 * D)) @ chol.T
    hv, hw = h(z[:, :D]), h(z[:, D:])
    cov = np.mean((hv - hv.mean()) * (hw - hw.mean()))
    se = np.std((hv - hv.mean()) * (hw - hw.mean()), ddof=1) / np.sqrt(n_mc)
    bound = tau ** rank * np.mean(hv ** 2)
    return bool(abs(cov) <= bound + slack_se * se)


def chaos_variance_per_order(table: ChaosTable, q: int) -> float:
    """sum over |n| = q of c(n)^2 n!: the order-q variance of the pointwise
    expansion (E[h_q(Y)^2])."""
    total = 0.0
    for n in multi_indices(table.D, q):
        v, _ = table.c(n)
        if v != 0.0:
            total += v * v * float(np.prod([factorial(x) for x in n]))
    return total
