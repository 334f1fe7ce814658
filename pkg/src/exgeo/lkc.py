"""Lipschitz-Killing curvatures of excursion sets: direct grid geometry,
Crofton/Morse counting over sampled flats, and the Dirac-sequence
approximation of the counting variable.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .covariance import NondegeneracyError
from .fieldsim import FieldSample, Grid
from .flats import grassmannian_mass, kappa, sample_affine_flat_hitting
from .util import rng_from, vech_pairs


@dataclass(frozen=True)
class ExcursionSet:
    grid: Grid
    u: float
    mask: np.ndarray

    def __post_init__(self):
        if self.mask.shape != self.grid.shape:
            raise ValueError("mask shape must equal grid shape")


def excursion_mask(sample: FieldSample, u: float) -> ExcursionSet:
    return ExcursionSet(sample.grid, u, sample.X >= u)


@dataclass(frozen=True)
class LKEstimate:
    m: int
    value: float
    estimator: str               # direct | crofton_morse | dirac_eps
    mc_std_error: Optional[float] = None
    flats_used: Optional[int] = None
    epsilon: Optional[float] = None
    suspect_cells: int = 0


# ---------------------------------------------------------------------------
# Euler characteristics of lattice sets
# ---------------------------------------------------------------------------

def euler_char_1d(mask) -> int:
    """Number of maximal runs of True (= chi of a finite union of intervals)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValueError("empty sequence")
    return int(mask[0]) + int(np.count_nonzero(mask[1:] & ~mask[:-1]))


def euler_char_nd(mask) -> int:
    """V - E + F (- C ...) of the cubical complex of closed pixel/voxel cells.

    A true cell contributes its closure, so each j-cell of the lattice is
    present iff any incident voxel is true; chi = sum_j (-1)^j N_j.
    """
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    padded = np.pad(mask, 1)
    chi = 0
    for ext in np.ndindex(*(2,) * d):
        cells = padded
        for axis, e in enumerate(ext):
            if e == 0:  # cell is a vertex along this axis: union of 2 neighbors
                idx_lo = [slice(None)] * d
                idx_hi = [slice(None)] * d
                idx_lo[axis] = slice(0, cells.shape[axis] - 1)
                idx_hi[axis] = slice(1, cells.shape[axis])
                cells = cells[tuple(idx_lo)] | cells[tuple(idx_hi)]
        chi += (-1) ** sum(ext) * int(np.count_nonzero(cells))
    return int(chi)


def euler_char_2d(mask) -> int:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("euler_char_2d expects a 2-d mask")
    return euler_char_nd(mask)


# ---------------------------------------------------------------------------
# Morse counting along flats
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MorseCount:
    value: int            # signed interior count (even minus odd Morse index of -X)
    suspects: int         # near-degenerate Hessian determinants encountered
    boundary_correction: int  # boundary-stratum contribution making value+corr = chi


def _morse_count_1d(x_axis, X, G, H, u, det_tol) -> MorseCount:
    s = np.where(G >= 0.0, 1.0, -1.0)  # exact zeros treated as positive
    change = s[:-1] * s[1:] < 0
    idx = np.nonzero(change)[0]
    value = 0
    suspects = 0
    h = x_axis[1] - x_axis[0]
    last = len(G) - 2
    for i in idx:
        frac = G[i] / (G[i] - G[i + 1])  # linear zero of the gradient
        # criticals sitting exactly on a window endpoint are boundary strata,
        # not interior points (a.s. absent for random fields)
        if (i == 0 and frac == 0.0) or (i == last and frac == 1.0):
            continue
        hv = H[i] + frac * (H[i + 1] - H[i])
        gv = G[i] + frac * (G[i + 1] - G[i])
        if hv != 0.0:
            frac = np.clip(frac - gv / hv / h, 0.0, 1.0)  # one Newton step
        xv = X[i] + frac * (X[i + 1] - X[i])
        hv = H[i] + frac * (H[i + 1] - H[i])
        if abs(hv) <= det_tol:
            suspects += 1
        if xv >= u:
            value += 1 if hv < 0 else -1
    corr = int(X[0] >= u and G[0] < 0) + int(X[-1] >= u and G[-1] > 0)
    return MorseCount(value, suspects, corr)


def critical_cell_degrees(G1, G2):
    """Topological degree of the gradient field around each grid cell: the
    winding number of (G1, G2) along the counterclockwise cell boundary.
    Nonzero degree flags a zero inside; its sign is sign(det D^2 X) there.
    """
    # exact node zeros (measure zero for random fields, common in synthetic
    # inputs) are tie-broken as positive
    tiny = 1e-300
    G1 = np.where(G1 == 0.0, tiny, G1)
    G2 = np.where(G2 == 0.0, tiny, G2)
    theta = np.arctan2(G2, G1)

    def wrap(a):
        return (a + np.pi) % (2.0 * np.pi) - np.pi

    total = (wrap(theta[1:, :-1] - theta[:-1, :-1])
             + wrap(theta[1:, 1:] - theta[1:, :-1])
             + wrap(theta[:-1, 1:] - theta[1:, 1:])
             + wrap(theta[:-1, :-1] - theta[:-1, 1:]))
    return np.rint(total / (2.0 * np.pi)).astype(int)


def _morse_count_2d(sample: FieldSample, window, u, det_tol) -> MorseCount:
    X = sample.X
    G1, G2 = sample.gradient
    H = sample.hessian  # vech order (0,0),(0,1),(1,1)
    inside = window[:-1, :-1] & window[1:, :-1] & window[:-1, 1:] & window[1:, 1:]
    deg = critical_cell_degrees(G1, G2)
    value = 0
    suspects = 0
    h = sample.grid.h
    for i, j in zip(*np.nonzero(inside & (deg != 0))):
        # one Newton step from the cell center toward the zero
        g = np.array([np.mean(G1[i:i + 2, j:j + 2]), np.mean(G2[i:i + 2, j:j + 2])])
        hm = np.array([[np.mean(H[0][i:i + 2, j:j + 2]), np.mean(H[1][i:i + 2, j:j + 2])],
                       [np.mean(H[1][i:i + 2, j:j + 2]), np.mean(H[2][i:i + 2, j:j + 2])]])
        det = hm[0, 0] * hm[1, 1] - hm[0, 1] * hm[1, 0]
        if abs(det) <= det_tol:
            suspects += 1
        fi, fj = 0.5, 0.5
        if det != 0.0:
            step = np.linalg.solve(hm, g) / h
            fi = np.clip(0.5 - step[0], 0.0, 1.0)
            fj = np.clip(0.5 - step[1], 0.0, 1.0)
        xv = ((1 - fi) * (1 - fj) * X[i, j] + fi * (1 - fj) * X[i + 1, j]
              + (1 - fi) * fj * X[i, j + 1] + fi * fj * X[i + 1, j + 1])
        if xv >= u:
            # degree = sign(det D^2 X) = Morse parity contribution for k = 2
            value += int(deg[i, j])
    return MorseCount(value, suspects, 0)


def zeta_morse(sample: FieldSample, window, u: float, mu4: float = 3.0):
    """Signed count of interior critical points of X restricted to the flat:
    +1 for even tangential Morse index of -X, -1 for odd, among points with
    X >= u.  Boundary strata: for k=1 the exact endpoint correction is
    returned alongside; for k=2 boundary criticals are excluded.
    """
    k = sample.grid.d
    det_tol = 1e-9 * mu4 ** (k / 2.0)
    if k == 1:
        w = np.asarray(window, dtype=bool)
        idx = np.nonzero(w)[0]
        if idx.size < 2:
            return MorseCount(0, 0, 0)
        sl = slice(idx[0], idx[-1] + 1)
        return _morse_count_1d(sample.grid.axis[sl], sample.X[sl],
                               sample.gradient[0][sl], sample.hessian[0][sl],
                               u, det_tol)
    if k == 2:
        return _morse_count_2d(sample, np.asarray(window, dtype=bool), u, det_tol)
    raise NotImplementedError("zeta_morse supports flat dimensions 1 and 2")


def zeta_epsilon(sample: FieldSample, window, u: float, eps: float) -> float:
    """Dirac-sequence approximation: (-1)^k Riemann sum of
    delta_eps(grad) 1{X>=u} det(D^2 X) over the window, with the indicator
    kernel delta_eps = 1{|grad|<=eps} / (eps^k kappa_k)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    k = sample.grid.d
    h = sample.grid.h
    if eps < h:
        warnings.warn(f"eps={eps} below grid spacing h={h}: kernel unresolved")
    w = np.asarray(window, dtype=bool)
    grad2 = sum(g * g for g in sample.gradient)
    if k == 1:
        det = sample.hessian[0]
    elif k == 2:
        det = sample.hessian[0] * sample.hessian[2] - sample.hessian[1] ** 2
    else:
        raise NotImplementedError("zeta_epsilon supports flat dimensions 1 and 2")
    fire = w & (grad2 <= eps * eps) & (sample.X >= u)
    dens = 1.0 / (eps ** k * kappa(k))
    return float((-1) ** k * h ** k * dens * np.sum(det[fire]))


# ---------------------------------------------------------------------------
# interpolation of grid data along lines
# ---------------------------------------------------------------------------

def _multilinear(values, grid: Grid, pts):
    """Multilinear interpolation of a grid array at points (npts, d)."""
    d = grid.d
    f = pts / grid.h + (grid.n - 1) / 2.0
    i0 = np.clip(np.floor(f).astype(int), 0, grid.n - 2)
    w = f - i0
    out = np.zeros(len(pts))
    for corner in np.ndindex(*(2,) * d):
        wt = np.ones(len(pts))
        idx = []
        for ax, c in enumerate(corner):
            wt = wt * (w[:, ax] if c else (1.0 - w[:, ax]))
            idx.append(i0[:, ax] + c)
        out += wt * values[tuple(idx)]
    return out


def _line_points(foot, direction, N, h):
    """Sample points of the chord (foot + s*direction) inside B_N, spacing h."""
    p2 = float(np.dot(foot, foot))
    if p2 >= N * N:
        return None, None
    smax = np.sqrt(N * N - p2)
    j = int(np.floor(smax / h))
    s = np.arange(-j, j + 1) * h
    return s, foot + s[:, None] * direction


def _runs(mask_line) -> int:
    if mask_line.size == 0:
        return 0
    return int(mask_line[0]) + int(np.count_nonzero(mask_line[1:] & ~mask_line[:-1]))


# ---------------------------------------------------------------------------
# Crofton estimators
# ---------------------------------------------------------------------------

def crofton_lkc(values, grid: Grid, m: int, u: float, N: float, n_flats: int,
                rng, method: str = "runs", gradient=None, hessian=None,
                eps: float = None) -> LKEstimate:
    """LK_m of {values >= u} inside B_N by weighted Monte Carlo over flats.

    values is a scalar field sampled on the grid (a smooth field or a 0/1
    mask).  k = d - m flats: the degenerate ends (m = 0 whole window, m = d
    volume) are computed directly; k = 1 uses chi along interpolated lines,
    counted either as threshold runs ('runs'), by the Morse counting
    variable plus its boundary-stratum correction ('morse'), or by the
    Dirac-kernel integral ('dirac', requires derivative arrays and eps).
    """
    d = grid.d
    if not 0 <= m <= d:
        raise ValueError(f"need 0 <= m <= d, got m={m}")
    if n_flats < 1:
        raise ValueError("n_flats must be >= 1")
    ball = grid.ball_mask(N)
    mask = (np.asarray(values) >= u) & ball
    if m == 0:
        # nu(G(d,d)) = 1: single flat = R^d, chi of the windowed excursion
        return LKEstimate(0, float(euler_char_nd(mask)), "crofton_morse",
                          mc_std_error=0.0, flats_used=None)
    if m == d:
        return LKEstimate(m, float(np.count_nonzero(mask)) * grid.h ** d, "direct")
    k = d - m
    if k != 1:
        raise NotImplementedError(f"crofton flats of dimension {k} unsupported "
                                  f"(d={d}, m={m})")

    w0 = grassmannian_mass(d, 1) * kappa(d - 1) * N ** (d - 1)
    vals = np.empty(n_flats)
    suspects = 0
    for i in range(n_flats):
        flat, _ = sample_affine_flat_hitting(d, 1, N, rng)
        v = flat.basis[0]
        s, pts = _line_points(flat.foot, v, N, grid.h)
        if s is None or len(s) < 2:
            vals[i] = 0.0
            continue
        if method == "runs":
            line = _multilinear(values, grid, pts)
            chi = _runs(line >= u)
        elif method == "morse":
            line = _multilinear(values, grid, pts)
            g = sum(v[a] * _multilinear(gradient[a], grid, pts) for a in range(d))
            hh = np.zeros(len(s))
            for a, (p, q) in enumerate(vech_pairs(d)):
                coef = (2.0 if p != q else 1.0) * v[p] * v[q]
                hh += coef * _multilinear(hessian[a], grid, pts)
            mc = _morse_count_1d(s, line, g, hh, u, 1e-9 * 3.0 ** 0.5)
            suspects += mc.suspects
            chi = mc.value + mc.boundary_correction
        elif method == "dirac":
            line = _multilinear(values, grid, pts)
            g = sum(v[a] * _multilinear(gradient[a], grid, pts) for a in range(d))
            hh = np.zeros(len(s))
            for a, (p, q) in enumerate(vech_pairs(d)):
                coef = (2.0 if p != q else 1.0) * v[p] * v[q]
                hh += coef * _multilinear(hessian[a], grid, pts)
            fire = (np.abs(g) <= eps) & (line >= u)
            chi = -grid.h / (2.0 * eps) * np.sum(hh[fire])
        else:
            raise ValueError(f"unknown method {method!r}")
        vals[i] = w0 * chi
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_flats)) if n_flats > 1 else 0.0
    tag = {"runs": "crofton_morse", "morse": "crofton_morse", "dirac": "dirac_eps"}[method]
    return LKEstimate(m, est, tag, mc_std_error=se, flats_used=n_flats,
                      epsilon=eps, suspect_cells=suspects)


# ---------------------------------------------------------------------------
# direct lattice estimators
# ---------------------------------------------------------------------------

def crack_boundary_length(mask, h: float) -> float:
    """Total length of lattice faces between true and false cells (the
    staircase boundary), counting the array border against false."""
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    faces = 0
    for ax in range(m.ndim):
        a = np.swapaxes(m, 0, ax)
        faces += np.count_nonzero(a[1:] ^ a[:-1])
    return faces * h ** (np.asarray(mask).ndim - 1)


def direct_lk_2d(mask, h: float, m: int) -> float:
    """Direct lattice LK of a 2-d set: m=2 area, m=1 half boundary length
    (pi/4-weighted crack count, unbiased for isotropic boundaries), m=0 chi."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("expected a 2-d mask")
    if m == 2:
        return float(np.count_nonzero(mask)) * h * h
    if m == 1:
        return 0.5 * (np.pi / 4.0) * crack_boundary_length(mask, h)
    if m == 0:
        return float(euler_char_2d(mask))
    raise ValueError(f"m={m} out of range for d=2")


def direct_lk_1d(mask, h: float, m: int) -> float:
    mask = np.asarray(mask, dtype=bool)
    if m == 1:
        return float(np.count_nonzero(mask)) * h
    if m == 0:
        return float(euler_char_1d(mask))
    raise ValueError(f"m={m} out of range for d=1")


def direct_lk_3d(mask, h: float, m: int) -> float:
    mask = np.asarray(mask, dtype=bool)
    if m == 3:
        return float(np.count_nonzero(mask)) * h ** 3
    if m == 0:
        return float(euler_char_nd(mask))
    raise ValueError("direct d=3 supports m in {0, 3}; use crofton for m=2")
