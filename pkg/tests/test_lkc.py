import numpy as np
import pytest

from exgeo.fieldsim import FieldSample, Grid, simulate
from exgeo.lkc import (crofton_lkc, direct_lk_2d, euler_char_1d, euler_char_2d,
                       euler_char_nd, excursion_mask, zeta_epsilon, zeta_morse)
from exgeo.util import rng_from


def analytic_sample_1d(lo, hi, h, f, f1, f2):
    n = int(round((hi - lo) / h)) + 1
    if n % 2 == 0:
        n += 1
    g = Grid(1, h, n)
    t = g.axis - g.axis[0] + lo
    return FieldSample(g, f(t), [f1(t)], [f2(t)], 0), t


@pytest.fixture(scope="module")
def disk_grid():
    h = 0.02
    grid = Grid.for_window(2, h, 5.6)
    X, Y = grid.coords()
    vals = 5.0 - np.sqrt(X ** 2 + Y ** 2)
    return grid, vals, h


# ---------------------------------------------------------------------------
# Euler characteristics
# ---------------------------------------------------------------------------

def test_euler_char_1d_examples():
    assert euler_char_1d([False, True, True, False, True]) == 2
    assert euler_char_1d([False] * 4) == 0
    assert euler_char_1d([True] * 4) == 1
    with pytest.raises(ValueError):
        euler_char_1d([])


def test_euler_char_2d_examples():
    single = np.zeros((4, 4), bool)
    single[1, 1] = True
    assert euler_char_2d(single) == 1

    blocks = np.zeros((8, 8), bool)
    blocks[1:3, 1:3] = True
    blocks[5:7, 5:7] = True
    assert euler_char_2d(blocks) == 2

    ring = np.zeros((5, 5), bool)
    ring[1:4, 1:4] = True
    ring[2, 2] = False
    assert euler_char_2d(ring) == 0

    assert euler_char_2d(np.ones((6, 6), bool)) == 1


def test_euler_char_2d_diagonal_touching():
    # closed-cell convention: diagonal pixels share a vertex, chi = 1
    diag = np.zeros((4, 4), bool)
    diag[1, 1] = diag[2, 2] = True
    assert euler_char_2d(diag) == 1


def test_euler_char_3d():
    cube = np.zeros((4, 4, 4), bool)
    cube[1:3, 1:3, 1:3] = True
    assert euler_char_nd(cube) == 1
    shell = np.zeros((6, 6, 6), bool)
    shell[1:5, 1:5, 1:5] = True
    shell[2:4, 2:4, 2:4] = False
    assert euler_char_nd(shell) == 2


# ---------------------------------------------------------------------------
# Morse counting
# ---------------------------------------------------------------------------

def test_zeta_morse_cos_example():
    # cos on [0, 6.5], u=0: interior criticals pi (min, below level) and
    # 2 pi (max, above level) -> +1
    s, _ = analytic_sample_1d(0.0, 6.5, 0.001, np.cos,
                              lambda t: -np.sin(t), lambda t: -np.cos(t))
    mc = zeta_morse(s, np.ones(s.grid.n, bool), 0.0)
    assert mc.value == 1
    assert mc.suspects == 0


def test_zeta_morse_monotone_slice():
    g = Grid(1, 0.01, 101)
    x = g.axis
    s = FieldSample(g, x.copy(), [np.ones_like(x)], [np.zeros_like(x)], 0)
    assert zeta_morse(s, np.ones(101, bool), -5.0).value == 0


def test_zeta_morse_equals_run_count_after_boundary_correction(gauss1):
    grid = Grid.for_window(1, 0.02, 5)
    win = grid.ball_mask(5.0)
    agree = 0
    for rep in range(500):
        s = simulate(gauss1, grid, 3000 + rep)
        mc = zeta_morse(s, win, 1.0)
        chi = euler_char_1d((s.X >= 1.0) & win)
        agree += int(mc.value + mc.boundary_correction == chi)
    assert agree / 500 >= 0.99


def test_zeta_morse_2d_product_cos():
    # cos(x) cos(y) on [-2.5, 2.5]^2: interior criticals are the max at the
    # origin (+1) and four saddles at (+-pi/2, +-pi/2) (-1 each, on the level)
    h = 0.01
    g = Grid(2, h, 501)
    X, Y = g.coords()
    f = np.cos(X) * np.cos(Y)
    gx = -np.sin(X) * np.cos(Y)
    gy = -np.cos(X) * np.sin(Y)
    hxx = -f
    hxy = np.sin(X) * np.sin(Y)
    hyy = -f
    s = FieldSample(g, f, [gx, gy], [hxx, hxy, hyy], 0)
    win = np.ones(g.shape, bool)
    assert zeta_morse(s, win, 0.0).value == -3
    assert zeta_morse(s, win, 0.5).value == 1


# ---------------------------------------------------------------------------
# Dirac approximation
# ---------------------------------------------------------------------------

def test_zeta_epsilon_zero_when_gradient_large():
    g = Grid(1, 0.01, 201)
    x = g.axis
    s = FieldSample(g, x.copy(), [np.ones_like(x)], [np.zeros_like(x)], 0)
    assert zeta_epsilon(s, np.ones(201, bool), -10.0, 0.05) == 0.0


def test_zeta_epsilon_cos_example():
    # stated for [0.5, 6.0] in the source notes, but the only above-level
    # critical point is 2 pi = 6.283, so the window must reach past it;
    # [0.5, 6.5] matches the companion Morse example
    s, _ = analytic_sample_1d(0.5, 6.5, 0.001, np.cos,
                              lambda t: -np.sin(t), lambda t: -np.cos(t))
    val = zeta_epsilon(s, np.ones(s.grid.n, bool), 0.0, 0.05)
    assert abs(val - 1.0) < 0.1


def test_zeta_epsilon_resolution_warning(gauss1):
    grid = Grid.for_window(1, 0.1, 2)
    s = simulate(gauss1, grid, 1)
    with pytest.warns(UserWarning, match="unresolved"):
        zeta_epsilon(s, np.ones(grid.n, bool), 0.0, 0.05)


def test_zeta_epsilon_converges_to_morse(gauss1):
    grid = Grid.for_window(1, 0.0025, 5)
    win = grid.ball_mask(5.0)
    diffs = {0.4: [], 0.2: [], 0.1: []}
    vals_eps, vals_morse = [], []
    for rep in range(120):
        s = simulate(gauss1, grid, 5000 + rep)
        mc = zeta_morse(s, win, 0.5)
        for eps in diffs:
            diffs[eps].append(abs(zeta_epsilon(s, win, 0.5, eps) - mc.value))
        vals_eps.append(zeta_epsilon(s, win, 0.5, 0.1))
        vals_morse.append(mc.value)
    means = [np.mean(diffs[e]) for e in (0.4, 0.2, 0.1)]
    assert means[0] > means[1] > means[2]
    corr = np.corrcoef(vals_eps, vals_morse)[0, 1]
    assert corr > 0.95


# ---------------------------------------------------------------------------
# direct and Crofton estimators
# ---------------------------------------------------------------------------

def test_direct_disk(disk_grid):
    grid, vals, h = disk_grid
    mask = vals >= 0
    assert abs(direct_lk_2d(mask, h, 2) - 25 * np.pi) / (25 * np.pi) < 0.005
    assert abs(direct_lk_2d(mask, h, 1) - 5 * np.pi) / (5 * np.pi) < 0.01
    assert direct_lk_2d(mask, h, 0) == 1.0


def test_direct_full_window():
    assert direct_lk_2d(np.ones((50, 50), bool), 0.1, 0) == 1.0


def test_crofton_disk(disk_grid):
    grid, vals, h = disk_grid
    rng = rng_from(1, "disk-crofton")
    est = crofton_lkc(vals, grid, 1, 0.0, 5.5, 20_000, rng)
    assert est.mc_std_error > 0
    assert abs(est.value - 5 * np.pi) < 4 * est.mc_std_error
    assert abs(est.value - 5 * np.pi) / (5 * np.pi) < 0.02


def test_crofton_m0_and_empty(disk_grid):
    grid, vals, h = disk_grid
    rng = rng_from(2, "m0")
    est = crofton_lkc(vals, grid, 0, 0.0, 5.5, 10, rng)
    assert est.value == 1.0 and est.mc_std_error == 0.0
    # u -> +infinity: empty excursion, every estimator returns 0 exactly
    for m in (0, 1, 2):
        est = crofton_lkc(vals, grid, m, 1e9, 5.5, 10, rng)
        assert est.value == 0.0


def test_crofton_volume(disk_grid):
    grid, vals, h = disk_grid
    rng = rng_from(3, "vol")
    est = crofton_lkc(vals, grid, 2, 0.0, 5.5, 10, rng)
    assert abs(est.value - 25 * np.pi) / (25 * np.pi) < 0.005


def test_excursion_monotonicity(gauss2):
    grid = Grid.for_window(2, 0.1, 5)
    s = simulate(gauss2, grid, 77)
    m_low = excursion_mask(s, 0.2).mask
    m_high = excursion_mask(s, 0.8).mask
    assert np.all(m_high <= m_low)
    assert direct_lk_2d(m_high, grid.h, 2) <= direct_lk_2d(m_low, grid.h, 2)


def test_basis_invariance(gauss2):
    # two independent flat-sampling conventions give the same estimate
    # within 3 combined standard errors
    grid = Grid.for_window(2, 0.1, 8)
    s = simulate(gauss2, grid, 123)
    a = crofton_lkc(s.X, grid, 1, 0.0, 8.0, 3000, rng_from(1, "a"))
    b = crofton_lkc(s.X, grid, 1, 0.0, 8.0, 3000, rng_from(2, "b"))
    se = np.hypot(a.mc_std_error, b.mc_std_error)
    assert abs(a.value - b.value) < 3 * se


def test_estimator_reconciliation(gauss2):
    # direct vs crofton LK_1 means within 5% over replicates (u = 0, N = 8)
    grid = Grid.for_window(2, 0.1, 8)
    N = 8.0
    direct_vals, crof_vals = [], []
    for rep in range(120):
        s = simulate(gauss2, grid, 9000 + rep)
        mask = (s.X >= 0.0) & grid.ball_mask(N)
        direct_vals.append(direct_lk_2d(mask, grid.h, 1))
        est = crofton_lkc(s.X, grid, 1, 0.0, N, 250, rng_from(55, "rec", rep))
        crof_vals.append(est.value)
    d, c = np.mean(direct_vals), np.mean(crof_vals)
    assert abs(d - c) / d < 0.05
    assert abs(np.var(direct_vals) - np.var(crof_vals)) / np.var(direct_vals) < 0.25
