import struct

import numpy as np
import pytest

from exgeo.fieldsim import (FieldSample, Grid, dump_field, load_field,
                            restrict_to_flat, simulate)
from exgeo.flats import sample_linear_flat
from exgeo.util import rng_from


def test_determinism(gauss1):
    grid = Grid.for_window(1, 0.1, 5)
    a = simulate(gauss1, grid, 42)
    b = simulate(gauss1, grid, 42)
    assert np.array_equal(a.X, b.X)
    assert all(np.array_equal(x, y) for x, y in zip(a.gradient, b.gradient))
    assert all(np.array_equal(x, y) for x, y in zip(a.hessian, b.hessian))
    c = simulate(gauss1, grid, 43)
    assert not np.array_equal(a.X, c.X)


def test_marginal_statistics(field_batch_1d):
    # Cov(0) = 1, Corr at lag 1 = exp(-1/2), Var(X') = 1  (500 replicates)
    grid, samples = field_batch_1d
    i0 = (grid.n - 1) // 2
    lag = int(round(1.0 / grid.h))
    x0 = np.array([s.X[i0] for s in samples])
    x1 = np.array([s.X[i0 + lag] for s in samples])
    dx = np.array([s.gradient[0][i0] for s in samples])
    n = len(samples)
    assert abs(x0.mean()) < 3 / np.sqrt(n)
    assert abs(x0.var(ddof=1) - 1.0) < 0.13
    assert abs(np.corrcoef(x0, x1)[0, 1] - np.exp(-0.5)) < 0.05
    assert abs(dx.var(ddof=1) - 1.0) < 0.13


def test_derivative_consistency_sup_norm(gauss1):
    # centered differences of X reproduce the gradient to O(h^2); margin of
    # 3h excluded from the statistic
    grid = Grid.for_window(1, 0.1, 10)
    s = simulate(gauss1, grid, 7)
    fd = (s.X[2:] - s.X[:-2]) / (2 * grid.h)
    err = np.abs(fd - s.gradient[0][1:-1])[3:-3]
    assert err.max() < 0.02


def test_derivative_consistency_halving_ratio(gauss1):
    # same realization, finite differences at h and 2h: error ratio ~ 4
    grid = Grid.for_window(1, 0.05, 10)
    s = simulate(gauss1, grid, 99)
    g = s.gradient[0]
    fd_h = (s.X[2:] - s.X[:-2]) / (2 * grid.h)
    err_h = np.abs(fd_h - g[1:-1])[6:-6].max()
    fd_2h = (s.X[4:] - s.X[:-4]) / (4 * grid.h)
    err_2h = np.abs(fd_2h - g[2:-2])[6:-6].max()
    assert 2.5 < err_2h / err_h < 6.0


def test_hessian_consistency(gauss2):
    grid = Grid.for_window(2, 0.1, 4)
    s = simulate(gauss2, grid, 21)
    h = grid.h
    fd_xy = (s.X[2:, 2:] - s.X[2:, :-2] - s.X[:-2, 2:] + s.X[:-2, :-2]) / (4 * h * h)
    err = np.abs(fd_xy - s.hessian[1][1:-1, 1:-1])[3:-3, 3:-3]
    assert err.max() < 0.05


def test_average_periodogram_matches_spectral_density(gauss1):
    # Bartlett-averaged periodogram over 1000 replicates; resolvable band =
    # frequencies carrying >= 5% of the peak density (beyond that the Fejer
    # window leakage, not the sampler, dominates the steep Gaussian tail)
    grid = Grid.for_window(1, 0.1, 40)
    n, h = grid.n, grid.h
    reps = 1000
    acc = np.zeros(n)
    for r in range(reps):
        s = simulate(gauss1, grid, 20_000 + r)
        acc += np.abs(np.fft.fft(s.X)) ** 2
    per = acc / reps * h / (2 * np.pi * n)
    per = (np.roll(per, 1) + per + np.roll(per, -1)) / 3
    om = 2 * np.pi * np.fft.fftfreq(n, d=h)
    f = gauss1.spectral_density(np.abs(om))
    resolvable = (f >= 0.05 * f.max()) & (np.abs(om) < 0.6 * np.pi / h)
    rel = np.abs(per[resolvable] - f[resolvable]) / f[resolvable]
    assert np.max(rel) < 0.10


def test_restriction_preserves_law(gauss2):
    rng = rng_from(5, "restrict")
    flat = sample_linear_flat(2, 1, rng)
    grid1 = Grid.for_window(1, 0.1, 5)
    x0, x1 = [], []
    i0 = (grid1.n - 1) // 2
    lag = int(round(1.0 / grid1.h))
    for r in range(400):
        s = restrict_to_flat(gauss2, flat, grid1, 3_000 + r)
        x0.append(s.X[i0])
        x1.append(s.X[i0 + lag])
    x0, x1 = np.array(x0), np.array(x1)
    assert abs(x0.var(ddof=1) - 1.0) < 0.15
    assert abs(np.corrcoef(x0, x1)[0, 1] - np.exp(-0.5)) < 0.06


def test_restriction_rotation_invariance(gauss2):
    # zero counts of the restricted gradient agree in law across directions
    rng = rng_from(6, "rot")
    flat_a = sample_linear_flat(2, 1, rng)
    flat_b = sample_linear_flat(2, 1, rng)
    grid1 = Grid.for_window(1, 0.05, 5)
    counts = {0: [], 1: []}
    for idx, flat in enumerate((flat_a, flat_b)):
        for r in range(300):
            s = restrict_to_flat(gauss2, flat, grid1, 50_000 + 1000 * idx + r)
            g = s.gradient[0]
            counts[idx].append(np.count_nonzero(np.sign(g[1:]) != np.sign(g[:-1])))
    a, b = np.array(counts[0], float), np.array(counts[1], float)
    se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) < 3 * se


def test_dump_load_roundtrip(tmp_path, gauss2):
    grid = Grid.for_window(2, 0.2, 2)
    s = simulate(gauss2, grid, 17)
    path = tmp_path / "field.bin"
    dump_field(s, str(path))
    back = load_field(str(path))
    assert back.grid == s.grid
    assert back.seed == 17
    assert np.array_equal(back.X, s.X)
    assert all(np.array_equal(x, y) for x, y in zip(back.gradient, s.gradient))
    assert all(np.array_equal(x, y) for x, y in zip(back.hessian, s.hessian))
    # header layout: d, shape, h, seed as little-endian 64-bit words
    raw = path.read_bytes()
    d, n0, n1 = struct.unpack_from("<3q", raw, 0)
    h = struct.unpack_from("<d", raw, 24)[0]
    seed = struct.unpack_from("<q", raw, 32)[0]
    assert (d, n0, n1, h, seed) == (2, grid.n, grid.n, grid.h, 17)


def test_grid_ball_mask():
    grid = Grid.for_window(2, 0.5, 2)
    mask = grid.ball_mask(2.0)
    X, Y = grid.coords()
    assert np.array_equal(mask, X ** 2 + Y ** 2 < 4.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1, -0.1, 11)
    with pytest.raises(ValueError):
        Grid(1, 0.1, 1)
