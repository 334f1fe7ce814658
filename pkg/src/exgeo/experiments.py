"""Monte Carlo harness for the central limit theorem: replicated LK values
over growing windows, standardization, normality diagnostics, and checks
against the asymptotic-variance lower bound."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import kurtosis, norm, skew
from statsmodels.stats.diagnostic import lilliefors

from .covariance import CovarianceModel, get_model
from .fieldsim import FieldSample, Grid, simulate
from .flats import kappa
from .lkc import (crofton_lkc, direct_lk_1d, direct_lk_2d, direct_lk_3d,
                  euler_char_nd, zeta_epsilon, zeta_morse)
from .util import rng_from
from .variance import lower_bound


class DegenerateSampleError(ValueError):
    pass


class InsufficientSampleError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model_name: str = "gaussian"
    d: int = 1
    m_list: tuple = (0,)
    u_list: tuple = (1.0,)
    N_list: tuple = (10.0, 20.0)
    h: float = 0.05
    replicates: int = 200
    n_flats: int = 400
    epsilons: tuple = (0.4, 0.2, 0.1)
    dirac_epsilon: float = 0.2
    seed: int = 20240817
    estimator: str = "direct"    # direct | crofton | dirac
    threads: int = 1

    def validate(self):
        if self.replicates < 50:
            raise InsufficientSampleError(
                f"normality diagnostics need >= 50 replicates, got {self.replicates}")
        if self.h > min(self.N_list) / 20.0:
            raise ValueError("grid spacing too coarse: need h <= min(N)/20")
        if any(m > self.d for m in self.m_list):
            raise ValueError("m cannot exceed d")
        if self.estimator not in ("direct", "crofton", "dirac"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        return self


def ball_volume(d: int, N: float) -> float:
    return kappa(d) * N ** d


# ---------------------------------------------------------------------------
# per-replicate estimators
# ---------------------------------------------------------------------------

def _estimate_cell(sample: FieldSample, m: int, u: float, N: float,
                   config: ExperimentConfig, rep: int):
    """(value, n_suspect) for one replicate of LK_m at level u in B_N."""
    d = sample.grid.d
    ball = sample.grid.ball_mask(N)
    mask = (sample.X >= u) & ball
    est = config.estimator
    if est == "direct" or (est == "crofton" and (m == 0 or m == d)) \
            or (est == "dirac" and m == d):
        if m == 0:
            return float(euler_char_nd(mask)), 0
        if d == 1:
            return direct_lk_1d(mask, sample.grid.h, m), 0
        if d == 2:
            return direct_lk_2d(mask, sample.grid.h, m), 0
        return direct_lk_3d(mask, sample.grid.h, m), 0
    if est == "dirac" and m == 0 and d - m <= 2:
        # full-window Dirac counting variable (single flat, weight 1)
        window = ball
        if d == 1:
            mc = zeta_morse(sample, window, u)
            val = zeta_epsilon(sample, window, u, config.dirac_epsilon)
            return float(val + mc.boundary_correction), mc.suspects
        return float(zeta_epsilon(sample, window, u, config.dirac_epsilon)), 0
    # flat-sampled estimators (k = d - m = 1 lines)
    rng = rng_from(config.seed, "flats", m, round(u, 12), round(N, 12), rep)
    method = "dirac" if est == "dirac" else "morse"
    lk = crofton_lkc(sample.X, sample.grid, m, u, N, config.n_flats, rng,
                     method=method, gradient=sample.gradient,
                     hessian=sample.hessian, eps=config.dirac_epsilon)
    return lk.value, lk.suspect_cells


def _simulate_rep(model, grid, config, N, rep):
    return simulate(model, grid, rng_seed_for(config.seed, N, rep))


def rng_seed_for(seed: int, N: float, rep: int) -> int:
    # distinct replicate streams; fed to fieldsim which hashes again
    return (int(seed) * 1_000_003 + int(round(N * 16)) * 7919 + rep) % (2 ** 62)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    n: int
    mean: float
    variance: float
    var_normalized: float
    ks_stat: Optional[float]
    ks_p: Optional[float]
    skewness: Optional[float]
    excess_kurtosis: Optional[float]
    degenerate: bool
    qq: Optional[list] = None


def normality_diagnostics(values, with_qq: bool = True) -> Diagnostics:
    """Lilliefors KS against the fitted normal, skewness, excess kurtosis,
    QQ pairs; rejects constant or short samples."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(values) < 50:
        raise InsufficientSampleError(f"need >= 50 finite values, got {len(values)}")
    if np.ptp(values) == 0.0:
        raise DegenerateSampleError("constant sample: no normality test possible")
    stat, p = lilliefors(values, dist="norm", pvalmethod="table")
    qq = None
    if with_qq:
        srt = np.sort(values)
        theo = norm.ppf((np.arange(1, len(values) + 1) - 0.5) / len(values))
        theo = theo * values.std(ddof=1) + values.mean()
        qq = list(zip(theo.tolist(), srt.tolist()))
    return Diagnostics(len(values), float(values.mean()), float(values.var(ddof=1)),
                       float("nan"), float(stat), float(p), float(skew(values)),
                       float(kurtosis(values)), False, qq)


def standardized_sample(values) -> np.ndarray:
    """Centered at the empirical mean, scaled to unit sample variance."""
    values = np.asarray(values, dtype=float)
    sd = values.std(ddof=1)
    if sd == 0:
        raise DegenerateSampleError("constant sample")
    return (values - values.mean()) / sd


def bootstrap_se_var(values, n_boot: int = 1000, seed: int = 0) -> float:
    """Bootstrap standard error of the sample variance."""
    values = np.asarray(values, dtype=float)
    rng = rng_from(seed, "boot", len(values))
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    return float(values[idx].var(ddof=1, axis=1).std(ddof=1))


# ---------------------------------------------------------------------------
# the experiment
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    d: int
    m: int
    u: float
    N: float
    values: np.ndarray
    rep_suspects: np.ndarray
    diagnostics: Optional[Diagnostics]
    degenerate: bool
    boot_se_varnorm: float

    @property
    def suspects(self) -> int:
        return int(self.rep_suspects.sum())

    @property
    def suspect_fraction(self) -> float:
        return float(np.count_nonzero(self.rep_suspects)) / max(1, len(self.values))

    @property
    def var_normalized(self) -> float:
        return float(self.values.var(ddof=1)) / ball_volume(self.d, self.N)

    def summary(self) -> dict:
        out = {
            "m": self.m, "u": self.u, "N": self.N, "replicates": len(self.values),
            "mean": float(self.values.mean()),
            "variance": float(self.values.var(ddof=1)),
            "var_normalized": self.var_normalized,
            "boot_se_varnorm": self.boot_se_varnorm,
            "suspects": self.suspects,
            "suspect_fraction": self.suspect_fraction,
            "degenerate": self.degenerate,
        }
        if self.diagnostics is not None:
            out.update({"ks_stat": self.diagnostics.ks_stat,
                        "ks_p": self.diagnostics.ks_p,
                        "skewness": self.diagnostics.skewness,
                        "excess_kurtosis": self.diagnostics.excess_kurtosis})
        return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)
    lower_bounds: dict = field(default_factory=dict)   # (m,u) -> value
    verdicts: dict = field(default_factory=dict)

    def cell(self, m, u, N) -> CellResult:
        for c in self.cells:
            if c.m == m and c.u == u and c.N == N:
                return c
        raise KeyError((m, u, N))


def run_clt(config: ExperimentConfig, model: CovarianceModel = None,
            quiet: bool = True) -> ExperimentResult:
    """Replicated LK estimates for every (m, u, N) cell of the config, with
    diagnostics and bound verdicts; deterministic in the config seed."""
    config.validate()
    if model is None:
        model = get_model(config.model_name, config.d)
    result = ExperimentResult(config)
    f0 = float(model.spectral_density(0.0))
    for m in config.m_list:
        for u in config.u_list:
            result.lower_bounds[(m, u)] = lower_bound(config.d, m, u, f0)

    for N in config.N_list:
        grid = Grid.for_window(config.d, config.h, N)
        reps = range(config.replicates)
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                samples = list(pool.map(
                    lambda r: _simulate_rep(model, grid, config, N, r), reps))
        else:
            samples = [_simulate_rep(model, grid, config, N, r) for r in reps]
        for m in config.m_list:
            for u in config.u_list:
                vals = np.empty(config.replicates)
                sus = np.zeros(config.replicates, dtype=int)
                for r, sample in enumerate(samples):
                    vals[r], sus[r] = _estimate_cell(sample, m, u, N, config, r)
                degenerate = bool(np.ptp(vals) == 0.0)
                diag = None
                if not degenerate:
                    diag = normality_diagnostics(vals, with_qq=True)
                boot = bootstrap_se_var(vals, seed=config.seed) / ball_volume(config.d, N)
                cell = CellResult(config.d, m, u, N, vals, sus, diag, degenerate, boot)
                result.cells.append(cell)
                if not quiet:
                    print(f"cell m={m} u={u} N={N}: mean={vals.mean():.4f} "
                          f"var/H^d={cell.var_normalized:.5f}")
        del samples
    _fill_verdicts(result)
    return result


def bound_check(cell: CellResult, lb: float) -> dict:
    """Pass iff empirical Var/H^d >= 0.9 * lower_bound - 2 * bootstrap SE."""
    threshold = 0.9 * lb - 2.0 * cell.boot_se_varnorm
    return {"lower_bound": lb, "threshold": threshold,
            "var_normalized": cell.var_normalized,
            "passed": bool(cell.var_normalized >= threshold)}


def variance_scaling(result: ExperimentResult, m: int, u: float) -> dict:
    """Var/H^d per N with bootstrap CIs; consecutive ratios and the slope of
    log(normalized variance) against log N (should approach 0)."""
    Ns = sorted({c.N for c in result.cells if c.m == m and c.u == u})
    if len(Ns) < 2:
        raise ValueError("need at least 2 window radii")
    rows = []
    for N in Ns:
        c = result.cell(m, u, N)
        rows.append({"N": N, "var_normalized": c.var_normalized,
                     "boot_se": c.boot_se_varnorm})
    ratios = [rows[i + 1]["var_normalized"] / rows[i]["var_normalized"]
              if rows[i]["var_normalized"] > 0 else float("nan")
              for i in range(len(rows) - 1)]
    logs = np.log([r["var_normalized"] for r in rows])
    slope = float(np.polyfit(np.log(Ns), logs, 1)[0]) if np.all(np.isfinite(logs)) else float("nan")
    return {"rows": rows, "ratios": ratios, "log_slope": slope}


def _fill_verdicts(result: ExperimentResult):
    config = result.config
    n_largest = max(config.N_list)
    for m in config.m_list:
        for u in config.u_list:
            cell = result.cell(m, u, n_largest)
            lb = result.lower_bounds[(m, u)]
            v = {"degenerate": cell.degenerate,
                 "suspect_fraction": cell.suspect_fraction,
                 "suspect_pass": cell.suspect_fraction <= 0.01}
            if cell.degenerate:
                v.update({"ks_pass": False, "bound": None, "passed": False})
            else:
                bc = bound_check(cell, lb)
                v.update({"ks_p": cell.diagnostics.ks_p,
                          "ks_pass": cell.diagnostics.ks_p > 0.01,
                          "bound": bc,
                          "passed": bool(v["suspect_pass"] and bc["passed"]
                                         and cell.diagnostics.ks_p > 0.01)})
            if len(config.N_list) >= 2:
                v["scaling"] = variance_scaling(result, m, u)
            result.verdicts[f"m={m},u={u}"] = v


def all_passed(result: ExperimentResult) -> bool:
    return all(v.get("passed", False) for v in result.verdicts.values())


# ---------------------------------------------------------------------------
# serialization (deterministic: sorted keys, repr floats)
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def result_summary_json(result: ExperimentResult) -> str:
    payload = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(result.config).items()},
        "lower_bounds": {f"m={m},u={u}": v
                         for (m, u), v in sorted(result.lower_bounds.items())},
        "cells": [c.summary() for c in result.cells],
        "verdicts": result.verdicts,
    }
    return json.dumps(payload, sort_keys=True, indent=2, default=_jsonable)


def cell_values_csv(result: ExperimentResult, m: int, u: float) -> str:
    lines = ["replicate,N,lk_value,suspect"]
    for c in result.cells:
        if c.m != m or c.u != u:
            continue
        for r, v in enumerate(c.values):
            lines.append(f"{r},{c.N!r},{v!r},{int(c.rep_suspects[r] > 0)}")
    return "\n".join(lines) + "\n"


def qq_csv(result: ExperimentResult, m: int, u: float, N: float) -> str:
    cell = result.cell(m, u, N)
    lines = ["theoretical_quantile,empirical_quantile"]
    if cell.diagnostics and cell.diagnostics.qq:
        for t, e in cell.diagnostics.qq:
            lines.append(f"{t!r},{e!r}")
    return "\n".join(lines) + "\n"
