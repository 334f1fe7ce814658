"""Command-line entry point: assumption checks, CLT experiments, chaos
tables, variance reports and the Rice identity suite, with deterministic
artifacts on disk.

Exit codes: 0 all checks pass, 1 scientific failure, 2 operational failure.
"""

import argparse
import configparser
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .covariance import check_assumptions, get_model
from .experiments import (ExperimentConfig, all_passed, cell_values_csv, qq_csv,
                          result_summary_json, run_clt)


def load_config(path: str) -> dict:
    """INI sections flattened to {'section.key': value} with raw strings."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[f"{section}.{key}"] = value
    return flat


def config_hash(flat: dict) -> str:
    """sha256 of the canonicalized (sorted) key=value lines."""
    canon = "\n".join(f"{k}={flat[k]}" for k in sorted(flat))
    return hashlib.sha256(canon.encode()).hexdigest()


def _floats(s):
    return tuple(float(v) for v in s.split(","))


def _ints(s):
    return tuple(int(v) for v in s.split(","))


def experiment_config_from(flat: dict, args) -> ExperimentConfig:
    cfg = ExperimentConfig(
        model_name=flat.get("model.name", "gaussian"),
        d=int(flat.get("model.d", 1)),
        m_list=_ints(flat.get("experiment.m", "0")),
        u_list=_floats(flat.get("experiment.u", "1.0")),
        N_list=_floats(flat.get("experiment.n", "10,20")),
        h=float(flat.get("experiment.h", 0.05)),
        replicates=int(flat.get("experiment.replicates", 200)),
        n_flats=int(flat.get("experiment.n_flats", 400)),
        epsilons=_floats(flat.get("experiment.epsilon", "0.4,0.2,0.1")),
        dirac_epsilon=float(flat.get("experiment.dirac_epsilon", 0.2)),
        seed=int(flat.get("experiment.seed", 20240817)),
        estimator=flat.get("experiment.estimator", "direct"),
        threads=1,
    )
    if args.seed is not None:
        cfg.seed = args.seed
    if args.estimator is not None:
        cfg.estimator = args.estimator
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def write_manifest(out_dir: str, flat: dict, seed, outputs):
    manifest = {
        "config_hash": config_hash(flat),
        "tool_version": __version__,
        "seed": seed,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "run.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        flat = load_config(args.config)
        model = get_model(flat.get("model.name", "gaussian"),
                          int(flat.get("model.d", 1)))
    except Exception as exc:
        print(f"operational error: {exc}", file=sys.stderr)
        return 2
    try:
        report = check_assumptions(model, model.d, int(flat.get("model.m", 0)))
    except Exception as exc:
        print(f"assumption check failed to run: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"model {report.model_name} (d={report.d})")
        print(f"  |R(0)-1|        = {report.normalization_error:.3e}")
        print(f"  |R''(0)+1|      = {report.second_derivative_error:.3e}")
        print(f"  int psi (B_10)  = {report.psi_integral:.6f} "
              f"tail increments {['%.3e' % v for v in report.psi_increments]}")
        print(f"  psi integrable  = {report.psi_integrable}")
        for lag, ev in report.lag_min_eigenvalues.items():
            print(f"  min eig Sigma(lag={lag}) = {ev:.6f}")
        print(f"  Sigma(d,m) PD   = {report.sigma_positive_definite}")
        print(f"PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_clt(args) -> int:
    try:
        flat = load_config(args.config)
        cfg = experiment_config_from(flat, args)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except Exception as exc:
        print(f"operational error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_clt(cfg, quiet=args.quiet)
    except Exception as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    outputs = []
    try:
        for m in cfg.m_list:
            for u in cfg.u_list:
                path = os.path.join(out_dir, f"lk_m{m}_u{u}.csv")
                with open(path, "w") as fh:
                    fh.write(cell_values_csv(result, m, u))
                outputs.append(path)
                qq_path = os.path.join(out_dir, f"qq_m{m}_u{u}_N{max(cfg.N_list)}.csv")
                with open(qq_path, "w") as fh:
                    fh.write(qq_csv(result, m, u, max(cfg.N_list)))
                outputs.append(qq_path)
        summary = os.path.join(out_dir, "summary.json")
        with open(summary, "w") as fh:
            fh.write(result_summary_json(result))
        outputs.append(summary)
        outputs.append(write_manifest(out_dir, flat, cfg.seed, outputs))
    except Exception as exc:
        print(f"operational error writing outputs: {exc}", file=sys.stderr)
        return 2
    ok = all_passed(result)
    if not args.quiet:
        for name, v in sorted(result.verdicts.items()):
            print(f"{name}: {'PASS' if v.get('passed') else 'FAIL'}")
    return 0 if ok else 1


def cmd_chaos(args) -> int:
    from .chaos import ChaosTable
    try:
        flat = load_config(args.config)
        model = get_model(flat.get("model.name", "gaussian"),
                          int(flat.get("model.d", 1)))
        d = int(flat.get("model.d", 1))
        m = int(flat.get("chaos.m", flat.get("model.m", 0)))
        u = float(flat.get("chaos.u", 1.0))
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
    except Exception as exc:
        print(f"operational error: {exc}", file=sys.stderr)
        return 2
    try:
        table = ChaosTable.build(model, d, m, u, args.qmax)
        path = os.path.join(out_dir, f"chaos_d{d}_m{m}_u{u}.csv")
        table.save_csv(path)
        write_manifest(out_dir, flat, None, [path])
        if not args.quiet:
            eD = tuple([0] * (table.D - 1) + [1])
            print(f"coefficients through order {args.qmax} -> {path}")
            print(f"c(e_D) = {table.c(eD)[0]:.6f} +- {table.c(eD)[1]:.2e}")
    except Exception as exc:
        print(f"chaos table failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_variance(args) -> int:
    from .variance import variance_breakdown
    try:
        flat = load_config(args.config)
        model = get_model(flat.get("model.name", "gaussian"),
                          int(flat.get("model.d", 1)))
        d = int(flat.get("model.d", 1))
        m = int(flat.get("variance.m", flat.get("model.m", 0)))
        u = float(flat.get("variance.u", 1.0))
        Q = int(flat.get("variance.q", args.qmax))
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
    except Exception as exc:
        print(f"operational error: {exc}", file=sys.stderr)
        return 2
    try:
        bd = variance_breakdown(model, d, m, u, Q=Q)
        path = os.path.join(out_dir, f"variance_d{d}_m{m}_u{u}.json")
        with open(path, "w") as fh:
            fh.write(bd.to_json())
        write_manifest(out_dir, flat, None, [path])
        if not args.quiet:
            print(f"lower_bound = {bd.lower_bound:.6f}")
            for q, (v, e) in sorted(bd.sigma2_by_order.items()):
                print(f"sigma2[q={q}] = {v:.6f} +- {e:.2e}")
            print(f"truncated_total = {bd.truncated_total:.6f}")
    except Exception as exc:
        print(f"variance computation failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_rice_check(args) -> int:
    from .covariance import make_gaussian_cov
    from .rice import (d2cov_on_flat, det_rank_one, gradient_pair_det_identity,
                       taylor_remainder_check)
    model = make_gaussian_cov(2)
    rng = np.random.default_rng(0)
    checks = []

    worst = 0.0
    for _ in range(10_000):
        dim = int(rng.integers(1, 5))
        c1, c2 = rng.normal(size=2)
        v = rng.normal(size=dim)
        direct = float(np.linalg.det(c1 * np.eye(dim) + c2 * np.outer(v, v)))
        worst = max(worst, abs(direct - det_rank_one(c1, c2, v, dim)))
    checks.append(("det_rank_one vs dense determinant", worst <= 1e-10,
                   f"max abs err {worst:.2e}"))

    worst = 0.0
    for k in (1, 2, 3):
        for r in np.linspace(0.1, 5.0, 50):
            closed = gradient_pair_det_identity(model, k, r)
            direct = d2cov_on_flat(model, k, np.r_[r, np.zeros(k - 1)]).det_identity_value
            worst = max(worst, abs(closed - direct) / max(abs(direct), 1e-300))
    checks.append(("determinant identity vs direct det(I-M^2)", worst <= 1e-10,
                   f"max rel err {worst:.2e}"))

    rep = taylor_remainder_check(model)
    checks.append(("Taylor remainder slopes", rep["passed"],
                   f"slopes {rep['slope_r1']:.2f}/{rep['slope_r2']:.2f}, mu={rep['mu']}"))

    ok = True
    for name, passed, detail in checks:
        ok &= passed
        if not args.quiet:
            print(f"{'PASS' if passed else 'FAIL'} {name} ({detail})")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exgeo",
                                     description="excursion-set geometry toolkit")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_out=False):
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="out" if need_out else None,
                       required=need_out)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--estimator", choices=["direct", "crofton", "dirac"],
                       default=None)
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("validate", help="check model assumptions")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("clt", help="run the CLT experiment")
    common(p, need_out=True)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("chaos", help="build a chaos coefficient table")
    common(p, need_out=True)
    p.add_argument("--qmax", type=int, default=1)
    p.set_defaults(func=cmd_chaos)

    p = sub.add_parser("variance", help="variance breakdown report")
    common(p, need_out=True)
    p.add_argument("--qmax", type=int, default=1)
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("rice-check", help="run the analytic identity suite")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_rice_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
