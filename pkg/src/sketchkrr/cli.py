"""Command-line front end: config-driven experiments, dataset tests, diagnostics.

Subcommands
-----------
simulate    run a size/power experiment grid from a YAML config (or preset)
test        run the simple or composite test on a CSV dataset (x1..xd,y)
adaptive    run the smoothness-adaptive test on a CSV dataset
diagnose    spectral diagnostics over an (n, lam, s) grid
phase-grid  empirical power over a (lam, s, c) grid

Exit codes: 0 success (test accepted), 1 test rejected, 2 configuration or
input error, 3 more than 1% of replications aborted.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import plots
from .adaptive import adaptive_test
from .errors import ComputationError
from .kernels import gaussian, kernel_matrix, periodic_sobolev, theoretical_eigenvalues
from .krr import default_lambda_grid, gcv
from .sketch import check_k_satisfiability, draw_sketch
from .spectral import eigendecompose, lambda_split, lrc_fixed_point, rate_table, tail_sum_check
from .simulate import MonteCarloConfig, monte_carlo, phase_grid
from .testing import composite_linear_test, distance_test, polynomial_design

CSV_COLUMNS = ["preset", "n", "s", "gamma", "lambda", "c", "test", "reps",
               "rejection_rate", "se", "mean_z", "var_z", "seed"]

_SIM_KEYS = {
    "preset", "experiment", "dgp", "test", "n", "c", "gamma", "s_factor",
    "s", "s_log_gamma", "lambda_rule", "lambda", "kernel_order", "alpha",
    "reps", "seed", "workers", "sketch_kind", "out",
    "at_m_n", "at_c_lambda", "at_d_s", "at_lambda_rule",
    "lambda_grid", "s_grid", "c_grid",
}

PRESETS = {
    "fig3-dt": {
        "experiment": "simulate", "dgp": "pdk_beta", "test": "dt",
        "n": [512, 1024, 2048, 4096], "c": [0.0],
        "gamma": [1 / 9, 2 / 9, 3 / 9], "s_factor": 2.0,
        "lambda_rule": "gcv", "kernel_order": 2,
        "alpha": 0.05, "reps": 500, "seed": 20240901, "workers": 1,
        "sketch_kind": "gaussian",
    },
    "fig3-at": {
        "experiment": "simulate", "dgp": "pdk_beta", "test": "at",
        "n": [512, 1024, 2048, 4096], "c": [0.0], "gamma": [2 / 9],
        "s_factor": 2.0, "lambda_rule": "gcv", "kernel_order": 2,
        "alpha": 0.05, "reps": 500, "seed": 20240902, "workers": 1,
        "sketch_kind": "gaussian", "at_lambda_rule": "schedule",
    },
    "fig4": {
        "experiment": "simulate", "dgp": "pdk_beta", "test": "dt",
        "n": [512, 1024, 2048, 4096], "c": [0.01, 0.02, 0.03],
        "gamma": [1 / 9, 2 / 9, 3 / 9], "s_factor": 2.0,
        "lambda_rule": "gcv", "kernel_order": 2,
        "alpha": 0.05, "reps": 500, "seed": 20240903, "workers": 1,
        "sketch_kind": "gaussian",
    },
    "fig5": {
        "experiment": "simulate", "dgp": "edk_gaussian", "test": "dt",
        "n": [512, 1024, 2048, 4096], "c": [0.0, 0.05, 0.1, 0.15],
        "s_log_gamma": [1.0, 1.5, 2.0], "s_factor": 1.2,
        "lambda_rule": "gcv", "alpha": 0.05, "reps": 500,
        "seed": 20240904, "workers": 1, "sketch_kind": "gaussian",
    },
    "phase-grid": {
        "experiment": "phase-grid", "dgp": "pdk_beta", "kernel_order": 2,
        "n": [256], "lambda_grid": [1e-6, 1e-5, 1e-4],
        "s_grid": [2, 4, 8, 16], "c_grid": [0.0, 0.01, 0.02, 0.04, 0.08],
        "alpha": 0.05, "reps": 100, "seed": 20240905, "workers": 1,
    },
}


def _embed(cfg: dict) -> str:
    # output location and worker count do not affect results; keep embedded
    # config byte-stable across re-runs of the same experiment
    return json.dumps({k: v for k, v in cfg.items() if k not in ("out", "workers")},
                      sort_keys=True, default=str)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _fmt6(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def load_config(path: str | None, preset: str | None,
                overrides: dict | None = None) -> dict:
    cfg: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        cfg.update(PRESETS[preset])
        cfg["preset"] = preset
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ValueError("config must be a mapping")
        if "preset" in user and preset is None:
            base = user["preset"]
            if base not in PRESETS:
                raise ValueError(f"unknown preset {base!r}")
            merged = dict(PRESETS[base])
            merged.update(user)
            user = merged
        cfg.update(user)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    unknown = set(cfg) - _SIM_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg.setdefault("experiment", "simulate")
    cfg.setdefault("seed", 0)
    cfg.setdefault("alpha", 0.05)
    cfg.setdefault("workers", 1)
    cfg.setdefault("preset", "")
    return cfg


def _aslist(v):
    return v if isinstance(v, (list, tuple)) else [v]


def _write_outputs(outdir: Path, cfg: dict, rows: list[dict],
                   svg: str | None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "config.expanded.yaml", "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    embed = _embed(cfg)
    with open(outdir / "results.csv", "w", newline="") as fh:
        fh.write(f"# config: {embed}\n")
        fh.write(f"# seed: {cfg.get('seed')}\n")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt6(row.get(k)) for k in CSV_COLUMNS})
    if svg is not None:
        (outdir / "plot.svg").write_text(svg)


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config, args.preset,
                          {"seed": args.seed, "workers": args.workers,
                           "out": args.out, "reps": args.reps})
    except (ValueError, OSError, yaml.YAMLError) as exc:
        return _fail(str(exc))
    if cfg["experiment"] == "phase-grid":
        return _run_phase_grid(cfg)
    rows = []
    try:
        for n in _aslist(cfg.get("n", 512)):
            for c in _aslist(cfg.get("c", 0.0)):
                for skind, gval in _sketch_points(cfg):
                    mc = _mc_config(cfg, int(n), float(c), skind, gval)
                    result = monte_carlo(mc)
                    gamma_echo = gval if skind in ("gamma", "loggamma") else ""
                    rows.append({
                        "preset": cfg.get("preset", ""), "n": n, "s": result.s,
                        "gamma": gamma_echo,
                        "lambda": result.median_lambda, "c": c,
                        "test": cfg.get("test", "dt"), "reps": result.reps,
                        "rejection_rate": result.rejection_rate,
                        "se": result.standard_error, "mean_z": result.mean_z,
                        "var_z": result.var_z, "seed": cfg["seed"],
                    })
                    print(f"n={n} c={c} gamma={gamma_echo} s={result.s}: "
                          f"rate={result.rejection_rate:.4f} se={result.standard_error:.4f}")
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        return _fail(str(exc))
    svg = _rate_plot(rows, cfg)
    _write_outputs(Path(cfg.get("out") or "results"), cfg, rows, svg)
    return 0


def _sketch_points(cfg):
    if "s" in cfg:
        for s in _aslist(cfg["s"]):
            yield ("s_explicit", int(s))
    elif "s_log_gamma" in cfg:
        for g in _aslist(cfg["s_log_gamma"]):
            yield ("loggamma", float(g))
    else:
        for g in _aslist(cfg.get("gamma", [2.0 / 9.0])):
            yield ("gamma", float(g))


def _mc_config(cfg, n, c, skind, gval) -> MonteCarloConfig:
    factor = float(cfg.get("s_factor", 2.0))
    if skind == "s_explicit":
        s_rule: object = int(gval)
    elif skind == "loggamma":
        s_rule = ("loggamma", factor, gval)
    else:
        s_rule = ("gamma", factor, gval)
    lam_rule = cfg.get("lambda_rule", "gcv")
    if lam_rule == "explicit":
        lam_rule = float(cfg["lambda"])
    return MonteCarloConfig(
        dgp=cfg.get("dgp", "pdk_beta"), c=c, n=n,
        reps=int(cfg.get("reps", 500)), alpha=float(cfg.get("alpha", 0.05)),
        test=cfg.get("test", "dt"), sketch_kind=cfg.get("sketch_kind", "gaussian"),
        s_rule=s_rule, lambda_rule=lam_rule,
        kernel_order=int(cfg.get("kernel_order", 2)),
        at_m_n=cfg.get("at_m_n"), at_c_lambda=float(cfg.get("at_c_lambda", 1.0)),
        at_d_s=float(cfg.get("at_d_s", 2.0)),
        at_lambda_rule=cfg.get("at_lambda_rule", "schedule"),
        seed=int(cfg["seed"]), workers=int(cfg.get("workers", 1)),
    )


def _rate_plot(rows, cfg) -> str | None:
    if not rows:
        return None
    ns = sorted({r["n"] for r in rows})
    series = {}
    for row in rows:
        key = f"gamma={_fmt6(row['gamma'])},c={_fmt6(row['c'])}" if row["gamma"] != "" \
            else f"s={row['s']},c={_fmt6(row['c'])}"
        series.setdefault(key, {})[row["n"]] = row["rejection_rate"]
    plotted = {k: [v.get(n, float("nan")) for n in ns] for k, v in series.items()}
    return plots.line_plot_svg(
        ns, plotted, title="Empirical rejection rate", xlabel="n",
        ylabel="rejection rate",
        description=_embed(cfg))


def _run_phase_grid(cfg) -> int:
    spec = periodic_sobolev(int(cfg.get("kernel_order", 2))) \
        if cfg.get("dgp", "pdk_beta") == "pdk_beta" else gaussian(dim=3)
    n = int(_aslist(cfg.get("n", 256))[0])
    try:
        grid = phase_grid(spec, n, cfg["lambda_grid"], cfg["s_grid"],
                          cfg["c_grid"], int(cfg.get("reps", 100)),
                          int(cfg["seed"]), alpha=float(cfg.get("alpha", 0.05)))
    except (KeyError, ValueError) as exc:
        return _fail(f"phase-grid config: {exc}")
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    rows = []
    for i, lam in enumerate(grid.lambda_grid):
        for j, s in enumerate(grid.s_grid):
            for k, c in enumerate(grid.c_grid):
                rows.append({
                    "preset": cfg.get("preset", ""), "n": n, "s": int(s),
                    "gamma": "", "lambda": float(lam), "c": float(c),
                    "test": "dt", "reps": cfg.get("reps", 100),
                    "rejection_rate": float(grid.power[i, j, k]),
                    "se": "", "mean_z": "", "var_z": "", "seed": cfg["seed"],
                })
    svg = plots.heatmap_svg(grid.swds_proxy, grid.s_grid, grid.lambda_grid,
                            title="Smallest detectable signal strength",
                            xlabel="s", ylabel="lambda",
                            description=_embed(cfg))
    _write_outputs(Path(cfg.get("out") or "results"), cfg, rows, svg)
    return 0


# ---------------------------------------------------------------------------
# Dataset tests

def _read_dataset(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError("empty CSV")
        header = [h.strip() for h in header]
        if "y" not in header:
            raise ValueError("missing y column")
        ycol = header.index("y")
        xcols = [i for i, h in enumerate(header) if h != "y"]
        xs, ys = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                xs.append([float(row[i]) for i in xcols])
                ys.append(float(row[ycol]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"non-numeric or short row at line {rownum}: {exc}")
    if not ys:
        raise ValueError("no data rows")
    return np.asarray(xs), np.asarray(ys)


def _rescale_unit(xs: np.ndarray) -> np.ndarray:
    # map each covariate into [0, 1) for the periodic Sobolev kernel
    lo = xs.min(axis=0)
    hi = xs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (xs - lo) / span * (1.0 - 1e-9)


def cmd_test(args) -> int:
    try:
        xs, y = _read_dataset(args.data)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    n, d = xs.shape
    rng_seed = args.seed or 0
    if args.kernel == "sobolev":
        if d != 1:
            return _fail("sobolev kernel tests one covariate at a time; "
                         "select a single-x CSV or use --kernel gaussian")
        spec = periodic_sobolev(args.order)
        design = _rescale_unit(xs)[:, 0]
    else:
        spec = gaussian(dim=d)
        design = xs
    try:
        K = kernel_matrix(spec, design)
    except ValueError as exc:
        return _fail(str(exc))
    s = args.s or max(1, round(2 * n ** (2.0 / 9.0)))
    S = draw_sketch("gaussian", s, n, rng_seed)
    if args.lambda_rule == "gcv":
        lam = gcv(K, y, S, default_lambda_grid(spec, n)).best_lambda
    else:
        lam = float(args.lambda_rule)
    try:
        if args.test_kind == "simple":
            report = distance_test(K, S, lam, y, alpha=args.alpha)
        else:
            X = polynomial_design(xs, args.poly_order)
            report = composite_linear_test(K, S, lam, X, y, alpha=args.alpha,
                                           poly_order=args.poly_order)
    except (ValueError, ComputationError) as exc:
        return _fail(str(exc))
    print(f"test={report.kind} n={n} s={s} lambda={lam:.6g} seed={rng_seed}")
    print(f"statistic={report.statistic:.6g} z={report.z:.6g} "
          f"p_value={report.p_value:.6g} reject={report.reject}")
    if args.record:
        rec = dataclasses.asdict(report)
        rec.update({"n": n, "seed": rng_seed, "data": args.data,
                    "kernel": args.kernel})
        with open(args.record, "a") as fh:
            fh.write(json.dumps(rec) + "\n")
    return 1 if report.reject else 0


def cmd_adaptive(args) -> int:
    try:
        xs, y = _read_dataset(args.data)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    n, d = xs.shape
    if d != 1:
        return _fail("adaptive test works on a single covariate")
    if n < 16:
        return _fail(f"adaptive test needs n >= 16, got {n}")
    design = _rescale_unit(xs)[:, 0]
    try:
        report = adaptive_test(design, y, alpha=args.alpha, m_n=args.m_n,
                               seed=args.seed or 0,
                               lambda_rule=args.lambda_rule_at)
    except (ValueError, ComputationError) as exc:
        return _fail(str(exc))
    print(f"adaptive test n={n} m_list={report.m_list} seed={args.seed or 0}")
    print(f"tau_star={report.tau_star:.6g} B_n={report.b_n:.6g} "
          f"tau_final={report.tau_final:.6g} c_alpha={report.c_alpha:.6g} "
          f"reject={report.reject}")
    if args.record:
        rec = dataclasses.asdict(report)
        rec.update({"n": n, "seed": args.seed or 0, "data": args.data})
        with open(args.record, "a") as fh:
            fh.write(json.dumps(rec) + "\n")
    return 1 if report.reject else 0


def cmd_diagnose(args) -> int:
    try:
        cfg = load_config(args.config, None, {"seed": args.seed, "out": args.out})
    except (ValueError, OSError, yaml.YAMLError) as exc:
        return _fail(str(exc))
    ns = [int(v) for v in _aslist(cfg.get("n", []))]
    lams = [float(v) for v in _aslist(cfg.get("lambda_grid", []))]
    ss = [int(v) for v in _aslist(cfg.get("s_grid", []))]
    if not ns or not lams or not ss:
        return _fail("diagnose needs non-empty n, lambda_grid, and s_grid")
    spec = periodic_sobolev(int(cfg.get("kernel_order", 2)))
    seed = int(cfg["seed"])
    outdir = Path(cfg.get("out") or "results")
    outdir.mkdir(parents=True, exist_ok=True)
    cols = ["n", "lambda", "s", "s_hat", "s_lambda", "kappa", "tail", "tail_bound",
            "tail_pass", "r_hat", "cert_head", "cert_tail", "cert_pass",
            "lambda_dag", "s_dag", "lambda_star", "s_star"]
    with open(outdir / "config.expanded.yaml", "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    with open(outdir / "diagnostics.csv", "w", newline="") as fh:
        fh.write(f"# config: {_embed(cfg)}\n")
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for n in ns:
            table = rate_table(spec, n)
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
            xs = rng.uniform(0.0, 1.0, n)
            eig = eigendecompose(kernel_matrix(spec, xs))
            spectrum = theoretical_eigenvalues(spec, 4 * n)
            for lam in lams:
                split = lambda_split(eig, lam, spectrum)
                tail = tail_sum_check(eig, split, spectrum)
                fp = lrc_fixed_point(eig, split) if split.kappa > 0 else None
                for s in ss:
                    S = draw_sketch("gaussian", min(s, n), n, (seed, n, s))
                    cert = check_k_satisfiability(S, eig, lam)
                    writer.writerow({k: _fmt6(v) for k, v in {
                        "n": n, "lambda": lam, "s": min(s, n),
                        "s_hat": split.empirical_dim, "s_lambda": split.model_dim,
                        "kappa": split.kappa, "tail": tail.tail,
                        "tail_bound": tail.bound, "tail_pass": tail.passed,
                        "r_hat": fp.r_hat if fp else "",
                        "cert_head": cert.head_deviation,
                        "cert_tail": cert.tail_energy, "cert_pass": cert.passed,
                        "lambda_dag": table.lambda_dag, "s_dag": table.s_dag,
                        "lambda_star": table.lambda_star, "s_star": table.s_star,
                    }.items()})
    print(f"wrote {outdir / 'diagnostics.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchkrr",
        description="Sketched kernel ridge regression tests and experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a size/power experiment")
    sim.add_argument("--config", help="YAML config path")
    sim.add_argument("--preset", choices=sorted(PRESETS),
                     help="named experiment preset")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--out", help="output directory (default: results/)")
    sim.set_defaults(func=cmd_simulate)

    pg = sub.add_parser("phase-grid", help="empirical power over a (lambda, s) grid")
    pg.add_argument("--config", help="YAML config path")
    pg.add_argument("--seed", type=int)
    pg.add_argument("--workers", type=int)
    pg.add_argument("--reps", type=int)
    pg.add_argument("--out")
    pg.set_defaults(func=cmd_phase_grid)

    tst = sub.add_parser("test", help="test a CSV dataset (header x1..xd,y)")
    tst.add_argument("data", help="CSV path")
    tst.add_argument("--kernel", choices=["gaussian", "sobolev"], default="gaussian")
    tst.add_argument("--order", type=int, default=2,
                     help="sobolev smoothness (covariates are rescaled to [0,1))")
    tst.add_argument("--test-kind", choices=["simple", "composite"], default="simple")
    tst.add_argument("--poly-order", type=int, default=1)
    tst.add_argument("--lambda-rule", default="gcv",
                     help='"gcv" or an explicit positive value')
    tst.add_argument("--alpha", type=float, default=0.05)
    tst.add_argument("--s", type=int, help="projection dimension (default 2 n^(2/9))")
    tst.add_argument("--seed", type=int)
    tst.add_argument("--record", help="append a JSON-lines record to this path")
    tst.set_defaults(func=cmd_test)

    ada = sub.add_parser("adaptive", help="adaptive test on a CSV dataset")
    ada.add_argument("data")
    ada.add_argument("--alpha", type=float, default=0.05)
    ada.add_argument("--m-n", type=int, dest="m_n")
    ada.add_argument("--lambda-rule", dest="lambda_rule_at",
                     choices=["schedule", "gcv"], default="schedule")
    ada.add_argument("--seed", type=int)
    ada.add_argument("--record")
    ada.set_defaults(func=cmd_adaptive)

    dia = sub.add_parser("diagnose", help="spectral diagnostics over a grid")
    dia.add_argument("--config", required=True)
    dia.add_argument("--seed", type=int)
    dia.add_argument("--out")
    dia.set_defaults(func=cmd_diagnose)
    return parser


def cmd_phase_grid(args) -> int:
    preset = None if args.config else "phase-grid"
    try:
        cfg = load_config(args.config, preset,
                          {"seed": args.seed, "workers": args.workers,
                           "out": args.out, "reps": args.reps})
    except (ValueError, OSError, yaml.YAMLError) as exc:
        return _fail(str(exc))
    cfg["experiment"] = "phase-grid"
    return _run_phase_grid(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
