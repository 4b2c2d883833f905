"""Command-line entry point.

Subcommands:

    mvstable run      --config PATH [--out DIR] [--seed U64] [--threads N]
    mvstable validate --config PATH
    mvstable list

Exit codes: 0 success, 1 config/validation failure, 2 numerical failure
(non-convergence, NaN guard) with a diagnostics file in the output directory.

Every experiment writes CSV/JSON artifacts plus a manifest.json carrying the
config hash, seed and library versions; rerunning the same config and seed
reproduces the CSV artifacts byte for byte (the manifest's wall time is the
only moving part).  Relative output directories resolve against
$MVSTABLE_OUT_ROOT when that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .config import EXPERIMENT_NAMES, ExperimentConfig, build_coefficients, load_config
from .coefficients import ProbePlan, probe_assumptions
from .counterexample import calibrate, tail_ratio, verify_two_solutions
from .errors import (
    ConfigError,
    MVStableError,
    NonConvergenceError,
    NumericalIntegrityError,
    ParameterError,
)
from .grids import TimeGrid
from .kernels import (
    TEST_FUNCTIONS,
    duhamel_residual,
    gradient_scaling_check,
    kernel_perturbation_check,
)
from .limits import LimitExperiment, limit_i, limit_ii
from .measures import EmpiricalMeasure, MeasureFlow
from .metrics import wasserstein, weighted_variation
from .rng import stream
from .solver import SolverConfig, contraction_estimate, moment_bound_report, solve
from .stable_paths import (
    empirical_charfn,
    empirical_laplace,
    exact_charfn,
    exact_laplace,
    sample_one_sided_stable,
    sample_stable_marginal,
    StableParams,
)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip representation
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ordered_parallel(fn, items, threads: int):
    """Map fn over items with a bounded pool, results in input order.

    Each item carries its own seed, so the outcome is independent of the
    worker count and scheduling."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# experiment runners (each returns a list of artifact file names)
# ---------------------------------------------------------------------------


def _uniform_initial(params) -> EmpiricalMeasure:
    atoms = np.linspace(
        float(params["initial_low"]), float(params["initial_high"]), int(params["initial_atoms"])
    )
    return EmpiricalMeasure.from_samples(atoms)


def _transform_audit_rows(alpha: float, dim: int, n: int, seed: int, threads: int):
    cells = []
    for t, r in itertools.product((0.5, 1.0), (0.5, 1.0, 2.0)):
        cells.append(("laplace", t, r))
    for t, xi in itertools.product((0.5, 1.0), (0.5, 1.0, 2.0)):
        cells.append(("charfn", t, xi))

    def run_cell(args):
        kind, t, r = args
        cell_seed = stream(seed, 0x7A, int(t * 2), int(r * 2))
        if kind == "laplace":
            s = t ** (2.0 / alpha) * sample_one_sided_stable(alpha / 2.0, n, cell_seed)
            emp, se = empirical_laplace(s, r)
            exact = exact_laplace(alpha, r, t)
        else:
            z = sample_stable_marginal(StableParams(alpha, 1), t, n, cell_seed)
            val, se = empirical_charfn(z, r)
            emp, exact = val.real, exact_charfn(alpha, r, t)
        return [kind, alpha, r, t, emp, se, exact, abs(emp - exact) <= 3 * se]

    return _ordered_parallel(run_cell, cells, threads)


def run_simulate(cfg: ExperimentConfig, out: Path, threads: int):
    p = cfg.params
    coeffs = build_coefficients(p["coefficients"])
    grid = TimeGrid.uniform(float(p["horizon"]), int(p["n_steps"]))
    config = SolverConfig(
        n_particles=int(p["n_particles"]),
        grid=grid,
        delta=float(p["delta"]),
        tol_inner=float(p["tol_inner"]),
        tol_outer=float(p["tol_outer"]),
        max_inner=int(p["max_inner"]),
        max_outer=int(p["max_outer"]),
        master_seed=cfg.seed,
        auto_bins=int(p["auto_bins"]),
        eta_support=int(p["eta_support"]),
    )
    gamma = _uniform_initial(p)
    probe = probe_assumptions(coeffs, ProbePlan(n_probes=150, seed=cfg.seed))
    result = solve(gamma, coeffs, config)
    artifacts = []

    stride = max(1, int(p["flow_node_stride"]))
    flow_rows = []
    for i in range(0, grid.n_nodes, stride):
        m = result.flow.at(i)
        for w, x in zip(m.weights, m.atoms):
            flow_rows.append([grid.nodes[i], *x, w])
    _write_csv(
        out / "flow.csv",
        ["t"] + [f"x_{j + 1}" for j in range(coeffs.dim)] + ["weight"],
        flow_rows,
    )
    artifacts.append("flow.csv")

    report = moment_bound_report(result.ensemble, coeffs.k)
    _write_json(
        out / "iterations.json",
        {
            "delta": config.delta,
            "tol_inner": config.tol_inner,
            "tol_outer": config.tol_outer,
            "outer_residuals": result.outer_info.residuals,
            "inner": [info.as_dict() for info in result.inner_infos],
            "metric_estimators": config.metric_params(coeffs).describe(),
            "assumption_probe": probe,
            "moment_bound": report,
        },
    )
    artifacts.append("iterations.json")

    audit = _transform_audit_rows(
        coeffs.alpha, coeffs.dim, int(p["transform_audit_samples"]), cfg.seed, threads
    )
    _write_csv(
        out / "transform_audit.csv",
        ["transform", "alpha", "argument", "t", "empirical", "stderr", "exact", "within_3se"],
        audit,
    )
    artifacts.append("transform_audit.csv")

    if p["write_ensemble"]:
        rows = []
        states = result.ensemble.states
        for i in range(grid.n_nodes):
            for pid in range(states.shape[1]):
                rows.append([pid, grid.nodes[i], *states[i, pid]])
        _write_csv(
            out / "ensemble.csv",
            ["particle", "t"] + [f"X_{j + 1}" for j in range(coeffs.dim)],
            rows,
        )
        artifacts.append("ensemble.csv")
    return artifacts


def run_counterexample(cfg: ExperimentConfig, out: Path, threads: int):
    p = cfg.params
    alpha = float(p["alpha"])
    params = calibrate(alpha, int(p["calibration_samples"]), stream(cfg.seed, 1))
    est = tail_ratio(alpha, float(p["tail_x"]), int(p["tail_samples"]), stream(cfg.seed, 2))
    t_grid = np.linspace(0.1, 1.0, int(p["t_points"]))
    report = verify_two_solutions(
        params, int(p["verify_samples"]), t_grid, stream(cfg.seed, 3)
    )
    _write_csv(
        out / "tail_ratio.csv",
        ["x", "estimate", "stderr", "limit"],
        [[est.x, est.ratio, est.stderr, est.limit]],
    )
    payload = {
        "alpha": alpha,
        "M": params.M,
        "a": params.a,
        "b": params.b_coef,
        "calibration": {
            "n_samples": params.n_calibration,
            "p_mid": params.p_mid,
            "p_tail": params.p_tail,
            "se_mid": params.se_mid,
            "se_tail": params.se_tail,
        },
        "tail_ratio": {
            "x": est.x,
            "estimate": est.ratio,
            "stderr": est.stderr,
            "limit": est.limit,
            "within_3se": bool(abs(est.ratio - est.limit) <= 3 * est.stderr),
        },
        "residuals": report["rows"],
    }
    _write_json(out / "counterexample.json", payload)
    return ["tail_ratio.csv", "counterexample.json"]


def run_limits(cfg: ExperimentConfig, out: Path, threads: int):
    p = cfg.params
    exp = LimitExperiment(
        alpha=float(p["alpha"]),
        kappa=float(p["kappa"]),
        horizon=float(p["horizon"]),
        deltas=tuple(float(d) for d in p["deltas"]),
        epsilon=float(p["epsilon"]),
        n_paths=int(p["n_paths"]),
        n_steps=int(p["n_steps"]),
        master_seed=cfg.seed,
        theta=None if p["theta"] is None else float(p["theta"]),
    )
    part = p["part"]
    res = limit_i(exp) if part == "i" else limit_ii(exp, threads=threads)
    name = f"limit_{part}.csv"
    _write_csv(
        out / name,
        ["delta", "estimate", "stderr", "t_argmax", "envelope", "envelope_eps",
         "envelope_user_eps"],
        [
            [r["delta"], r["estimate"], r["stderr"], r["t_argmax"], r["envelope"],
             r["envelope_eps"], r["envelope_user_eps"]]
            for r in res["rows"]
        ],
    )
    est = [r["estimate"] for r in res["rows"]]
    summary = {
        "part": part,
        "kappa": exp.kappa,
        "alpha": exp.alpha,
        "nonincreasing": bool(all(a >= b for a, b in zip(est, est[1:]))),
        "last_below_half_first": bool(est[-1] < 0.5 * est[0]),
        "enveloped": bool(
            all(r["estimate"] <= r["envelope"] + 3 * r["stderr"] for r in res["rows"])
        ),
    }
    summary["pass"] = bool(
        summary["nonincreasing"] and summary["last_below_half_first"] and summary["enveloped"]
    )
    _write_json(out / f"limit_{part}_summary.json", summary)
    return [name, f"limit_{part}_summary.json"]


def run_kernel_check(cfg: ExperimentConfig, out: Path, threads: int):
    p = cfg.params
    coeffs = build_coefficients(p["coefficients"])
    grid = TimeGrid.uniform(float(p["horizon"]), int(p["n_steps"]))
    base = EmpiricalMeasure.from_samples(np.linspace(-1.0, 1.0, 13))
    nu = MeasureFlow.constant(grid, base)
    check = p["check"]
    if check == "scaling":
        rep = gradient_scaling_check(
            coeffs, nu, float(p["epsilon"]), int(p["n_paths"]), cfg.seed,
            tuple(int(w) for w in p["window_steps"]),
        )
        _write_csv(
            out / "kernel_scaling.csv",
            ["dt", "estimate", "stderr"],
            list(zip(rep["dts"], rep["estimates"], rep["stderrs"])),
        )
        summary = {k: rep[k] for k in
                   ("epsilon", "alpha", "slope", "intercept", "theoretical_slope",
                    "max_log_residual")}
        summary["pass"] = bool(abs(rep["slope"] - rep["theoretical_slope"]) <= 0.1)
        _write_json(out / "kernel_scaling_summary.json", summary)
        return ["kernel_scaling.csv", "kernel_scaling_summary.json"]
    if check == "perturbation":
        rows = []
        shift = float(p["perturbation_shift"])
        for lam in (1.0, 0.5, 0.25):
            nu2 = MeasureFlow.constant(grid, base.shifted(np.array([lam * shift])))
            rep = kernel_perturbation_check(
                coeffs, nu, nu2, float(p["epsilon"]), int(p["n_paths"]), cfg.seed
            )
            rows.append([lam, rep["lhs"], rep["rhs"], rep["ratio"]])
        ratios = [r[3] for r in rows]
        _write_csv(out / "kernel_perturbation.csv", ["lambda", "lhs", "rhs", "ratio"], rows)
        summary = {
            "epsilon": float(p["epsilon"]),
            "ratio_spread": max(ratios) / min(ratios),
            "pass": bool(max(ratios) / min(ratios) < 2.0),
        }
        _write_json(out / "kernel_perturbation_summary.json", summary)
        return ["kernel_perturbation.csv", "kernel_perturbation_summary.json"]
    # duhamel
    f, f_prime = TEST_FUNCTIONS["tanh"]
    rep = duhamel_residual(
        f, f_prime, coeffs, nu, nu, float(p["t"]), int(p["n_particles"]), cfg.seed,
        x0=float(p["x0"]),
    )
    floor = max(3.0 * rep["stderr"], 5e-3)
    rep["floor"] = floor
    rep["pass"] = bool(rep["abs_residual"] < floor)
    _write_csv(
        out / "kernel_duhamel.csv",
        ["t", "x0", "lhs", "q_term", "integral", "residual", "stderr"],
        [[rep["t"], rep["x0"], rep["lhs"], rep["q_term"], rep["integral"],
          rep["residual"], rep["stderr"]]],
    )
    _write_json(out / "kernel_duhamel_summary.json", rep)
    return ["kernel_duhamel.csv", "kernel_duhamel_summary.json"]


def run_metrics_selftest(cfg: ExperimentConfig, out: Path, threads: int):
    from .measures import BinningSpec

    p = cfg.params
    rng = stream(cfg.seed, 0x3E)
    records = []
    max_dev = 0.0
    for i in range(int(p["n_instances"])):
        d = 1 + (i % 2)
        g = EmpiricalMeasure.from_samples(rng.normal(size=(5, d)))
        h = EmpiricalMeasure.from_samples(rng.normal(size=(5, d)))
        kappa = (0.5, 1.0, 1.5)[i % 3]
        ours = wasserstein(g, h, kappa)
        cost = np.linalg.norm(g.atoms[:, None, :] - h.atoms[None, :, :], axis=2) ** kappa
        best = min(
            cost[range(5), perm].sum() / 5 for perm in itertools.permutations(range(5))
        )
        oracle = best ** (1 / kappa) if kappa > 1 else best
        max_dev = max(max_dev, abs(ours - oracle))
        records.append(
            {
                "metric": "wasserstein",
                "kappa": kappa,
                "value": ours,
                "estimator_params": {"solver": "exact-ot", "oracle_dev": abs(ours - oracle)},
            }
        )
    dual_violations = 0
    n_dual = int(p["n_dual_functions"])
    for i in range(n_dual):
        kappa = (0.5, 0.8, 1.0)[i % 3]
        g = EmpiricalMeasure.from_samples(rng.normal(size=(6, 1)))
        h = EmpiricalMeasure.from_samples(rng.normal(size=(6, 1)))
        w = wasserstein(g, h, kappa)
        anchors = rng.normal(scale=2.0, size=4)
        offsets = rng.normal(size=4)

        def f(x):
            return (offsets[None, :] + np.abs(x - anchors[None, :]) ** kappa).min(axis=1)

        gap = abs(g.integrate(lambda a: f(a[:, 0:1])) - h.integrate(lambda a: f(a[:, 0:1])))
        if gap > w + 1e-8:
            dual_violations += 1
    atoms = rng.normal(size=(10, 1))
    w1, w2 = rng.random(10), rng.random(10)
    g = EmpiricalMeasure(atoms, w1 / w1.sum())
    h = EmpiricalMeasure(atoms, w2 / w2.sum())
    kv = weighted_variation(g, h, 1.0, None)
    records.append(
        {
            "metric": "weighted_variation",
            "kappa": 1.0,
            "value": kv,
            "estimator_params": {"mode": "exact-shared-atoms"},
        }
    )
    payload = {
        "records": records,
        "brute_force_max_dev": max_dev,
        "dual_violations": dual_violations,
        "dominance_ok": bool(wasserstein(g, h, 1.0) <= kv + 1e-12),
        "pass": bool(max_dev < 1e-8 and dual_violations == 0),
    }
    _write_json(out / "metrics_report.json", payload)
    return ["metrics_report.json"]


def run_contraction(cfg: ExperimentConfig, out: Path, threads: int):
    p = cfg.params
    coeffs = build_coefficients(p["coefficients"])
    config = SolverConfig(
        n_particles=int(p["n_particles"]),
        grid=TimeGrid.uniform(float(p["horizon"]), int(p["n_steps"])),
        master_seed=cfg.seed,
        tol_inner=float(p["tol_inner"]),
        max_inner=int(p["max_inner"]),
        eta_support=int(p["eta_support"]),
        auto_bins=int(p["auto_bins"]),
    )
    gamma = _uniform_initial(
        {"initial_low": -0.5, "initial_high": 0.5, "initial_atoms": 9}
    )
    table = contraction_estimate(
        gamma, coeffs, config, tuple(float(d) for d in p["deltas"]),
        shift=float(p["shift"]),
    )
    _write_csv(
        out / "contraction.csv",
        ["delta", "input_distance", "output_distance", "ratio"],
        [
            [r["delta"], r["input_distance"], r["output_distance"], r["ratio"]]
            for r in table["rows"]
        ],
    )
    ratios = [r["ratio"] for r in table["rows"]]
    summary = {
        "slope": table["slope"],
        "theoretical_slope": table["theoretical_slope"],
        "slope_tolerance": 0.15,
        "ratios_nonincreasing": bool(all(a >= b for a, b in zip(ratios, ratios[1:]))),
        "pass": bool(
            all(a >= b for a, b in zip(ratios, ratios[1:]))
            and table["slope"] <= table["theoretical_slope"] + 0.15
        ),
    }
    _write_json(out / "contraction_summary.json", summary)
    return ["contraction.csv", "contraction_summary.json"]


_RUNNERS = {
    "simulate": run_simulate,
    "counterexample": run_counterexample,
    "limits": run_limits,
    "kernel-check": run_kernel_check,
    "metrics-selftest": run_metrics_selftest,
    "contraction": run_contraction,
}


# ---------------------------------------------------------------------------
# command plumbing
# ---------------------------------------------------------------------------


def _resolve_out(cfg: ExperimentConfig, cli_out) -> Path:
    out = Path(cli_out) if cli_out else Path(cfg.output_dir)
    root = os.environ.get("MVSTABLE_OUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except (ConfigError, ParameterError, MVStableError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = _resolve_out(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        artifacts = _RUNNERS[cfg.experiment](cfg, out, args.threads)
    except (NonConvergenceError, NumericalIntegrityError) as exc:
        _write_json(
            out / "diagnostics.json",
            {
                "error": type(exc).__name__,
                "message": str(exc),
                "residuals": getattr(exc, "residuals", None),
            },
        )
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ParameterError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "experiment": cfg.experiment,
        "config_sha256": cfg.config_hash(),
        "config": cfg.raw,
        "seed": cfg.seed,
        "threads": args.threads,
        "versions": {
            "mvstable": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_seconds": time.time() - started,
        "artifacts": artifacts,
    }
    _write_json(out / "manifest.json", manifest)
    print(f"{cfg.experiment}: wrote {', '.join(artifacts)} to {out}")
    return 0


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, ParameterError, MVStableError, OSError, yaml.YAMLError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"valid: experiment={cfg.experiment} seed={cfg.seed}")
    return 0


def _cmd_list(args) -> int:
    for name in EXPERIMENT_NAMES:
        print(name)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvstable",
        description="Simulation and verification experiments for mean-field "
        "SDEs driven by rotationally invariant alpha-stable noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_run.set_defaults(fn=_cmd_run)
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(fn=_cmd_validate)
    p_list = sub.add_parser("list", help="list experiment names")
    p_list.set_defaults(fn=_cmd_list)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
