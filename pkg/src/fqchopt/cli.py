"""Command line entry point ``fqchopt``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, io, plotting
from .config import Scenario, load_scenario
from .optimize import LineSearchFailure, ReducedProblem, deep_quench_continuation
from .spectral import ConfigurationError, SpectralField
from .state import StepFailure, solve

log = logging.getLogger("fqchopt")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


def _check(value, threshold, passed, soft: bool = False) -> dict:
    return {"value": value, "threshold": threshold, "passed": bool(passed), "soft": soft}


def cmd_solve(scen: Scenario, out: Path, jobs: int) -> dict:
    h = scen.hash
    cfg = scen.model()
    init = scen.initial(cfg)
    u = scen.control(cfg)
    traj, energy = solve(cfg, init, u)
    study = scen.section("study")
    io.write_trajectory(out / "trajectory", traj, h, stride=int(study["snapshot_stride"]))
    io.write_energy(out / "energy.csv", energy, h)
    io.write_spectral(out / "spectral_final.csv", SpectralField.from_grid(cfg.basis_B, traj.y[-1]), h)
    plotting.plot_energy(energy, out / "energy.png", h)
    plotting.plot_snapshots(traj, out / "snapshots.png", h)

    checks = {}
    lo, hi = traj.separation
    if cfg.obstacle:
        over = max(0.0, max(abs(lo), abs(hi)) - 1.0)
        checks["obstacle_overshoot"] = _check(over, 5 * cfg.yosida_lambda, over <= 5 * cfg.yosida_lambda)
    else:
        conf = max(abs(lo), abs(hi))
        checks["confinement"] = _check(conf, 1 - 1e-10, conf <= 1 - 1e-10)
    if cfg.operators.zero_mean:
        drift = float(np.max(np.abs(traj.means() - traj.means()[0])))
        checks["mass_conservation"] = _check(drift, 1e-10, drift <= 1e-10)
    E0 = float(energy.energy[0])
    tol = float(study["energy_factor"]) * cfg.dt * (1 + abs(E0))
    res = energy.identity_residual
    checks["energy_identity"] = _check(res, tol, abs(res) <= tol)
    # convex-concave splitting only removes energy, whatever the data
    slack = 1e-10 * (1 + abs(E0))
    checks["energy_dissipative"] = _check(res, slack, res <= slack)
    if not np.any(u):
        inc = energy.max_increase()
        checks["energy_nonincreasing"] = _check(inc, 0.0, inc <= 0.0)
    return {
        "results": {
            "separation": [lo, hi],
            "energy_initial": E0,
            "energy_final": float(energy.energy[-1]),
            "newton_max_iterations": int(traj.newton_iterations.max(initial=0)),
            "newton_max_residual": float(traj.newton_residuals.max(initial=0.0)),
            "safeguard_clamps": int(traj.safeguard.clamped),
        },
        "checks": checks,
    }


def cmd_quench_sweep(scen: Scenario, out: Path, jobs: int) -> dict:
    h = scen.hash
    study = scen.section("study")
    cfg = scen.model()
    init = scen.initial(cfg)
    u = scen.control(cfg)
    fit, _, _ = analysis.alpha_rate_study(cfg, init, u, scen.alphas, oracle_lambda=study["oracle_lambda"],
                                          jobs=jobs)
    io.write_rate_table(out / "rate.csv", fit, h)
    plotting.plot_rate_fit(fit, out / "rate.png", h)
    sens = analysis.oracle_sensitivity(cfg, init, u, (study["oracle_lambda"], 0.1 * study["oracle_lambda"]))
    safety = float(study["bound_safety"])
    checks = {
        "rate_slope": _check(fit.slope, study["rate_min_slope"], fit.slope >= study["rate_min_slope"]),
        "rate_bound": _check(float(np.max(fit.errors / fit.bound(safety))), 1.0, fit.bound_holds(safety)),
        "rate_monotone": _check(fit.monotone(), True, fit.monotone(), soft=True),
    }
    results = {"slope": fit.slope, "K2": fit.constant, "errors": fit.errors, "alphas": fit.params,
               "oracle_lambda_gap": sens}

    n_pairs = int(study["pairs"])
    if n_pairs > 0:
        cal, pairs = analysis.study_pairs(cfg, u, scen.alphas, scen.rng(2), n_pairs)
        tab = analysis.two_parameter_study(cfg, init, pairs, calibration=cal,
                                           safety=float(study["pair_safety"]), jobs=jobs)
        io.write_csv(out / "two_parameter.csv", ["alpha1", "alpha2", "left", "right", "ratio", "bound"],
                     tab.rows(), h)
        worst = max(r.ratio for r in tab.reports)
        checks["two_parameter"] = _check(worst, tab.K2, bool(tab.holds().all()))
        results["two_parameter_K2"] = tab.K2

    dts = [float(d) for d in study["dt_study"]]
    if dts:
        conv = analysis.dt_convergence_study(cfg.replace(T=float(study["dt_study_T"])), init, dts, jobs=jobs)
        io.write_csv(out / "dt_convergence.csv", ["dt", "difference"], conv.rows(), h)
        plotting.plot_convergence(conv, out / "dt_convergence.png", h)
        checks["dt_order"] = _check(conv.slope, 0.9, conv.slope >= 0.9)
        results["dt_orders"] = conv.orders
    return {"results": results, "checks": checks}


def cmd_optimize(scen: Scenario, out: Path, jobs: int) -> dict:
    h = scen.hash
    opt, study = scen.section("optimize"), scen.section("study")
    cfg = scen.model()
    init = scen.initial(cfg)
    u0 = scen.control(cfg)
    rep = deep_quench_continuation(
        cfg, init, scen.cost(), scen.constraints(), scen.alphas, u0,
        adapted=bool(opt["adapted"]), obstacle_lambda=study["oracle_lambda"],
        gradient_path=opt["gradient_path"], max_iter=int(opt["max_iter"]), tol_stat=opt["tol_stat"],
        n_probes=int(opt["n_probes"]), probe_seed=scen.seed)
    io.write_continuation(out / "continuation.csv", rep, h)
    if rep.controls:
        coords = cfg.domain.coordinates()
        rows = ([t, *c, v] for t, snap in zip(cfg.times, rep.controls[-1]) for c, v in zip(coords, snap))
        io.write_csv(out / "control_final.csv", ["t", *["x", "y"][: coords.shape[1]], "u"], rows, h)
        plotting.plot_continuation(rep, out / "continuation.png", h)
    Q = cfg.domain.volume * cfg.T
    gaps = rep.cost_gaps()
    bumps = int(np.sum(np.diff(gaps[1:]) > 0)) if gaps.size > 2 else 0
    vi = float(min(rep.vi_residual)) if rep.vi_residual else float("nan")
    checks = {
        "all_stages": _check(len(rep.alphas), len(scen.alphas), len(rep.alphas) == len(scen.alphas)
                             and all(rep.converged)),
        "vi_certificate": _check(vi, -1e-6 * Q, vi >= -1e-6 * Q),
        "continuation_monotone": _check(bumps, 1, bumps <= 1, soft=True),
    }
    return {
        "results": {"rows": rep.rows(), "final_obstacle_cost": rep.final_obstacle_cost,
                    "cost_gaps": gaps, "failures": rep.failures},
        "checks": checks,
    }


def cmd_grad_check(scen: Scenario, out: Path, jobs: int) -> dict:
    h = scen.hash
    study = scen.section("study")
    cfg = scen.model()
    init = scen.initial(cfg)
    u = scen.control(cfg)
    dirs = analysis.random_directions((cfg.num_steps + 1, cfg.n), int(study["directions"]), seed=scen.seed)
    reports = {}
    for path in ("discrete", "continuous"):
        problem = ReducedProblem(cfg, init, scen.cost(), scen.constraints(), gradient_path=path)
        reports[path] = analysis.fd_gradient_oracle(problem, u, dirs, eps=float(study["eps"]))
    rows = [(p, k, r.fd[k], r.analytic[k], r.rel_error[k]) for p, r in reports.items() for k in range(r.fd.size)]
    io.write_csv(out / "grad_check.csv", ["path", "direction", "fd", "analytic", "rel_error"], rows, h)
    plotting.plot_gradient_check(reports, out / "grad_check.png", h)
    d, c = reports["discrete"], reports["continuous"]
    checks = {
        "discrete_gradient": _check(float(d.rel_error.max()), study["grad_tol"], d.passes(study["grad_tol"])),
        "sign_agreement": _check(d.sign_agreement, 1.0, d.sign_agreement == 1.0),
        "continuous_gradient": _check(float(c.rel_error.max()), study["continuous_grad_tol"],
                                      c.passes(study["continuous_grad_tol"]),
                                      soft=not study["check_continuous"]),
    }
    return {"results": {p: {"fd": r.fd, "analytic": r.analytic, "rel_error": r.rel_error}
                        for p, r in reports.items()}, "checks": checks}


def cmd_oracle(scen: Scenario, out: Path, jobs: int) -> dict:
    h = scen.hash
    study = scen.section("study")
    cfg, init, profile = scen.oracle_instance()
    rep = analysis.brute_force_control_oracle(cfg, init, scen.cost(), scen.constraints(),
                                              n_params=int(study["oracle_params"]),
                                              points=int(study["oracle_points"]), profile=profile)
    k = rep.grid_params.size
    cols = ["source", *[f"a{i + 1}" for i in range(k)], "cost"]
    rows = [("grid", *rep.grid_params, rep.grid_cost), ("projected_gradient", *rep.pg_params, rep.pg_cost),
            ("zero", *np.zeros(k), rep.zero_cost)]
    io.write_csv(out / "oracle.csv", cols, rows, h)
    tol = float(study["oracle_tol"])
    checks = {
        "oracle_match": _check(rep.rel_gap, tol, rep.rel_gap <= tol),
        "oracle_below_zero_control": _check(rep.grid_cost, rep.zero_cost, rep.grid_cost <= rep.zero_cost),
    }
    return {"results": {"grid_points": rep.grid_points, "grid_params": rep.grid_params,
                        "pg_params": rep.pg_params, "pg_iterations": len(rep.history) - 1},
            "checks": checks}


COMMANDS = {
    "solve": cmd_solve,
    "quench-sweep": cmd_quench_sweep,
    "optimize": cmd_optimize,
    "grad-check": cmd_grad_check,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fqchopt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./fqchopt-out)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("fqchopt: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scen = load_scenario(args.config)
    except ConfigurationError as exc:
        print(f"fqchopt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or scen.output or "fqchopt-out")
    summary = {"command": args.command, "preset": scen.preset, "seed": scen.seed, "config": scen.data}
    code = EXIT_OK
    try:
        summary.update(COMMANDS[args.command](scen, out, args.jobs))
    except ConfigurationError as exc:
        print(f"fqchopt: configuration error: {exc}", file=sys.stderr)
        summary["error"] = str(exc)
        code = EXIT_CONFIG
    except (StepFailure, LineSearchFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"fqchopt: solver failure: {exc}", file=sys.stderr)
        summary["error"] = str(exc)
        code = EXIT_SOLVER
    else:
        failed = [k for k, c in summary["checks"].items() if not c["passed"] and not c["soft"]]
        summary["failed_checks"] = failed
        for k, c in summary["checks"].items():
            state = "pass" if c["passed"] else ("warn" if c["soft"] else "FAIL")
            print(f"{state:4s} {k}: {c['value']} (threshold {c['threshold']})")
        if failed:
            code = EXIT_CHECK
    summary["exit_code"] = code
    io.write_json(out / "summary.json", summary, scen.hash)
    return code


if __name__ == "__main__":
    sys.exit(main())
