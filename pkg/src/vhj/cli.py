"""Config-driven experiment runner and report emission.

Outputs per experiment directory: ``report.json`` (deterministic), series
CSV files, ``summary.txt`` with one pass/fail line per check exercised, and a
gnuplot script reproducing the series with the predicted guide line.  The
``VHJ_OUT`` environment variable overrides the configured output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, ergodic, oracle
from .config import ConfigError, ExperimentConfig, emit_config, parse_config
from .errors import RegimeError, VhjError
from .model import GridFunction, ProblemSpec
from .parabolic import SolverConfig, solve_parabolic

__all__ = ["run", "emit_gnuplot_script", "main"]


def _auto_t_end(kind: str, problem: ProblemSpec) -> float:
    L2 = problem.mesh.length ** 2
    return {
        "stationary": 30.0 * L2,
        "rate": 100.0 * L2,
        "ergodic_convergence": 60.0 * L2,
        "nonconvergence": 100.0 * L2,
        "holder": 100.0,
        "ergodic_solve": 0.0,
        "oracle_check": 0.0,
    }[kind]


def _solver_config(cfg: ExperimentConfig, problem: ProblemSpec) -> SolverConfig:
    t_end = _auto_t_end(cfg.kind, problem) if cfg.t_end == "auto" else float(cfg.t_end)
    w = None if cfg.escape_window == "auto" else float(cfg.escape_window)
    return SolverConfig(
        t_end=max(t_end, 1.0),
        cfl_safety=cfg.cfl_safety,
        escape_window=w,
        tol_steady_base=cfg.tol_steady,
        escape_residual_tol=cfg.escape_residual_tol,
    )


def _resolve_c(cfg: ExperimentConfig, problem: ProblemSpec) -> tuple[float, str, float]:
    """(c, source descriptor, uncertainty) for the experiment's grid."""
    if cfg.c_source.startswith("value:"):
        return float(cfg.c_source.split(":", 1)[1]), cfg.c_source, 0.0
    if cfg.c_source == "oracle":
        if problem.f.kind != "constant":
            raise VhjError("c_source=oracle requires a constant source")
        R = problem.mesh.half_length
        if abs(problem.mesh.x_lo + R) > 1e-12 - 1e-15 and abs(
            problem.mesh.x_lo + problem.mesh.x_hi
        ) > 1e-12:
            raise VhjError("c_source=oracle requires a symmetric interval (-R, R)")
        res = oracle.c_exact_constant_f(problem.m, R, problem.f.params[0])
        return res.c_exact, "oracle", 0.0
    lo, hi = ergodic.default_bracket(problem)
    est = ergodic.estimate_c_bisection(problem, lo, hi, tol=2e-3)
    return est.c_estimate, "bisection", est.uncertainty


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_report(outdir: Path, payload: dict, series: dict, summary_lines: list[str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    for name, arr in series.items():
        rows = ["t,value"] + [f"{_fmt(t)},{_fmt(v)}" for t, v in arr]
        (outdir / f"{name}.csv").write_text("\n".join(rows) + "\n")
    (outdir / "summary.txt").write_text("\n".join(summary_lines) + "\n")


def _guide_for(report: dict) -> str | None:
    pred = report.get("predicted_exponent")
    if pred is None or not np.isfinite(pred):
        if report.get("predicted_log_flag"):
            return "a*log(x)+b"
        return None
    kind = report.get("kind", "")
    sign = -1.0 if kind == "rate" else 1.0
    return f"a*x**({sign * pred:.6g})"


def emit_gnuplot_script(report_paths: list[str | Path]) -> list[Path]:
    """Write a plot script next to each report; returns the script paths."""
    if not report_paths:
        raise ValueError("no report paths given")
    out = []
    for rp in report_paths:
        rp = Path(rp)
        if not rp.exists():
            raise FileNotFoundError(str(rp))
        report = json.loads(rp.read_text())
        outdir = rp.parent
        csvs = sorted(p.name for p in outdir.glob("*.csv"))
        if not csvs:
            raise FileNotFoundError(f"no series CSVs next to {rp}")
        lines = [
            "set datafile separator ','",
            "set logscale xy",
            "set key left bottom",
            f"set title '{report.get('kind', 'series')} (m={report.get('m', '?')})'",
        ]
        guide = _guide_for(report)
        plot_terms = [f"'{name}' using 1:(abs($2)) with linespoints title '{name}'" for name in csvs]
        if guide is not None:
            lines += ["a=1", "b=0", f"guide(x)={guide}"]
            plot_terms.append("guide(x) with lines dashtype 2 title 'predicted'")
        lines.append("plot " + ", \\\n     ".join(plot_terms))
        script = outdir / "plot.gp"
        script.write_text("\n".join(lines) + "\n")
        out.append(script)
    return out


def _phi0_for(cfg: ExperimentConfig, problem: ProblemSpec, c: float, unc: float):
    caps = cfg.caps_list()
    if caps is None:
        caps = ergodic.suggest_caps(problem.m, problem.mesh)
    return ergodic.solve_phi0(problem, c + max(2.0 * unc, 1e-4), caps, uncertainty=unc)


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit status."""
    outdir = Path(os.environ.get("VHJ_OUT", cfg.output_dir))
    problem = cfg.problem()
    solver_cfg = _solver_config(cfg, problem)
    payload = {
        "kind": cfg.kind,
        "label": cfg.label,
        "m": problem.m,
        "interval": [problem.mesh.x_lo, problem.mesh.x_hi],
        "n_cells": problem.mesh.n_cells,
        "config_echo": emit_config(cfg),
        "solver": {
            "t_end": solver_cfg.t_end,
            "cfl_safety": solver_cfg.cfl_safety,
            "tol_steady_base": solver_cfg.tol_steady_base,
            "escape_residual_tol": solver_cfg.escape_residual_tol,
        },
    }
    series: dict = {}
    lines: list[str] = [f"experiment: {cfg.kind}", f"m = {problem.m}, n_cells = {problem.mesh.n_cells}"]
    status = 0

    try:
        if cfg.kind == "oracle_check":
            grid = [1.1, 1.25, 1.5, 1.75, 2.0]
            R = problem.mesh.half_length
            table = []
            for m in grid:
                K = oracle.quad_K(m)
                c0 = oracle.c_exact_constant_f(m, R, 0.0).c_exact
                table.append({"m": m, "K": K, "c0": c0})
            f0 = problem.f.params[0] if problem.f.kind == "constant" else 0.0
            res = oracle.c_exact_constant_f(problem.m, R, f0)
            Cn, Cs = oracle.example25_threshold(problem.m, R)
            payload.update(
                {
                    "oracle_table": table,
                    "c_exact": res.c_exact,
                    "K_m": res.K_m,
                    "threshold_necessary": Cn,
                    "threshold_sharp": Cs,
                }
            )
            lines.append(f"c_exact(m={problem.m}, R={R}, f0={f0}) = {res.c_exact:.10g} -- PASS")
        elif cfg.kind == "stationary":
            rep = asymptotics.run_stationary_convergence(problem, solver_cfg)
            ok = rep.notes["final_value"] < 1e-6
            payload.update(
                {
                    "final_distance": rep.notes["final_value"],
                    "fitted_exponent": rep.fitted_exponent,
                    "regime": rep.regime,
                }
            )
            series["series"] = rep.series
            lines.append(
                f"regime c<0: distance to steady {rep.notes['final_value']:.3e} "
                f"(< 1e-6) -- {'PASS' if ok else 'FAIL'}"
            )
            status = 0 if ok else 1
        elif cfg.kind in ("rate", "nonconvergence", "ergodic_convergence"):
            c, src, unc = _resolve_c(cfg, problem)
            payload["c_used"] = c
            payload["c_source"] = src
            if cfg.kind == "rate":
                rep = asymptotics.run_rate_experiment(problem, c, solver_cfg)
                got, pred = rep.fitted_exponent, rep.predicted
                tol = 0.15 if problem.m > 1.5 else 0.1
                ok = rep.predicted_log_flag and rep.fitted_log_flag or (
                    not rep.predicted_log_flag and abs(got - pred) <= tol
                )
                payload.update(
                    {
                        "kind": "rate",
                        "fitted_exponent": got,
                        "predicted_exponent": pred,
                        "predicted_log_flag": rep.predicted_log_flag,
                        "fitted_log_flag": rep.fitted_log_flag,
                        "fit_residual": rep.fit_residual,
                        "regime": rep.regime,
                    }
                )
                series["series"] = rep.series
                what = "log t/t" if rep.predicted_log_flag else f"t^-{pred:g}"
                lines.append(
                    f"regime {rep.regime}: predicted {what}, fitted exponent "
                    f"{got:.3f} -- {'PASS' if ok else 'FAIL'}"
                )
                status = 0 if ok else 1
            elif cfg.kind == "nonconvergence":
                rep = asymptotics.run_nonconvergence(problem, c, None, solver_cfg)
                falsified = rep.notes["falsified_growth"]
                if rep.predicted_log_flag:
                    ok = (not falsified) and rep.fitted_log_flag
                    desc = "log t growth"
                else:
                    ok = (not falsified) and abs(rep.fitted_exponent - rep.predicted) <= 0.1
                    desc = f"t^{rep.predicted:g} growth"
                payload.update(
                    {
                        "fitted_exponent": rep.fitted_exponent,
                        "predicted_exponent": rep.predicted,
                        "predicted_log_flag": rep.predicted_log_flag,
                        "fitted_log_flag": rep.fitted_log_flag,
                        "falsified_growth": falsified,
                        "regime": rep.regime,
                    }
                )
                series["series"] = rep.series
                if falsified:
                    lines.append("FALSIFICATION: D(t) stayed bounded -- FAIL")
                else:
                    lines.append(
                        f"regime {rep.regime}: predicted {desc}, fitted exponent "
                        f"{rep.fitted_exponent:.3f} -- {'PASS' if ok else 'FAIL'}"
                    )
                status = 0 if ok else 1
            else:
                res = _phi0_for(cfg, problem, c, unc)
                rep = asymptotics.run_ergodic_convergence(problem, c, res.phi0, solver_cfg)
                ok = rep.monotone_violations == 0
                payload.update(
                    {
                        "C_bar": rep.C_bar,
                        "monotone_violations": rep.monotone_violations,
                        "final_flatness": rep.final_flatness,
                        "tol_mono": rep.tol_mono,
                    }
                )
                series["m_series"] = rep.m_series
                lines.append(
                    f"regime c>0, m>3/2: m(t) nonincreasing "
                    f"({rep.monotone_violations} violations) -- {'PASS' if ok else 'FAIL'}"
                )
                status = 0 if ok else 1
        elif cfg.kind == "ergodic_solve":
            c, src, unc = _resolve_c(cfg, problem)
            res = _phi0_for(cfg, problem, c, unc)
            fit = ergodic.fit_blowup(res.phi0, problem.m)
            grad = ergodic.fit_gradient_rate(res.phi0, problem.m)
            lem = ergodic.check_lemma22(res.phi0, problem.m)
            payload.update(
                {
                    "c_used": c,
                    "c_source": src,
                    "caps": list(res.details["caps"]),
                    "converged_interior": res.converged_interior,
                    "alpha_hat": fit.alpha_hat,
                    "prefactor_hat": fit.prefactor_hat,
                    "log_slope_hat": fit.log_slope_hat,
                    "gradient_rate_hat": grad,
                    "lemma_ratios": [lem.hessian_ratio, lem.value_ratio],
                }
            )
            (outdir / "").mkdir(parents=True, exist_ok=True)
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "phi0.csv").write_text(res.phi0.to_csv())
            if problem.m < 2.0:
                al = oracle.blowup_exponent(problem.m)
                Cs = oracle.blowup_prefactor(problem.m)
                ok = abs(fit.alpha_hat - al) <= 0.05 * al and abs(fit.prefactor_hat - Cs) <= 0.1 * Cs
                lines.append(
                    f"blow-up fit: alpha {fit.alpha_hat:.3f} (expect {al:g}), prefactor "
                    f"{fit.prefactor_hat:.3f} (expect {Cs:g}) -- {'PASS' if ok else 'FAIL'}"
                )
            else:
                ok = abs(fit.log_slope_hat - 1.0) <= 0.05
                lines.append(
                    f"blow-up fit: log slope {fit.log_slope_hat:.3f} (expect 1) -- "
                    f"{'PASS' if ok else 'FAIL'}"
                )
            cm = oracle.gradient_prefactor(problem.m)
            ok2 = abs(grad - cm) <= 0.1 * cm
            lines.append(f"gradient rate: {grad:.3f} (expect {cm:g}) -- {'PASS' if ok2 else 'FAIL'}")
            status = 0 if (ok and ok2) else 1
        elif cfg.kind == "holder":
            d_min = (
                0.25 * problem.mesh.half_length if cfg.d_min == "auto" else float(cfg.d_min)
            )
            c, src, unc = _resolve_c(cfg, problem)
            times = tuple(np.geomspace(1.0, solver_cfg.t_end, cfg.snapshots))
            traj = solve_parabolic(problem, solver_cfg.with_(snapshot_times=times))
            vals = [
                (t, asymptotics.holder_seminorm(g, d_min, cfg.nu)) for t, g in traj.snapshots[:-1]
            ]
            arr = np.array(vals)
            early = float(np.max(arr[arr[:, 0] <= arr[0, 0] * 10.0, 1]))
            late = float(np.max(arr[arr[:, 0] > arr[0, 0] * 10.0, 1])) if np.any(
                arr[:, 0] > arr[0, 0] * 10.0
            ) else early
            ok = late <= 1.25 * early + 1e-9
            payload.update({"nu": cfg.nu, "d_min": d_min, "max_early": early, "max_late": late})
            series["seminorms"] = arr
            lines.append(
                f"Holder seminorms bounded in time (early max {early:.3f}, late max "
                f"{late:.3f}) -- {'PASS' if ok else 'FAIL'}"
            )
            status = 0 if ok else 1
        else:  # pragma: no cover
            raise VhjError(f"unhandled experiment kind {cfg.kind!r}")
    except (RegimeError, VhjError, ValueError) as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        lines.append(f"ERROR: {exc}")
        payload["error"] = str(exc)
        _write_report(outdir, payload, series, lines)
        return 2

    _write_report(outdir, payload, series, lines)
    if series:
        emit_gnuplot_script([outdir / "report.json"])
    return status


def _cmd_run(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text())
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    code = run(cfg)
    outdir = os.environ.get("VHJ_OUT", cfg.output_dir)
    print(Path(outdir, "summary.txt").read_text().rstrip())
    return code


def _cmd_oracle(args) -> int:
    res = oracle.c_exact_constant_f(args.m, args.R, args.f0)
    Cn, Cs = oracle.example25_threshold(args.m, args.R)
    out = {
        "m": args.m,
        "R": args.R,
        "f0": args.f0,
        "K": res.K_m,
        "c_exact": res.c_exact,
        "threshold_necessary": Cn,
        "threshold_sharp": Cs,
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    grid_file = Path(args.grid)
    paths = [ln.strip() for ln in grid_file.read_text().splitlines() if ln.strip()]
    rows = ["m,c,regime,predicted_exponent,fitted_exponent,residual"]
    worst = 0
    for p in paths:
        cfg = parse_config(Path(p).read_text())
        code = run(cfg)
        worst = max(worst, code)
        rep = json.loads(Path(os.environ.get("VHJ_OUT", cfg.output_dir), "report.json").read_text())
        rows.append(
            ",".join(
                str(rep.get(k, ""))
                for k in ("m", "c_used", "regime", "predicted_exponent", "fitted_exponent", "fit_residual")
            )
        )
    out = Path(os.environ.get("VHJ_OUT", grid_file.parent)) / "sweep_summary.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    print(f"wrote {out}")
    return worst


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vhj", description="subquadratic viscous Hamilton-Jacobi lab")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)
    p_or = sub.add_parser("oracle", help="print closed-form oracle values")
    p_or.add_argument("--m", type=float, required=True)
    p_or.add_argument("--R", type=float, required=True)
    p_or.add_argument("--f0", type=float, default=0.0)
    p_or.set_defaults(fn=_cmd_oracle)
    p_sw = sub.add_parser("sweep", help="run every config listed in a grid file")
    p_sw.add_argument("--grid", required=True)
    p_sw.set_defaults(fn=_cmd_sweep)
    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
