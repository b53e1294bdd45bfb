"""Command line entry point: ``apriori-lab <command> --config <path> [--out <dir>] [--strict]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .estimates import (
    WITH_DENOMINATOR_BOUND,
    EstimateParams,
    calibrated_c0,
    check_denominator,
    check_main,
    gamma_sweep,
    system as theorem_system,
)
from .norms import CalibrationReport, calibrate
from .plotting import Line, gradient_color, line_chart
from .solvers import NormSeries, run
from .spectral import Grid
from .transforms import invariant_report, norm_transfer


COMMANDS = ("simulate", "calibrate", "check", "sweep", "plot")


class CommandError(RuntimeError):
    pass


def _require(cfg: ExperimentConfig, section: str):
    value = getattr(cfg, section)
    if value is None:
        raise CommandError(f"{cfg.path}: this command needs a [{section}] section")
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


# --- simulate -----------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    sim = _require(cfg, "simulation")
    result = run(sim, snapshot_dir=out)
    if "csv" in cfg.output.formats:
        result.series.to_csv(out / "series.csv")
    if "json" in cfg.output.formats:
        conf = asdict(sim)
        conf["norms"] = [[k, _finite(p)] for k, p in sim.norms]
        _write_json(
            out / "run.json",
            {
                "config": conf,
                "steps": result.steps,
                "t_final": result.t_final,
                "samples": len(result.series),
                "aborted": result.aborted,
                "warnings": result.warnings,
                "columns": result.series.names,
            },
        )
    print(f"simulated {sim.system} n={sim.n} to t={result.t_final:g} in {result.steps} steps; {len(result.series)} samples -> {out / 'series.csv'}")
    for w in result.warnings:
        print(f"warning: {w}")
    return 0


# --- calibrate ----------------------------------------------------------------


def _calibration_setup(cfg: ExperimentConfig, kind: str) -> tuple[Grid, int, float]:
    k = cfg.check.k if cfg.check else 3
    p = cfg.check.p if cfg.check else 2.0
    dims = 3 if (cfg.simulation is not None and cfg.simulation.system == "ns" and kind != "C_CZ") else 2
    n = cfg.calibration.n or (24 if dims == 3 else 32)
    return Grid(dims, n), k, p


def _report_path(out: Path, kind: str) -> Path:
    return out / f"calibration_{kind}.json"


def run_calibration(cfg: ExperimentConfig, out: Path, kinds=None) -> dict[str, CalibrationReport]:
    reports = {}
    cal = cfg.calibration
    for kind in kinds or cal.kinds:
        grid, k, p = _calibration_setup(cfg, kind)
        rep = calibrate(kind, cal.trials, cal.seed, grid, k, p)
        _report_path(out, kind).write_text(rep.to_json() + "\n")
        reports[kind] = rep
        print(f"{kind}: constant={rep.constant:.6g} over {rep.trials} trials (seed {rep.seed}, {grid.dims}D n={grid.n}, k={k}, p={p:g})")
    return reports


def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> int:
    run_calibration(cfg, out)
    return 0


def _load_reports(cfg: ExperimentConfig, out: Path, kinds: tuple[str, ...]) -> dict[str, CalibrationReport]:
    reports, missing = {}, []
    for kind in kinds:
        path = _report_path(out, kind)
        grid, k, p = _calibration_setup(cfg, kind)
        if path.is_file():
            rep = CalibrationReport.from_json(path.read_text())
            if kind == "C_CZ":
                k, p = None, None
            if (rep.dims, rep.n, rep.k, rep.p, rep.trials, rep.seed) == (grid.dims, grid.n, k, p, cfg.calibration.trials, cfg.calibration.seed):
                reports[kind] = rep
                continue
        missing.append(kind)
    if missing:
        reports.update(run_calibration(cfg, out, missing))
    return reports


def resolve_c0(cfg: ExperimentConfig, theorem: str, out: Path) -> float:
    ck = cfg.check
    if ck.c0 != "calibrated":
        return float(ck.c0)
    kinds = ("C_CZ",) if theorem.startswith("1.4") else ("C1", "C2")
    return calibrated_c0(theorem, _load_reports(cfg, out, kinds), ck.k, ck.p, ck.riesz)


# --- check ----------------------------------------------------------------------


def load_series(cfg: ExperimentConfig, out: Path) -> NormSeries:
    path = Path(cfg.check.series) if cfg.check and cfg.check.series else out / "series.csv"
    if not path.is_file():
        raise CommandError(f"{path}: norm series not found (run 'simulate' first or set [check] series)")
    series = NormSeries.from_csv(path)
    sim = cfg.simulation
    if sim is not None:
        series.meta.update({"system": sim.system, "nu": sim.nu, "kappa": sim.kappa})
    return series


def _theorem_params(cfg: ExperimentConfig, theorem: str, series: NormSeries, out: Path) -> EstimateParams:
    ck = cfg.check
    c0 = resolve_c0(cfg, theorem, out)
    probe = EstimateParams(theorem, 1.0, c0, ck.k, ck.p, ck.rtol)
    gamma = ck.gamma if ck.gamma is not None else ck.gamma_factor * probe.threshold(series)
    return EstimateParams(theorem, gamma, c0, ck.k, ck.p, ck.rtol)


def _tag(theorem: str) -> str:
    return theorem.replace(".", "_")


def cmd_check(cfg: ExperimentConfig, out: Path) -> int:
    ck = _require(cfg, "check")
    series = load_series(cfg, out)
    for th in ck.theorems:
        if "system" in series.meta and theorem_system(th) != series.meta["system"]:
            raise CommandError(f"Theorem {th} concerns the {theorem_system(th)} system, series is {series.meta['system']}")
    lines, passed, summary = [], True, {"theorems": [], "transforms": []}
    for th in ck.theorems:
        params = _theorem_params(cfg, th, series, out)
        results = [check_main(series, params, ck.quadrature)]
        if th in WITH_DENOMINATOR_BOUND:
            results.append(check_denominator(series, params, ck.quadrature))
        for res in results:
            stem = ("margins_" if res.kind == "main" else "denominator_") + _tag(th)
            res.to_csv(out / f"{stem}.csv")
            lines.append(res.summary())
            passed &= res.passed
            summary["theorems"].append(
                {
                    "theorem": th,
                    "kind": res.kind,
                    "gamma": params.gamma,
                    "c0": params.c0,
                    "threshold": res.threshold,
                    "passed": res.passed,
                    "min_margin": _finite(res.min_margin),
                    "min_relative_margin": _finite(res.min_relative_margin),
                    "first_violation": res.first_violation,
                    "first_void": res.first_void,
                    "t_star": res.t_star,
                    "file": f"{stem}.csv",
                }
            )
    if cfg.transform is not None:
        for prm in cfg.transform.params():
            rep = invariant_report(series, prm, ck.quadrature, cfg.transform.tol)
            stem = f"transformed_{prm.family}_{'plus' if prm.sign == '+' else 'minus'}"
            norm_transfer(series, prm, ck.quadrature).to_csv(out / f"{stem}.csv")
            status = "PASS" if rep.passed else "FAIL"
            lines.append(f"[{status}] {rep.summary()}")
            passed &= rep.passed
            summary["transforms"].append(
                {
                    "family": prm.family,
                    "sign": prm.sign,
                    "gamma": prm.gamma,
                    "passed": rep.passed,
                    "factor_deviation": rep.factor_deviation,
                    "max_rel_err": rep.max_rel_err,
                    "file": f"{stem}.csv",
                }
            )
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    if "json" in cfg.output.formats:
        summary["passed"] = passed
        _write_json(out / "check_summary.json", summary)
    print(text, end="")
    return 0 if passed else 1


# --- sweep ----------------------------------------------------------------------


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    ck = _require(cfg, "check")
    series = load_series(cfg, out)
    th = ck.sweep_theorem
    params = _theorem_params(cfg, th, series, out)
    gammas = ck.gammas or tuple(f * params.threshold(series) for f in ck.gamma_factors)
    table = gamma_sweep(series, th, gammas, params.c0, ck.k, ck.p, ck.quadrature)
    table.to_csv(out / "sweep.csv")
    final = table.tightest_gamma[-1]
    print(
        f"sweep Theorem {th}: {table.gammas.size} gamma values from {table.gammas[0]:.6g} to {table.gammas[-1]:.6g} "
        f"(threshold {table.threshold:.6g}, C0={params.c0:.6g}); tightest gamma at t={table.t[-1]:g}: {final:.6g}; "
        f"improves on threshold: {'yes' if table.improves else 'no'}"
    )
    return 0


# --- plot -----------------------------------------------------------------------


def _read_table(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def cmd_plot(cfg: ExperimentConfig, out: Path) -> int:
    written = []
    for path in sorted(out.glob("margins_*.csv")) + sorted(out.glob("denominator_*.csv")):
        header, data = _read_table(path)
        col = {h: data[:, i] for i, h in enumerate(header)}
        what = "estimate" if path.stem.startswith("margins_") else "denominator"
        name = path.stem.split("_", 1)[1].replace("_", ".")
        sides = line_chart(
            [Line("lhs", col["t"], col["lhs"]), Line("rhs", col["t"], col["rhs"], dashed=True)],
            f"Theorem {name} {what}: both sides",
            "t",
            "value",
        )
        margin = line_chart([Line("margin", col["t"], col["margin"])], f"Theorem {name} {what}: margin", "t", "margin")
        for suffix, svg in (("sides", sides), ("margin", margin)):
            target = out / f"{path.stem}_{suffix}.svg"
            target.write_text(svg)
            written.append(target)
    sweep = out / "sweep.csv"
    if sweep.is_file():
        header, data = _read_table(sweep)
        gam, t, rhs = data[:, 0], data[:, 1], data[:, 2]
        levels = np.unique(gam)
        lines = []
        for i, g in enumerate(levels):
            sel = gam == g
            frac = i / max(len(levels) - 1, 1)
            lines.append(Line(f"gamma={g:.4g}", t[sel], rhs[sel], color=gradient_color(frac)))
        target = out / "sweep.svg"
        target.write_text(line_chart(lines, "gamma sweep: rhs against t", "t", "rhs"))
        written.append(target)
    series_path = out / "series.csv"
    if series_path.is_file():
        s = NormSeries.from_csv(series_path)
        lines = [Line(name, s.t, s[name] / s[name][0]) for name in s.columns if s[name][0] != 0]
        target = out / "series.svg"
        target.write_text(line_chart(lines, "tracked norms relative to t = 0", "t", "norm / norm(0)"))
        written.append(target)
    if not written:
        raise CommandError(f"{out}: nothing to plot (no margins_*.csv, denominator_*.csv, sweep.csv or series.csv)")
    for target in written:
        print(f"wrote {target}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "check": cmd_check,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="apriori-lab", description="Simulate, calibrate and check a-priori norm estimates.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment file (sectioned key = value)")
    parser.add_argument("--out", help="output directory (overrides [output] dir)")
    parser.add_argument("--strict", action="store_true", help="exit nonzero when any enabled check fails")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"{args.config}: {err}", file=sys.stderr)
        return 2
    out = Path(args.out or cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        status = HANDLERS[args.command](cfg, out)
    except (CommandError, OSError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return status if args.strict else 0


if __name__ == "__main__":
    sys.exit(main())
