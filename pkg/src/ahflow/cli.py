"""Command-line front end: ``ahflow run|verify|sweep|plot``.

Configuration is flat ``key = value`` text with dotted section prefixes
(``solver.cfl_factor = 0.5``); unknown keys are rejected, and the resolved
configuration (defaults merged with file and flag overrides) is echoed next
to the outputs so a bundle fully determines its run.  Exit codes: 0 success,
1 usage/configuration error, 2 mathematically meaningful termination
(blowup or neckpinch) or failed verification checks.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AHFlowError,
    ConfigError,
    InadmissibleSpec,
    IoError,
    MissingColumn,
)
from .evolution import SolverConfig, Trajectory, kappa_from_w, lambda_from_w, run
from .geometry import RadialGrid, f_from_lambda, kappa_from_lambda
from .initial_data import InitialDataSpec, load_table, validate
from .verification import run_verification

__all__ = ["main", "RunConfig", "OutputBundle", "parse_config_file", "resolve_config"]

# schema: key -> (type, default); None default means "no value unless given"
CONFIG_SCHEMA: dict[str, tuple[type, object]] = {
    "n": (int, 3),
    "seed": (int, 0),
    "grid.size": (int, 256),
    "initial.family": (str, "hyperbolic"),
    "initial.amplitude": (float, 0.0),
    "initial.center": (float, 0.0),
    "initial.width": (float, 1.0),
    "initial.table": (str, ""),
    "solver.formulation": (str, "lambda_primary"),
    "solver.cfl_factor": (float, 0.5),
    "solver.t_end": (float, 10.0),
    "solver.blowup_threshold": (float, 1e6),
    "solver.neckpinch_threshold": (float, 1.0 - 1e-3),
    "solver.convergence_tol": (float, 1e-8),
    "solver.record_stride": (int, 0),
    "solver.snapshot_stride": (int, 0),
    "solver.dt_fixed": (float, 0.0),
    "solver.w_domain_radius": (float, 20.0),
    "solver.w_grid_size": (int, 801),
    "solver.advective_coefficient_scale": (float, 1.0),
    "diagnostics.atol": (float, 1e-5),
    "diagnostics.ctol": (float, 10.0),
    "output.dir": (str, "out"),
    "sweep.parameter": (str, ""),
    "sweep.values": (str, ""),
}

RECORD_HEADER = (
    "t", "sup_rm_plus_k", "min_lambda", "max_lambda", "min_kappa",
    "max_kappa", "sup_r2_lambda", "sup_kml_abs", "bianchi_res", "dt",
)
SNAPSHOT_HEADER = ("t", "x", "r", "lambda", "kappa", "f")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TERMINATION = 2


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs, resolved from defaults + file + flags."""

    dimension: int
    grid_size: int
    initial: InitialDataSpec
    solver: SolverConfig
    atol: float
    ctol: float
    output_dir: Path
    seed: int
    raw: dict


@dataclass(frozen=True)
class OutputBundle:
    """Paths written by a command; every listed path exists on success."""

    out_dir: Path
    records_csv: Path | None = None
    snapshots_csv: Path | None = None
    resolved_cfg: Path | None = None
    summary_txt: Path | None = None
    report_txt: Path | None = None
    report_csv: Path | None = None
    plots: tuple[Path, ...] = ()


def parse_config_file(path: str | Path) -> dict:
    """Parse flat key = value lines; '#' starts a comment."""
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        caster, _ = CONFIG_SCHEMA[key]
        try:
            values[key] = caster(value)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{lineno}: bad value for {key}: {value!r} ({exc})"
            ) from exc
    return values


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    resolved = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    resolved.update(file_values or {})
    resolved.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolved


def _positive(resolved: dict, key: str):
    if resolved[key] <= 0:
        raise ConfigError(f"{key} must be > 0, got {resolved[key]}")


def build_run_config(resolved: dict) -> RunConfig:
    """Validate the resolved mapping and build typed configuration."""
    if resolved["n"] < 3:
        raise ConfigError(f"n must be >= 3, got {resolved['n']}")
    if resolved["grid.size"] < 16:
        raise ConfigError(f"grid.size must be >= 16, got {resolved['grid.size']}")
    for key in ("initial.width", "solver.cfl_factor", "solver.blowup_threshold"):
        _positive(resolved, key)
    if resolved["initial.center"] < 0:
        raise ConfigError(f"initial.center must be >= 0, got {resolved['initial.center']}")
    if not 0 < resolved["solver.neckpinch_threshold"] < 1:
        raise ConfigError("solver.neckpinch_threshold must lie in (0, 1)")
    if resolved["solver.t_end"] < 0:
        raise ConfigError("solver.t_end must be >= 0")
    if resolved["solver.convergence_tol"] < 0:
        raise ConfigError("solver.convergence_tol must be >= 0")
    if resolved["solver.w_grid_size"] < 16:
        raise ConfigError("solver.w_grid_size must be >= 16")
    if resolved["solver.w_domain_radius"] <= 0:
        raise ConfigError("solver.w_domain_radius must be > 0")
    if resolved["solver.dt_fixed"] < 0:
        raise ConfigError("solver.dt_fixed must be >= 0")
    if resolved["solver.record_stride"] < 0 or resolved["solver.snapshot_stride"] < 0:
        raise ConfigError("strides must be >= 0 (0 picks automatic values)")
    family = resolved["initial.family"]
    table = None
    if family == "custom_table":
        if not resolved["initial.table"]:
            raise ConfigError("initial.table must name a CSV file for custom_table")
        table = load_table(resolved["initial.table"])
    try:
        initial = InitialDataSpec(
            family=family,
            amplitude=resolved["initial.amplitude"],
            center=resolved["initial.center"],
            width=resolved["initial.width"],
            dimension=resolved["n"],
            table=table,
        )
    except InadmissibleSpec as exc:
        raise ConfigError(str(exc)) from exc
    try:
        solver = SolverConfig(
            formulation=resolved["solver.formulation"],
            cfl_factor=resolved["solver.cfl_factor"],
            t_end=resolved["solver.t_end"],
            blowup_threshold=resolved["solver.blowup_threshold"],
            neckpinch_threshold=resolved["solver.neckpinch_threshold"],
            convergence_tol=resolved["solver.convergence_tol"],
            record_stride=resolved["solver.record_stride"],
            snapshot_stride=resolved["solver.snapshot_stride"],
            dt_fixed=resolved["solver.dt_fixed"],
            w_domain_radius=resolved["solver.w_domain_radius"],
            w_grid_size=resolved["solver.w_grid_size"],
            advective_coefficient_scale=resolved["solver.advective_coefficient_scale"],
        )
    except ValueError as exc:
        raise ConfigError(f"solver configuration: {exc}") from exc
    return RunConfig(
        dimension=resolved["n"],
        grid_size=resolved["grid.size"],
        initial=initial,
        solver=solver,
        atol=resolved["diagnostics.atol"],
        ctol=resolved["diagnostics.ctol"],
        output_dir=Path(resolved["output.dir"]),
        seed=resolved["seed"],
        raw=dict(resolved),
    )


# ---------------------------------------------------------------------------
# persistence


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_resolved(resolved: dict, out_dir: Path) -> Path:
    path = out_dir / "resolved.cfg"
    lines = [f"{key} = {_fmt(resolved[key])}" for key in sorted(resolved)]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def write_records(traj: Trajectory, out_dir: Path) -> Path:
    path = out_dir / "records.csv"
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_HEADER)
            for rec in traj.records:
                writer.writerow([
                    _fmt(rec.t), _fmt(rec.sup_rm_plus_k), _fmt(rec.min_lambda),
                    _fmt(rec.max_lambda), _fmt(rec.min_kappa), _fmt(rec.max_kappa),
                    _fmt(rec.sup_r2_lambda), _fmt(rec.sup_kappa_minus_lambda_abs),
                    _fmt(rec.bianchi_residual_max), _fmt(rec.dt),
                ])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def write_snapshots(traj: Trajectory, out_dir: Path) -> Path:
    path = out_dir / "snapshots.csv"
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SNAPSHOT_HEADER)
            if traj.w_snapshots is not None:
                r = traj.w_r_nodes
                x = r / (1.0 + r)
                for t, w in traj.w_snapshots:
                    lam = lambda_from_w(r, w)
                    kap = kappa_from_w(r, w)
                    f = np.sqrt(w)
                    for i in range(r.size):
                        writer.writerow([_fmt(t), _fmt(x[i]), _fmt(r[i]),
                                         _fmt(lam[i]), _fmt(kap[i]), _fmt(f[i])])
            else:
                for state in traj.snapshots:
                    grid = state.profile.grid
                    lam = state.profile.lam
                    kap = kappa_from_lambda(state.profile)
                    f = f_from_lambda(state.profile)
                    for i in range(grid.size):
                        writer.writerow([
                            _fmt(state.t), _fmt(grid.x_nodes[i]),
                            _fmt(grid.r_nodes[i]), _fmt(lam[i]), _fmt(kap[i]),
                            _fmt(f[i]),
                        ])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def write_summary(traj: Trajectory, report, out_dir: Path) -> Path:
    path = out_dir / "summary.txt"
    last = traj.records[-1]
    lines = [
        f"verdict = {traj.verdict}",
        f"regime = {report.regime}",
        f"admissible = {str(report.admissible).lower()}",
        f"t_final = {_fmt(last.t)}",
        f"final_sup_rm_plus_k = {_fmt(last.sup_rm_plus_k)}",
        f"max_sup_r2_lambda = {_fmt(max(r.sup_r2_lambda for r in traj.records))}",
        f"records = {len(traj.records)}",
    ]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# commands


def _prepare_out(out_dir: Path) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def execute_run(cfg: RunConfig) -> tuple[OutputBundle, str]:
    """Build, validate, integrate, persist.  Returns (bundle, verdict)."""
    from .initial_data import build_profile

    out_dir = _prepare_out(cfg.output_dir)
    grid = RadialGrid(cfg.grid_size)
    profile = build_profile(cfg.initial, grid)
    report = validate(profile)
    if not report.admissible:
        raise InadmissibleSpec(f"initial data not admissible: {report.summary()}")
    traj = run(profile, cfg.solver)
    resolved_path = write_resolved(cfg.raw, out_dir)
    records_path = write_records(traj, out_dir)
    snapshots_path = write_snapshots(traj, out_dir)
    summary_path = write_summary(traj, report, out_dir)
    bundle = OutputBundle(
        out_dir=out_dir,
        records_csv=records_path,
        snapshots_csv=snapshots_path,
        resolved_cfg=resolved_path,
        summary_txt=summary_path,
    )
    return bundle, traj.verdict


def cmd_run(cfg: RunConfig) -> tuple[OutputBundle, int]:
    bundle, verdict = execute_run(cfg)
    print(f"verdict: {verdict}")
    print(f"outputs: {bundle.out_dir}")
    code = EXIT_OK if verdict in ("converged", "reached_t_end") else EXIT_TERMINATION
    return bundle, code


def cmd_verify(cfg: RunConfig) -> tuple[OutputBundle, int]:
    out_dir = _prepare_out(cfg.output_dir)
    report = run_verification(
        n=cfg.dimension,
        grid_size=cfg.grid_size,
        cfl_factor=cfg.solver.cfl_factor,
        atol=cfg.atol,
        ctol=cfg.ctol,
        seed=cfg.seed,
    )
    resolved_path = write_resolved(cfg.raw, out_dir)
    text_path = out_dir / "report.txt"
    csv_path = out_dir / "report.csv"
    try:
        text_path.write_text(report.text())
        with open(csv_path, "w", newline="") as fh:
            csv.writer(fh).writerows(report.csv_rows())
    except OSError as exc:
        raise IoError(f"cannot write report: {exc}") from exc
    print(report.text(), end="")
    n_fail = sum(not e.holds for e in report.entries)
    print(f"{len(report.entries)} checks, {n_fail} failures")
    bundle = OutputBundle(out_dir=out_dir, resolved_cfg=resolved_path,
                          report_txt=text_path, report_csv=csv_path)
    return bundle, EXIT_OK if report.all_hold else EXIT_TERMINATION


def _sweep_point(args: tuple) -> dict:
    """Run one sweep point in a worker process; never raises."""
    index, resolved, parameter, value = args
    point = dict(resolved)
    point[parameter] = value
    point["output.dir"] = str(Path(resolved["output.dir"]) / f"point_{index:03d}")
    row = {
        "index": index,
        "parameter": parameter,
        "value": value,
        "verdict": "error",
        "regime": "",
        "final_sup_rm_plus_k": float("nan"),
        "max_sup_r2_lambda": float("nan"),
        "rm_decay_rate": float("nan"),
        "out_dir": point["output.dir"],
        "error": "",
    }
    try:
        cfg = build_run_config(point)
        out_dir = _prepare_out(cfg.output_dir)
        from .initial_data import build_profile

        grid = RadialGrid(cfg.grid_size)
        try:
            profile = build_profile(cfg.initial, grid)
        except InadmissibleSpec as exc:
            row["verdict"] = "inadmissible"
            row["error"] = str(exc)
            write_resolved(point, out_dir)
            return row
        report = validate(profile)
        row["regime"] = report.regime
        if not report.admissible:
            row["verdict"] = "inadmissible"
            row["error"] = report.summary()
            write_resolved(point, out_dir)
            return row
        traj = run(profile, cfg.solver)
        write_resolved(point, out_dir)
        write_records(traj, out_dir)
        write_snapshots(traj, out_dir)
        write_summary(traj, report, out_dir)
        row["verdict"] = traj.verdict
        row["final_sup_rm_plus_k"] = traj.records[-1].sup_rm_plus_k
        row["max_sup_r2_lambda"] = max(r.sup_r2_lambda for r in traj.records)
        from .diagnostics import tail_fit

        fit = tail_fit(traj.times, traj.series("sup_rm_plus_k"))
        if fit is not None:
            row["rm_decay_rate"] = fit.rate_fit
    except Exception as exc:  # one point must not abort the others
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(cfg: RunConfig) -> tuple[OutputBundle, int]:
    resolved = cfg.raw
    parameter = resolved["sweep.parameter"]
    if not parameter:
        raise ConfigError("sweep.parameter must be set for the sweep command")
    if parameter not in CONFIG_SCHEMA or parameter.startswith(("sweep.", "output.")):
        raise ConfigError(f"sweep.parameter names an unknown key {parameter!r}")
    raw_values = [v for v in resolved["sweep.values"].split(",") if v.strip()]
    if not raw_values:
        raise ConfigError("sweep.values must list at least one value")
    caster, _ = CONFIG_SCHEMA[parameter]
    try:
        values = [caster(v.strip()) for v in raw_values]
    except ValueError as exc:
        raise ConfigError(f"sweep.values: {exc}") from exc

    out_dir = _prepare_out(cfg.output_dir)
    write_resolved(resolved, out_dir)
    jobs = [(i, resolved, parameter, v) for i, v in enumerate(values)]
    max_workers = min(len(jobs), os.cpu_count() or 1)
    cap = os.environ.get("AHFLOW_THREADS")
    if cap:
        try:
            max_workers = max(1, min(max_workers, int(cap)))
        except ValueError:
            raise ConfigError(f"AHFLOW_THREADS must be an integer, got {cap!r}")
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]

    summary_path = out_dir / "sweep_summary.csv"
    fields = ("index", "parameter", "value", "verdict", "regime",
              "final_sup_rm_plus_k", "max_sup_r2_lambda", "rm_decay_rate",
              "out_dir", "error")
    try:
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_fmt(row[k]) if isinstance(row[k], float)
                                 else str(row[k]) for k in fields])
    except OSError as exc:
        raise IoError(f"cannot write {summary_path}: {exc}") from exc
    for row in rows:
        print(f"{row['parameter']} = {row['value']}: {row['verdict']}"
              + (f" ({row['error']})" if row["error"] else ""))
    print(f"summary: {summary_path}")
    bundle = OutputBundle(out_dir=out_dir, summary_txt=summary_path)
    code = EXIT_TERMINATION if any(r["verdict"] == "error" for r in rows) else EXIT_OK
    return bundle, code


def cmd_plot(out_dir: Path) -> tuple[OutputBundle, int]:
    from .plotting import plot_bundle

    paths = plot_bundle(out_dir)
    for p in paths:
        print(p)
    return OutputBundle(out_dir=Path(out_dir), plots=tuple(paths)), EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ahflow",
        description="simulate and verify the normalized flow of rotationally "
                    "symmetric asymptotically hyperbolic metrics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "verify", "sweep", "plot"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="config file path")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--n", type=int, default=None, help="override dimension")
        p.add_argument("--grid", type=int, default=None, help="override grid size")
        p.add_argument("--t-end", type=float, default=None, help="override t_end")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        # table paths are understood relative to the config file's directory
        table = file_values.get("initial.table")
        if args.config and table and not Path(table).is_absolute():
            file_values["initial.table"] = str(Path(args.config).parent / table)
        overrides = {
            "n": args.n,
            "grid.size": args.grid,
            "solver.t_end": args.t_end,
            "output.dir": args.out,
        }
        resolved = resolve_config(file_values, overrides)
        if args.command == "plot":
            return cmd_plot(Path(resolved["output.dir"]))[1]
        cfg = build_run_config(resolved)
        if args.command == "run":
            return cmd_run(cfg)[1]
        if args.command == "verify":
            return cmd_verify(cfg)[1]
        return cmd_sweep(cfg)[1]
    except (ConfigError, InadmissibleSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, MissingColumn) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AHFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TERMINATION


if __name__ == "__main__":
    sys.exit(main())
