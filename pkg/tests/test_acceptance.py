"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
Heavy trajectories are session fixtures shared with the rest of the suite.
"""

import time

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from ahflow.diagnostics import (
    check_lambda_lower_envelope,
    check_lambda_upper_envelopes,
    check_rm_decay,
    evolution_residuals,
    fit_decay,
    noise_floor,
    slack_for,
)
from ahflow.evolution import SolverConfig, lambda_from_w, run
from ahflow.geometry import (
    RadialGrid,
    f_from_lambda,
    gauss_codazzi_residual,
    lambda_from_f,
)
from ahflow.initial_data import InitialDataSpec, build_profile
from ahflow.verification import (
    random_admissible_profile,
    run_verification,
    spatial_order_study,
    temporal_order_study,
)

EPS = float(np.finfo(np.float64).eps)


def criterion(num: int, ok: bool, detail: str):
    line = f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def run_below_128():
    grid = RadialGrid(128)
    p = build_profile(
        InitialDataSpec("gaussian_bump", amplitude=-0.5, center=0.0, width=1.0),
        grid,
    )
    cfg = SolverConfig(t_end=10.0, convergence_tol=0.0, cfl_factor=0.9)
    return p, run(p, cfg)


@pytest.fixture(scope="session")
def run_touching():
    grid = RadialGrid(256)
    p = build_profile(
        InitialDataSpec("gaussian_bump", amplitude=1.0, center=0.0, width=1.0),
        grid,
    )
    cfg = SolverConfig(t_end=10.0, convergence_tol=0.0, cfl_factor=0.9)
    return p, run(p, cfg)


@pytest.fixture(scope="session")
def run_poly512():
    grid = RadialGrid(512)
    p = build_profile(
        InitialDataSpec("polynomial_bump", amplitude=0.3, width=1.0), grid
    )
    cfg = SolverConfig(t_end=20.0, convergence_tol=1e-8, cfl_factor=0.9)
    return p, run(p, cfg)


def test_criterion_01_hyperbolic_fixed_point():
    grid = RadialGrid(512)
    p = build_profile(InitialDataSpec("hyperbolic"), grid)
    start = time.perf_counter()
    traj = run(p, SolverConfig(t_end=5.0))
    wall = time.perf_counter() - start
    worst = max(rec.sup_rm_plus_k for rec in traj.records)
    ok = worst < 1e-10 and wall < 30.0
    criterion(1, ok, f"sup|Rm+K| = {worst:.2e} (< 1e-10), wall = {wall:.2f}s (< 30s), "
                     f"verdict = {traj.verdict}")


def test_criterion_02_identity_suite(grid256, rng):
    worst_gc = 0.0
    worst_rt = 0.0
    rsq = grid256.r_squared[1:]
    rt_scale = np.maximum(1.0, 1.0 / rsq)
    for _ in range(100):
        p = random_admissible_profile(grid256, rng)
        gc = gauss_codazzi_residual(p)
        gc_scale = 1.0 / rsq + np.abs(p.lam[1:]) + (1.0 - rsq * p.lam[1:]) / rsq
        worst_gc = max(worst_gc, float(np.max(np.abs(gc[1:]) / gc_scale)))
        back = lambda_from_f(grid256, f_from_lambda(p), 3)
        worst_rt = max(worst_rt, float(
            np.max(np.abs(back[1:] - p.lam[1:]) / rt_scale)))
    ok = worst_gc <= 1e-12 and worst_rt <= 10 * EPS
    criterion(2, ok, f"Gauss-Codazzi residual {worst_gc:.2e} <= 1e-12 (1/r^2 scale), "
                     f"roundtrip {worst_rt / EPS:.1f} eps <= 10 eps (local scale), "
                     f"100 profiles")


def test_criterion_03_cross_solver_and_residual_orders():
    # consistency oracle: lam-solver vs w-solver from the same initial data
    spec = InitialDataSpec("gaussian_bump", amplitude=-0.5, center=0.0, width=1.0)
    grid = RadialGrid(512)
    p = build_profile(spec, grid)
    traj = run(p, SolverConfig(t_end=1.0, convergence_tol=0.0, cfl_factor=0.9,
                               record_stride=10**9, snapshot_stride=10**9))
    lam_l = traj.snapshots[-1].profile.lam

    fields = {}
    for nw in (401, 801):
        cfg = SolverConfig(formulation="w_oracle", t_end=1.0, convergence_tol=0.0,
                           cfl_factor=0.5, w_grid_size=nw,
                           record_stride=10**9, snapshot_stride=10**9)
        tw = run(p, cfg)
        assert tw.w_snapshots[-1][0] == pytest.approx(1.0, abs=1e-12)
        fields[nw] = (tw.w_r_nodes, tw.w_snapshots[-1][1])
    r_c, w_c = fields[401]
    _, w_f = fields[801]
    w_ext = (4.0 * w_f[::2] - w_c) / 3.0
    lam_w = lambda_from_w(r_c, w_ext)
    sel = grid.r_nodes <= 10.0
    diff = float(np.max(np.abs(
        CubicSpline(r_c, lam_w)(grid.r_nodes[sel]) - lam_l[sel])))

    # residual orders of the two derived evolution equations
    res_dt = []
    for stride in (8192, 4096):
        g = RadialGrid(256)
        pp = build_profile(spec, g)
        cfg = SolverConfig(t_end=0.2, convergence_tol=0.0, cfl_factor=0.9,
                           record_stride=stride, snapshot_stride=stride)
        res_dt.append(evolution_residuals(run(pp, cfg).snapshots))
    dt_orders = [np.log2(res_dt[0][i] / res_dt[1][i]) for i in (0, 1)]

    res_dx = []
    for size in (64, 128):
        g = RadialGrid(size)
        pp = build_profile(spec, g)
        cfg = SolverConfig(t_end=0.02, convergence_tol=0.0, cfl_factor=0.9,
                           record_stride=1, snapshot_stride=1)
        res_dx.append(evolution_residuals(run(pp, cfg).snapshots[1:4]))
    dx_orders = [np.log2(res_dx[0][i] / res_dx[1][i]) for i in (0, 1)]

    ok = (diff <= 1e-4 and all(o >= 1.0 for o in dt_orders)
          and all(1.5 <= o <= 2.5 for o in dx_orders))
    criterion(3, ok, f"cross-solver sup diff {diff:.2e} <= 1e-4 on r<=10 at t=1; "
                     f"residual orders dt {dt_orders[0]:.2f}/{dt_orders[1]:.2f} >= 1, "
                     f"dx {dx_orders[0]:.2f}/{dx_orders[1]:.2f} ~ 2")


def test_criterion_04_lower_envelope_with_refinement(profile_below, run_below,
                                                     run_below_128):
    entry = check_lambda_lower_envelope(run_below, profile_below)
    p128, traj128 = run_below_128
    entry128 = check_lambda_lower_envelope(traj128, p128)
    # the envelope violation must shrink under grid doubling (the slack model
    # presumes truncation-level violations vanish on refinement); violations
    # already at rounding level (< 1e-9) count as vanished
    violation_fine = max(0.0, -entry.worst_margin)
    violation_coarse = max(0.0, -entry128.worst_margin)
    improved = violation_fine <= max(0.5 * violation_coarse, 1e-9)
    ok = entry.holds and entry128.holds and improved
    if violation_fine < 1e-9:
        refine_note = "violations at rounding level on both grids"
    else:
        refine_note = f"violation {violation_coarse:.1e} -> {violation_fine:.1e}"
    criterion(4, ok, f"min lam >= -1 + e^(-4t) inf(lam0+1) - slack: "
                     f"margin {entry.worst_margin:.2e} at N=256, "
                     f"{entry128.worst_margin:.2e} at N=128; {refine_note}")


def test_criterion_05_nonpositive_preservation(profile_below, run_below,
                                               run_touching):
    slack = slack_for(1.0 / 256)
    p_touch, traj_touch = run_touching
    max_touch = max(rec.max_lambda for rec in traj_touch.records)
    max_below = max(rec.max_lambda for rec in run_below.records)
    ok = (traj_touch.records[-1].t >= 10.0 - 1e-9
          and run_below.records[-1].t >= 10.0 - 1e-9
          and max_touch <= slack
          and max_below <= -1.0 + slack)
    criterion(5, ok, f"lam0 <= 0 data: max lam = {max_touch:.2e} <= slack {slack:.1e}; "
                     f"lam0 <= -1 data: max lam = {max_below:.6f} <= -1 + slack; "
                     f"both over t <= 10")


def test_criterion_06_exponential_upper_envelope(profile_neg, run_neg):
    entries = {e.name: e for e in check_lambda_upper_envelopes(run_neg, profile_neg)}
    entry = entries["lambda_upper_exponential"]
    # the acceptance curve as literally stated, with delta^2 = 0.495
    slack = slack_for(1.0 / 256)
    t = run_neg.times
    stated = -1.0 + 0.505 * np.exp(-3.96 * t) + slack
    margin_stated = float(np.min(stated - run_neg.series("max_lambda")))
    ok = entry.holds and margin_stated >= 0.0
    criterion(6, ok, f"max lam <= -1 + 0.505 e^(-2(n-1) delta^2 t) + slack holds "
                     f"(margin {entry.worst_margin:.2e}); stated 3.96-rate curve "
                     f"margin {margin_stated:.2e} >= 0")


def test_criterion_07_gap_decay_rate(run_below):
    t = run_below.times
    y = run_below.series("sup_kappa_minus_lambda_abs")
    floor = max(1e-12, noise_floor(y))
    fit = fit_decay(t, y, window=(2.0, 10.0), floor=floor)
    ok = fit.rate_fit >= 3.0
    criterion(7, ok, f"fitted decay rate of sup|kappa-lambda| on [2,10] is "
                     f"{fit.rate_fit:.2f} >= 3.0 (any rate < 4 is guaranteed; "
                     f"{fit.n_samples} samples above floor {floor:.1e})")


def test_criterion_08_convergence_to_hyperbolic(run_poly512):
    p, traj = run_poly512
    entry, fit = check_rm_decay(traj, p)
    final = traj.records[-1].sup_rm_plus_k
    t_final = traj.records[-1].t
    ok = (fit is not None and fit.rate_fit > 0 and fit.residual_rms < 0.1
          and final < 1e-6 and t_final <= 20.0)
    criterion(8, ok, f"lam0 < 0 at N=512: rate {fit.rate_fit:.2f} > 0, "
                     f"rms {fit.residual_rms:.3f} < 0.1, final sup|Rm+K| "
                     f"{final:.1e} < 1e-6 at t = {t_final:.2f} <= 20 "
                     f"({traj.verdict})")


def test_criterion_09_orders_of_accuracy():
    s_order, _ = spatial_order_study(256, 3, 0.9)
    t_order, errs = temporal_order_study()
    ok = 1.7 <= s_order <= 2.3 and 3.5 <= t_order <= 4.5
    criterion(9, ok, f"observed spatial order {s_order:.2f} (2.0 +- 0.3), "
                     f"temporal order {t_order:.2f} (4.0 +- 0.5, "
                     f"coarsest error {errs[0]:.1e})")


def test_criterion_10_neckpinch_sweep_and_verify_runtime(tmp_path):
    from ahflow.cli import main

    cfg_path = tmp_path / "sweep.cfg"
    cfg_path.write_text(
        "grid.size = 128\n"
        "initial.family = gaussian_bump\n"
        "initial.center = 2.0\n"
        "initial.width = 0.3\n"
        "solver.t_end = 2.0\n"
        "solver.cfl_factor = 0.9\n"
        "sweep.parameter = initial.amplitude\n"
        "sweep.values = 0.9, 1.05, 1.2\n"
    )
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cfg_path), "--out", str(out)])
    import csv as csvmod

    with open(out / "sweep_summary.csv", newline="") as fh:
        rows = list(csvmod.reader(fh))
    header, body = rows[0], rows[1:]
    verdict_col = header.index("verdict")
    definite = all(
        row[verdict_col] in ("converged", "neckpinch", "reached_t_end",
                             "blowup", "inadmissible")
        for row in body
    )
    # monitor logged at strictly increasing times with no NaN for every point
    monitors_ok = True
    for k in range(len(body)):
        rec_path = out / f"point_{k:03d}" / "records.csv"
        if not rec_path.exists():
            continue
        with open(rec_path, newline="") as fh:
            rrows = list(csvmod.reader(fh))
        t = np.array([float(r[0]) for r in rrows[1:]])
        r2l = np.array([float(r[6]) for r in rrows[1:]])
        monitors_ok &= bool(np.all(np.diff(t) > 0) and np.all(np.isfinite(r2l)))

    start = time.perf_counter()
    report = run_verification(n=3, grid_size=256, cfl_factor=0.9)
    verify_wall = time.perf_counter() - start

    ok = (code == 0 and definite and monitors_ok and report.all_hold
          and verify_wall < 600.0)
    criterion(10, ok, f"sweep of {len(body)} sign-indefinite points: all definite "
                      f"verdicts, monitors finite and monotone-logged; full verify "
                      f"matrix {'all pass' if report.all_hold else 'HAS FAILURES'} "
                      f"in {verify_wall:.0f}s < 600s")
