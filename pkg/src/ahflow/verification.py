"""The batch verification matrix behind the ``verify`` command.

One entry per check, pass/fail plus worst margin, covering: exact-identity
residuals on random admissible profiles, fixed-point stationarity of the
stepper, cross-formulation agreement between the primary and oracle solvers,
convergence-order studies (space and time), residuals of the two derived
evolution equations, a deliberately corrupted-coefficient negative control,
and every theorem-envelope check on a standard matrix of regime runs.

Checks that need finer grids than the configured resolution report
not-applicable (holds=True with a note) instead of failing.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .diagnostics import (
    BoundCheckEntry,
    BoundCheckReport,
    check_kappa_decay,
    check_lambda_lower_envelope,
    check_lambda_upper_envelopes,
    check_rm_decay,
    evolution_residuals,
)
from .evolution import SolverConfig, lambda_from_w, run
from .geometry import (
    CurvatureProfile,
    RadialGrid,
    bianchi_residual,
    f_from_lambda,
    gauss_codazzi_residual,
    kappa_from_f,
    kappa_from_lambda,
    lambda_from_f,
    sup_r2_lambda,
)
from .initial_data import InitialDataSpec, build_profile, evaluate_family

__all__ = ["run_verification", "random_admissible_profile"]

EPS = float(np.finfo(np.float64).eps)

# standard regime matrix: one run per sign pattern the theory distinguishes
REGIME_SPECS = {
    "hyperbolic": InitialDataSpec("hyperbolic"),
    "below_minus_one": InitialDataSpec("gaussian_bump", amplitude=-0.5, width=1.0),
    "strictly_negative": InitialDataSpec("gaussian_bump", amplitude=0.5, width=1.0),
    "nonpositive_touching": InitialDataSpec("gaussian_bump", amplitude=1.0, width=1.0),
}


def random_admissible_profile(
    grid: RadialGrid, rng: np.random.Generator, n: int = 3
) -> CurvatureProfile:
    """Random smooth admissible profile: -1 plus a few symmetrized bumps,
    rejection-sampled to stay clear of the minimal-sphere threshold."""
    while True:
        lam = np.full(grid.size, -1.0)
        for _ in range(rng.integers(1, 4)):
            spec = InitialDataSpec(
                "gaussian_bump",
                amplitude=float(rng.uniform(-0.8, 0.8)),
                center=float(rng.uniform(0.0, 3.0)),
                width=float(rng.uniform(0.3, 2.0)),
            )
            lam += evaluate_family(spec, grid.r_nodes) + 1.0
        profile = CurvatureProfile(grid, lam, n)
        if sup_r2_lambda(profile) < 0.9:
            return profile



def _with_dimension(spec: InitialDataSpec, n: int) -> InitialDataSpec:
    return InitialDataSpec(spec.family, amplitude=spec.amplitude,
                           center=spec.center, width=spec.width, dimension=n,
                           table=spec.table)

def _entry(name, holds, margin, note=""):
    return BoundCheckEntry(
        name=name, holds=bool(holds), worst_margin=float(margin),
        worst_t=float("nan"), note=note,
    )


def _not_applicable(name, note):
    return BoundCheckEntry(
        name=name, holds=True, worst_margin=float("nan"), worst_t=float("nan"),
        note=f"not applicable: {note}",
    )


def _identity_checks(grid: RadialGrid, n: int, rng) -> list[BoundCheckEntry]:
    worst_rt = 0.0
    worst_gc = 0.0
    rsq = grid.r_squared[1:]
    rt_scale = np.maximum(1.0, 1.0 / rsq)
    for _ in range(100):
        p = random_admissible_profile(grid, rng, n)
        f = f_from_lambda(p)
        lam_back = lambda_from_f(grid, f, n)
        rt = np.max(np.abs(lam_back[1:] - p.lam[1:]) / (10.0 * EPS * rt_scale))
        worst_rt = max(worst_rt, float(rt))
        gc = gauss_codazzi_residual(p)
        gc_scale = 1.0 / rsq + np.abs(p.lam[1:]) + (1.0 - rsq * p.lam[1:]) / rsq
        worst_gc = max(worst_gc, float(np.max(np.abs(gc[1:]) / gc_scale)))
    return [
        _entry("identity_roundtrip", worst_rt <= 1.0, 1.0 - worst_rt,
               note="|lam - roundtrip| / (10 eps max(1, 1/r^2)), 100 profiles"),
        _entry("identity_gauss_codazzi", worst_gc <= 1e-12, 1e-12 - worst_gc,
               note="max |residual| / (1/r^2-scale) over 100 profiles"),
    ]


def _smooth_test_profile(grid: RadialGrid, n: int) -> CurvatureProfile:
    spec = InitialDataSpec("gaussian_bump", amplitude=-0.4, center=1.0, width=0.8,
                           dimension=n)
    return build_profile(spec, grid)


def _kappa_cross_checks(size: int, n: int) -> list[BoundCheckEntry]:
    if size < 64:
        return [_not_applicable("identity_kappa_cross_order", "grid too coarse"),
                _not_applicable("identity_bianchi_order", "grid too coarse")]
    diffs = []
    bres = []
    for m in (size // 2, size):
        grid = RadialGrid(m)
        p = _smooth_test_profile(grid, n)
        f = f_from_lambda(p)
        diffs.append(float(np.max(np.abs(
            kappa_from_lambda(p) - kappa_from_f(grid, f, n)))))
        bres.append(float(np.max(np.abs(bianchi_residual(grid, f, n)))))
    order_k = float(np.log2(diffs[0] / diffs[1]))
    order_b = float(np.log2(bres[0] / bres[1]))
    return [
        _entry("identity_kappa_cross_order", 1.7 <= order_k <= 2.3,
               order_k - 2.0, note=f"observed order {order_k:.2f}"),
        _entry("identity_bianchi_order", 1.5 <= order_b <= 2.5,
               order_b - 2.0, note=f"observed order {order_b:.2f}"),
    ]


def _fixed_point_checks(size: int, n: int, cfl: float) -> list[BoundCheckEntry]:
    out = []
    grid = RadialGrid(size)
    horizon = 0.5
    for name, value in (("fixed_point_hyperbolic", -1.0), ("fixed_point_flat", 0.0)):
        p = CurvatureProfile(grid, np.full(grid.size, value), n)
        cfg = SolverConfig(t_end=horizon, convergence_tol=0.0, cfl_factor=cfl,
                           record_stride=10**9, snapshot_stride=10**9)
        traj = run(p, cfg)
        drift = float(np.max(np.abs(traj.snapshots[-1].profile.lam - value)))
        tol = 1e-13 * horizon
        out.append(_entry(name, drift <= tol, tol - drift,
                          note=f"sup drift {drift:.2e} over t={horizon}"))
    return out


def _cross_solver_check(size: int, n: int, cfl: float) -> BoundCheckEntry:
    if size < 128:
        return _not_applicable("cross_solver_agreement", "grid too coarse")
    grid = RadialGrid(size)
    p = build_profile(_with_dimension(REGIME_SPECS["below_minus_one"], n), grid)
    traj = run(p, SolverConfig(t_end=1.0, convergence_tol=0.0, cfl_factor=cfl,
                               record_stride=10**9, snapshot_stride=10**9))
    lam_l = traj.snapshots[-1].profile.lam

    fields = {}
    for nw in (401, 801):
        cfg = SolverConfig(formulation="w_oracle", t_end=1.0, convergence_tol=0.0,
                           cfl_factor=0.5, w_grid_size=nw,
                           record_stride=10**9, snapshot_stride=10**9)
        tw = run(p, cfg)
        fields[nw] = (tw.w_r_nodes, tw.w_snapshots[-1][1])
    r_c, w_c = fields[401]
    _, w_f = fields[801]
    # one Richardson combination sharpens the oracle's O(dr^2) error without
    # touching the primary solver; both inputs are pure w-solver output
    w_ext = (4.0 * w_f[::2] - w_c) / 3.0
    lam_w = lambda_from_w(r_c, w_ext)
    sel = grid.r_nodes <= 10.0
    lam_w_on_grid = CubicSpline(r_c, lam_w)(grid.r_nodes[sel])
    diff = float(np.max(np.abs(lam_w_on_grid - lam_l[sel])))
    return _entry("cross_solver_agreement", diff <= 1e-4, 1e-4 - diff,
                  note=f"sup diff {diff:.2e} on r<=10 at t=1")


def spatial_order_study(size: int, n: int, cfl: float,
                        t_end: float = 0.25) -> tuple[float, list[float]]:
    """Observed order from a nested trio (size/4, size/2, size)."""
    sols = {}
    for m in (size // 4, size // 2, size):
        grid = RadialGrid(m)
        p = build_profile(_with_dimension(REGIME_SPECS["below_minus_one"], n), grid)
        cfg = SolverConfig(t_end=t_end, convergence_tol=0.0, cfl_factor=cfl,
                           record_stride=10**9, snapshot_stride=10**9)
        sols[m] = run(p, cfg).snapshots[-1].profile.lam
    e1 = float(np.max(np.abs(sols[size // 4] - sols[size // 2][::2])))
    e2 = float(np.max(np.abs(sols[size // 2] - sols[size][::2])))
    return float(np.log2(e1 / e2)), [e1, e2]


def temporal_order_study(
    size: int = 32, width: float = 0.1, t_end: float = 0.003, n: int = 3
) -> tuple[float, list[float]]:
    """Observed RK4 order on a fixed grid via step halving against a fine
    reference.  A narrow bump populates fast transients so the temporal error
    sits far above roundoff while dt stays inside the stability region; the
    horizon is a few transient timescales so the committed error is not
    diffused away before it is measured."""
    grid = RadialGrid(size)
    spec = InitialDataSpec("gaussian_bump", amplitude=-0.5, width=width,
                           dimension=n)
    p = build_profile(spec, grid)
    # base step at ~86% of the RK4 real-axis bound for the stiffest (origin)
    # mode, whose effective diffusion carries the dimension factor n+2
    dt0 = 1.2 * grid.spacing**2 / (n + 2.0)
    finals = []
    for k in range(5):
        cfg = SolverConfig(t_end=t_end, convergence_tol=0.0, dt_fixed=dt0 / 2**k,
                           record_stride=10**9, snapshot_stride=10**9)
        finals.append(run(p, cfg).snapshots[-1].profile.lam)
    ref = finals[-1]
    errs = [float(np.max(np.abs(f - ref))) for f in finals[:-1]]
    orders = [float(np.log2(errs[k] / errs[k + 1])) for k in range(len(errs) - 1)]
    return float(np.mean(orders)), errs


def _order_checks(size: int, n: int, cfl: float) -> list[BoundCheckEntry]:
    out = []
    if size < 64:
        out.append(_not_applicable("spatial_order", "grid too coarse"))
    else:
        order, _ = spatial_order_study(size, n, cfl)
        out.append(_entry("spatial_order", 1.7 <= order <= 2.3, order - 2.0,
                          note=f"observed {order:.2f}, expected 2.0 +- 0.3"))
    order_t, _ = temporal_order_study(n=n)
    out.append(_entry("temporal_order", 3.5 <= order_t <= 4.5, order_t - 4.0,
                      note=f"observed {order_t:.2f}, expected 4.0 +- 0.5"))
    return out


def _snapshot_run(grid: RadialGrid, stride: int, t_end: float, cfl: float,
                  scale: float = 1.0, n: int = 3):
    p = build_profile(_with_dimension(REGIME_SPECS["below_minus_one"], n), grid)
    cfg = SolverConfig(t_end=t_end, convergence_tol=0.0, cfl_factor=cfl,
                       record_stride=stride, snapshot_stride=stride,
                       advective_coefficient_scale=scale)
    return run(p, cfg)


def _residual_checks(size: int, n: int, cfl: float) -> list[BoundCheckEntry]:
    out = []
    if size < 64:
        return [
            _not_applicable("kappa_evolution_residual_dt_order", "grid too coarse"),
            _not_applicable("gap_evolution_residual_dt_order", "grid too coarse"),
            _not_applicable("kappa_evolution_residual_dx_order", "grid too coarse"),
            _not_applicable("gap_evolution_residual_dx_order", "grid too coarse"),
        ]
    # dt-direction: fixed grid, halve the snapshot spacing
    grid = RadialGrid(min(size, 256))
    res = []
    for stride in (8192, 4096):
        traj = _snapshot_run(grid, stride, 0.2, cfl, n=n)
        res.append(evolution_residuals(traj.snapshots))
    k_ord = float(np.log2(res[0][0] / res[1][0]))
    g_ord = float(np.log2(res[0][1] / res[1][1]))
    out.append(_entry("kappa_evolution_residual_dt_order", k_ord >= 0.9,
                      k_ord - 1.0, note=f"observed {k_ord:.2f}, expected >= 1"))
    out.append(_entry("gap_evolution_residual_dt_order", g_ord >= 0.9,
                      g_ord - 1.0, note=f"observed {g_ord:.2f}, expected >= 1"))
    # dx-direction: snapshots at consecutive steps (dt part negligible)
    if size < 128:
        out.append(_not_applicable("kappa_evolution_residual_dx_order",
                                   "grid too coarse"))
        out.append(_not_applicable("gap_evolution_residual_dx_order",
                                   "grid too coarse"))
        return out
    res = []
    for m in (size // 4, size // 2):
        traj = _snapshot_run(RadialGrid(m), 1, 0.02, cfl, n=n)
        res.append(evolution_residuals(traj.snapshots[1:4]))
    k_ord = float(np.log2(res[0][0] / res[1][0]))
    g_ord = float(np.log2(res[0][1] / res[1][1]))
    out.append(_entry("kappa_evolution_residual_dx_order", 1.5 <= k_ord <= 2.5,
                      k_ord - 2.0, note=f"observed {k_ord:.2f}, expected ~2"))
    out.append(_entry("gap_evolution_residual_dx_order", 1.5 <= g_ord <= 2.5,
                      g_ord - 2.0, note=f"observed {g_ord:.2f}, expected ~2"))
    return out


def _negative_control(size: int, n: int, cfl: float) -> BoundCheckEntry:
    """A mis-scaled first-order coefficient must light up the residual check."""
    if size < 64:
        return _not_applicable("negative_control_corrupted_coefficient",
                               "grid too coarse")
    grid = RadialGrid(min(size, 128))
    clean = evolution_residuals(
        _snapshot_run(grid, 64, 0.05, cfl, n=n).snapshots[1:5])
    corrupt = evolution_residuals(
        _snapshot_run(grid, 64, 0.05, cfl, scale=1.05, n=n).snapshots[1:5])
    ratio = corrupt[0] / max(clean[0], 1e-300)
    return _entry("negative_control_corrupted_coefficient", ratio >= 5.0,
                  ratio - 5.0,
                  note=f"corrupted/clean residual ratio {ratio:.1f}")


def _envelope_matrix(size: int, n: int, cfl: float, atol: float,
                     ctol: float) -> list[BoundCheckEntry]:
    grid = RadialGrid(size)
    out = []
    for label, spec in REGIME_SPECS.items():
        p = build_profile(_with_dimension(spec, n), grid)
        t_end = 10.0 if label in ("below_minus_one", "strictly_negative") else 5.0
        conv = 1e-10 if label == "hyperbolic" else 0.0
        cfg = SolverConfig(t_end=t_end, convergence_tol=conv, cfl_factor=cfl)
        traj = run(p, cfg)
        checks = [check_lambda_lower_envelope(traj, p, atol=atol, ctol=ctol)]
        checks += check_lambda_upper_envelopes(traj, p, atol=atol, ctol=ctol)
        checks += check_kappa_decay(traj, p, atol=atol, ctol=ctol)
        if label in ("below_minus_one", "strictly_negative"):
            entry, _ = check_rm_decay(traj, p)
            checks.append(entry)
        for e in checks:
            out.append(BoundCheckEntry(
                name=f"{label}.{e.name}", holds=e.holds,
                worst_margin=e.worst_margin, worst_t=e.worst_t,
                worst_r=e.worst_r, note=e.note,
            ))
    return out


def run_verification(
    n: int = 3,
    grid_size: int = 256,
    *,
    cfl_factor: float = 0.9,
    atol: float = 1e-5,
    ctol: float = 10.0,
    seed: int = 0,
) -> BoundCheckReport:
    """Run the whole matrix at the configured resolution."""
    rng = np.random.default_rng(seed)
    grid = RadialGrid(grid_size)
    entries: list[BoundCheckEntry] = []
    entries += _identity_checks(grid, n, rng)
    entries += _kappa_cross_checks(grid_size, n)
    entries += _fixed_point_checks(grid_size, n, cfl_factor)
    entries.append(_cross_solver_check(max(grid_size, 256), n, cfl_factor))
    entries += _order_checks(grid_size, n, cfl_factor)
    entries += _residual_checks(grid_size, n, cfl_factor)
    entries.append(_negative_control(grid_size, n, cfl_factor))
    entries += _envelope_matrix(grid_size, n, cfl_factor, atol, ctol)
    return BoundCheckReport(entries)
