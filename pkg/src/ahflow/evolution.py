"""Time integration of the gauge-fixed flow.

Two independent formulations of the same flow are provided:

* the primary solver evolves the orbit curvature ``lam`` on the compactified
  x-grid, where the closed scalar equation has an O(1) effective diffusion
  coefficient and the trivial far-field condition lam = -1;
* the oracle solver evolves w = f^2 on a truncated uniform r-grid, obtained
  by expanding the metric-coefficient equation directly.  It exists purely to
  cross-check the primary solver's algebra through a different unknown,
  different coordinates and different boundary treatment.

Both use classical RK4 with a diffusive CFL step and re-impose the boundary
data after every stage (implemented by zeroing the stage slopes at held
nodes, so whatever value the initial data carries at the last node stays
put).  Stopping rules are enforced after every accepted step: curvature-norm
blowup, minimal-sphere proximity (neckpinch), convergence to the constant
curvature -1 state, and time-step underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from . import _kernels
from .errors import InadmissibleSpec, MinimalSphereViolation, NonpositiveMetric, StepUnderflow
from .geometry import (
    CurvatureProfile,
    RadialGrid,
    f_from_lambda,
    first_derivative_x,
    sup_r2_lambda,
)

__all__ = [
    "SolverConfig",
    "FlowState",
    "Trajectory",
    "VERDICTS",
    "rhs_lambda",
    "rhs_lambda_direct",
    "rhs_w",
    "step",
    "run",
]

VERDICT_REACHED_T_END = "reached_t_end"
VERDICT_CONVERGED = "converged"
VERDICT_BLOWUP = "blowup"
VERDICT_NECKPINCH = "neckpinch"
VERDICT_STEP_UNDERFLOW = "step_underflow"
VERDICTS = (
    VERDICT_REACHED_T_END,
    VERDICT_CONVERGED,
    VERDICT_BLOWUP,
    VERDICT_NECKPINCH,
    VERDICT_STEP_UNDERFLOW,
)

_STATUS_TO_VERDICT = {
    _kernels.STATUS_T_END: VERDICT_REACHED_T_END,
    _kernels.STATUS_CONVERGED: VERDICT_CONVERGED,
    _kernels.STATUS_BLOWUP: VERDICT_BLOWUP,
    _kernels.STATUS_NECKPINCH: VERDICT_NECKPINCH,
    _kernels.STATUS_UNDERFLOW: VERDICT_STEP_UNDERFLOW,
    _kernels.STATUS_NONPOSITIVE: VERDICT_BLOWUP,
}


@dataclass(frozen=True)
class SolverConfig:
    """Integration parameters and stopping thresholds.

    ``cfl_factor`` multiplies the diffusive step dx^2 / max(diffusion); RK4 is
    stable for values up to about 0.69, and the library deliberately accepts
    larger values so instability handling can be exercised.  ``dt_fixed`` (> 0)
    overrides the CFL rule for convergence studies.  Strides count steps
    between diagnostic records / state snapshots; 0 picks sensible values from
    the estimated total step count.  ``advective_coefficient_scale`` is a
    verification hook that mis-scales the first-order coefficient of the
    primary equation; leave at 1 for real runs.
    """

    formulation: str = "lambda_primary"
    cfl_factor: float = 0.5
    t_end: float = 10.0
    blowup_threshold: float = 1e6
    neckpinch_threshold: float = 1.0 - 1e-3
    convergence_tol: float = 1e-8
    record_stride: int = 0
    snapshot_stride: int = 0
    dt_fixed: float = 0.0
    w_domain_radius: float = 20.0
    w_grid_size: int = 801
    advective_coefficient_scale: float = 1.0

    def __post_init__(self):
        if self.formulation not in ("lambda_primary", "w_oracle"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.cfl_factor <= 0:
            raise ValueError("cfl_factor must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.blowup_threshold <= 0 or not 0 < self.neckpinch_threshold < 1:
            raise ValueError("thresholds must be positive (neckpinch in (0,1))")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")


@dataclass(frozen=True)
class FlowState:
    """One instant of the flow: time, curvature profile, solver bookkeeping."""

    t: float
    profile: CurvatureProfile
    step_count: int = 0
    dt_last: float = 0.0


@dataclass
class Trajectory:
    """Time-ordered diagnostics, sparse snapshots, and the final verdict."""

    records: list
    snapshots: list[FlowState]
    verdict: str
    config: SolverConfig
    dimension: int
    # set only for w-oracle runs: the truncated r-grid and (t, w) snapshots
    w_r_nodes: np.ndarray | None = None
    w_snapshots: list[tuple[float, np.ndarray]] | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])


# ---------------------------------------------------------------------------
# coefficient arrays, cached per (grid size, dimension, hook scale)

_COEF_CACHE: dict = {}


def _lambda_coefficients(grid: RadialGrid, n: int, scale: float):
    key = (grid.size, n, scale)
    hit = _COEF_CACHE.get(key)
    if hit is not None:
        return hit
    x = grid.x_nodes
    r = grid.r_nodes
    s = grid.dr_dx
    crr_a = s * s
    crr_b = 2.0 * (1.0 - x) ** 3
    adv = np.empty_like(r)
    adv[0] = 0.0
    adv[1:] = ((n + 1.0) / r[1:] + (n - 1.0) * r[1:]) * scale
    half_r2 = 0.5 * grid.r_squared
    coefs = (r, grid.r_squared, s, crr_a, crr_b, adv, half_r2)
    _COEF_CACHE[key] = coefs
    return coefs


def rhs_lambda(state: FlowState) -> np.ndarray:
    """Time derivative of the orbit curvature (reduced closed form).

    Interior nodes:
        (1 - r^2 lam) lam_rr + [(n+1)/r + (n-1) r - r lam] lam_r
        + (r^2/2) lam_r^2 + 2(n-1) lam (lam+1)
    Origin (parity + L'Hopital limit):
        (n+2) lam_xx(0) + 2(n-1) lam(0)(lam(0)+1)
    Last node: 0 (held at its initial value).

    This numpy implementation is the readable reference; the compiled kernel
    in ``_kernels`` repeats the same arithmetic node-by-node.
    """
    profile = state.profile
    grid = profile.grid
    n = profile.dimension
    lam = profile.lam
    if sup_r2_lambda(profile) >= 1.0:
        raise MinimalSphereViolation("1 - r^2*lam <= 0 somewhere; flow state invalid")
    r, r2, s, crr_a, crr_b, adv, half_r2 = _lambda_coefficients(grid, n, 1.0)
    dx = grid.spacing
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / (dx * dx)
    out = np.empty_like(lam)
    lx = (lam[2:] - lam[:-2]) * inv2dx
    lxx = (lam[2:] - 2.0 * lam[1:-1] + lam[:-2]) * invdx2
    lr = s[1:-1] * lx
    lrr = crr_a[1:-1] * lxx - crr_b[1:-1] * lx
    lv = lam[1:-1]
    diff = 1.0 - r2[1:-1] * lv
    out[1:-1] = (
        diff * lrr
        + (adv[1:-1] - r[1:-1] * lv) * lr
        + half_r2[1:-1] * lr * lr
        + 2.0 * (n - 1.0) * lv * (lv + 1.0)
    )
    out[0] = (n + 2.0) * 2.0 * (lam[1] - lam[0]) * invdx2 + 2.0 * (n - 1.0) * lam[
        0
    ] * (lam[0] + 1.0)
    out[-1] = 0.0
    return out


def rhs_lambda_direct(state: FlowState) -> np.ndarray:
    """Term-by-term evaluation of the same equation through the metric
    coefficient, used to validate the reduced closed form.

    Computes, with f and its own difference stencils:
      scalar Laplacian   (1/f^2) lam_rr + (n-1)/(r f^2) lam_r - (f_r/f^3) lam_r
      gauge transport    [(n+1)/r - (n-1)/(r f^2) + (n-1) r] lam_r
      gradient square    r^2 f^2 |d lam|^2 with |d lam|^2 = lam_r^2 / f^2
      reaction           2(n-1) lam (lam+1)
    The reduced form substitutes 1/f^2 = 1 - r^2 lam and the radial Bianchi
    relation f_r/f^3 = r lam + (r^2/2) lam_r; the two evaluations therefore
    agree only up to O(dx^2), which is exactly what the consistency test
    measures.  Origin and last node share the primary's boundary treatment.
    """
    profile = state.profile
    grid = profile.grid
    n = profile.dimension
    lam = profile.lam
    f = f_from_lambda(profile)
    dx = grid.spacing
    s = grid.dr_dx
    r = grid.r_nodes
    lam_x = first_derivative_x(lam, dx)
    lam_r = s * lam_x
    lxx = (lam[2:] - 2.0 * lam[1:-1] + lam[:-2]) / (dx * dx)
    lam_rr = (s[1:-1] ** 2) * lxx - 2.0 * (1.0 - grid.x_nodes[1:-1]) ** 3 * lam_x[1:-1]
    f_r = s * first_derivative_x(f, dx)

    ri = r[1:-1]
    fi = f[1:-1]
    inv_f2 = 1.0 / fi**2
    laplacian = (
        inv_f2 * lam_rr
        + (n - 1.0) / ri * inv_f2 * lam_r[1:-1]
        - f_r[1:-1] / fi**3 * lam_r[1:-1]
    )
    gauge = ((n + 1.0) / ri - (n - 1.0) / ri * inv_f2 + (n - 1.0) * ri) * lam_r[1:-1]
    grad_sq = ri**2 * fi**2 * (lam_r[1:-1] ** 2 * inv_f2)
    reaction = 2.0 * (n - 1.0) * lam[1:-1] * (lam[1:-1] + 1.0)

    out = np.empty_like(lam)
    out[1:-1] = laplacian + gauge + grad_sq + reaction
    out[0] = (n + 2.0) * 2.0 * (lam[1] - lam[0]) / (dx * dx) + 2.0 * (n - 1.0) * lam[
        0
    ] * (lam[0] + 1.0)
    out[-1] = 0.0
    return out


def rhs_w(w: np.ndarray, r: np.ndarray, n: int) -> np.ndarray:
    """Time derivative of w = f^2 on a uniform truncated r-grid.

    Interior:  w_rr / w - (3/2) w_r^2 / w^2
               + [(n-2)/r - 1/(r w) + (n-1) r] w_r - 2(n-2)(w-1)/r^2.
    Both ends are held (origin smoothness w(0) = 1 and the far tail value).
    """
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0.0):
        raise NonpositiveMetric("w must be positive on the truncated domain")
    dr = r[1] - r[0]
    out = np.empty_like(w)
    wr = (w[2:] - w[:-2]) / (2.0 * dr)
    wrr = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / (dr * dr)
    wi = w[1:-1]
    ri = r[1:-1]
    out[1:-1] = (
        wrr / wi
        - 1.5 * wr**2 / wi**2
        + ((n - 2.0) / ri - 1.0 / (ri * wi) + (n - 1.0) * ri) * wr
        - 2.0 * (n - 2.0) * (wi - 1.0) / ri**2
    )
    out[0] = 0.0
    out[-1] = 0.0
    return out


# ---------------------------------------------------------------------------


def _advance(lam: np.ndarray, grid: RadialGrid, n: int, t: float,
             config: SolverConfig, max_steps: int, *, unbounded: bool = False):
    """Drive the compiled kernel for up to max_steps steps."""
    r, r2, s, crr_a, crr_b, adv, half_r2 = _lambda_coefficients(
        grid, n, config.advective_coefficient_scale
    )
    neck = config.neckpinch_threshold if not unbounded else 1e300
    blow2 = config.blowup_threshold**2 if not unbounded else 1e300
    conv2 = config.convergence_tol**2 if not unbounded else 0.0
    t_end = config.t_end if not unbounded else 1e300
    return _kernels.advance_lambda(
        lam, t, t_end, max_steps, grid.spacing, r, r2, s, crr_a, crr_b, adv,
        half_r2, float(n), config.cfl_factor, config.dt_fixed, neck, blow2, conv2,
    )


def step(state: FlowState, config: SolverConfig) -> FlowState:
    """One RK4 step with the CFL (or fixed) time step.

    Stopping monitors are run()'s concern; here only hard errors surface:
    a state past the minimal-sphere threshold and time-step underflow.
    """
    profile = state.profile
    if sup_r2_lambda(profile) >= 1.0:
        raise MinimalSphereViolation("1 - r^2*lam <= 0 somewhere; cannot step")
    lam = profile.lam.copy()
    status, steps, t_new, dt_last = _advance(
        lam, profile.grid, profile.dimension, state.t, config, 1, unbounded=True
    )
    if status == _kernels.STATUS_UNDERFLOW:
        raise StepUnderflow(f"dt fell below {_kernels.DT_FLOOR}")
    return FlowState(
        t=t_new,
        profile=profile.with_lam(lam),
        step_count=state.step_count + 1,
        dt_last=dt_last,
    )


def _auto_strides(config: SolverConfig, dt0: float) -> tuple[int, int]:
    est = max(1, ceil(config.t_end / max(dt0, 1e-300)))
    rec = config.record_stride
    if rec <= 0:
        rec = max(1, est // 1024)
    snap = config.snapshot_stride
    if snap <= 0:
        snap = rec * max(1, (est // rec) // 32)
    else:
        # snapshots are taken at record boundaries
        snap = max(rec, rec * round(snap / rec))
    return rec, snap


def _initial_dt(lam: np.ndarray, grid: RadialGrid, config: SolverConfig) -> float:
    if config.dt_fixed > 0:
        return config.dt_fixed
    diffusion = (1.0 - grid.r_squared * lam) * grid.dr_dx**2
    return config.cfl_factor * grid.spacing**2 / float(np.max(diffusion))


def run(initial: CurvatureProfile, config: SolverConfig) -> Trajectory:
    """Integrate from the given profile until t_end or a stopping rule fires.

    Verdicts: ``reached_t_end``, ``converged`` (sup |Rm+K| below tolerance),
    ``blowup`` (norm above threshold, or numerical divergence), ``neckpinch``
    (sup r^2*lam crossed its threshold smoothly), ``step_underflow``.
    A diagnostics record is emitted at t = 0, every record stride, and at the
    final state; snapshots go out every snapshot stride.
    """
    if config.formulation == "w_oracle":
        return _run_w(initial, config)

    from .diagnostics import record as make_record

    grid = initial.grid
    n = initial.dimension
    if sup_r2_lambda(initial) >= 1.0:
        raise InadmissibleSpec("initial data already contains a minimal hypersphere")

    lam = initial.lam.copy()
    t = 0.0
    total_steps = 0
    dt_last = 0.0
    rec_stride, snap_stride = _auto_strides(config, _initial_dt(lam, grid, config))

    records = []
    snapshots = []
    state = FlowState(t, initial, 0, 0.0)
    rec0 = make_record(state)
    records.append(rec0)
    snapshots.append(state)

    verdict = None
    if config.t_end <= 0:
        verdict = VERDICT_REACHED_T_END
    elif rec0.sup_rm_plus_k < config.convergence_tol:
        verdict = VERDICT_CONVERGED
    elif rec0.sup_r2_lambda > config.neckpinch_threshold:
        verdict = VERDICT_NECKPINCH
    elif rec0.sup_rm_plus_k > config.blowup_threshold:
        verdict = VERDICT_BLOWUP

    steps_since_snap = 0
    while verdict is None:
        status, ksteps, t, dt_k = _advance(lam, grid, n, t, config, rec_stride)
        total_steps += ksteps
        steps_since_snap += ksteps
        if ksteps > 0:
            dt_last = dt_k
        finite = bool(np.all(np.isfinite(lam)))
        state = None
        if finite:
            state = FlowState(t, initial.with_lam(lam.copy()), total_steps, dt_last)
            if t > records[-1].t:
                try:
                    records.append(make_record(state))
                except MinimalSphereViolation:
                    pass  # terminal pinched state; verdict carries the story
        if status == _kernels.STATUS_STRIDE_DONE:
            if state is not None and steps_since_snap >= snap_stride:
                snapshots.append(state)
                steps_since_snap = 0
            continue
        verdict = _STATUS_TO_VERDICT[status]
        if state is not None and (not snapshots or snapshots[-1].t < t):
            snapshots.append(state)

    return Trajectory(
        records=records,
        snapshots=snapshots,
        verdict=verdict,
        config=config,
        dimension=n,
    )


def _run_w(initial: CurvatureProfile, config: SolverConfig) -> Trajectory:
    """Oracle run: evolve w = f^2 on [0, w_domain_radius] from the same data."""
    from scipy.interpolate import CubicSpline

    from .diagnostics import record_from_w

    n = initial.dimension
    npts = config.w_grid_size
    r = np.linspace(0.0, config.w_domain_radius, npts)
    dr = r[1] - r[0]
    # sample the initial orbit curvature on the truncated grid
    spline = CubicSpline(initial.grid.x_nodes, initial.lam)
    lam0 = spline(r / (1.0 + r))
    one_minus = 1.0 - r**2 * lam0
    if np.any(one_minus <= 0.0):
        raise InadmissibleSpec("initial data already contains a minimal hypersphere")
    w = 1.0 / one_minus
    w[0] = 1.0

    r_inv = np.empty_like(r)
    r_inv[0] = 0.0
    r_inv[1:] = 1.0 / r[1:]
    r2_inv = r_inv**2
    nm1_r = (n - 1.0) * r

    dt0 = config.dt_fixed if config.dt_fixed > 0 else (
        config.cfl_factor * dr * dr * float(np.min(w))
    )
    rec_stride, snap_stride = _auto_strides(config, dt0)

    t = 0.0
    total_steps = 0
    dt_last = 0.0
    records = [record_from_w(0.0, r, w, n, 0.0)]
    w_snapshots = [(0.0, w.copy())]

    verdict = None
    if config.t_end <= 0:
        verdict = VERDICT_REACHED_T_END
    elif records[0].sup_rm_plus_k < config.convergence_tol:
        verdict = VERDICT_CONVERGED

    steps_since_snap = 0
    while verdict is None:
        status, ksteps, t, dt_k = _kernels.advance_w(
            w, t, config.t_end, rec_stride, dr, r_inv, r2_inv, nm1_r, float(n),
            config.cfl_factor, config.dt_fixed, config.neckpinch_threshold,
            config.blowup_threshold**2, config.convergence_tol**2,
        )
        total_steps += ksteps
        steps_since_snap += ksteps
        if ksteps > 0:
            dt_last = dt_k
        finite = bool(np.all(np.isfinite(w)))
        if finite and t > records[-1].t:
            records.append(record_from_w(t, r, w, n, dt_last))
        if status == _kernels.STATUS_STRIDE_DONE:
            if finite and steps_since_snap >= snap_stride:
                w_snapshots.append((t, w.copy()))
                steps_since_snap = 0
            continue
        verdict = _STATUS_TO_VERDICT[status]
        if finite and w_snapshots[-1][0] < t:
            w_snapshots.append((t, w.copy()))

    return Trajectory(
        records=records,
        snapshots=[],
        verdict=verdict,
        config=config,
        dimension=n,
        w_r_nodes=r,
        w_snapshots=w_snapshots,
    )


def lambda_from_w(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Orbit curvature of a w-field on its truncated r-grid.

    The origin value comes from even-parity quadratic extrapolation of the
    quotient (1 - 1/w)/r^2 from the two innermost positive nodes; the naive
    one-node difference quotient carries the field's r^4 coefficient as an
    O(dr^2) error with an O(1) constant.
    """
    lam = np.empty_like(w)
    lam[1:] = (1.0 - 1.0 / w[1:]) / r[1:] ** 2
    r1sq, r2sq = r[1] ** 2, r[2] ** 2
    lam[0] = (lam[1] * r2sq - lam[2] * r1sq) / (r2sq - r1sq)
    return lam


def kappa_from_w(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Radial curvature of a w-field: w_r / (2 r w^2), with parity limit at 0."""
    dr = r[1] - r[0]
    wr = np.empty_like(w)
    wr[1:-1] = (w[2:] - w[:-2]) / (2.0 * dr)
    wr[0] = 0.0
    wr[-1] = (3.0 * w[-1] - 4.0 * w[-2] + w[-3]) / (2.0 * dr)
    kap = np.empty_like(w)
    kap[1:] = 0.5 * wr[1:] / (r[1:] * w[1:] ** 2)
    kap[0] = lambda_from_w(r, w)[0]
    return kap
