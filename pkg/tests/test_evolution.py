import numpy as np
import pytest

from ahflow import _kernels
from ahflow.errors import MinimalSphereViolation, NonpositiveMetric, StepUnderflow
from ahflow.evolution import (
    FlowState,
    SolverConfig,
    kappa_from_w,
    lambda_from_w,
    rhs_lambda,
    rhs_lambda_direct,
    rhs_w,
    run,
    step,
)
from ahflow.geometry import CurvatureProfile, RadialGrid
from ahflow.initial_data import InitialDataSpec, build_profile
from ahflow.verification import temporal_order_study


def state_of(grid, lam, n=3):
    return FlowState(0.0, CurvatureProfile(grid, lam, n))


class TestRhsLambda:
    def test_hyperbolic_fixed_point(self, grid256):
        out = rhs_lambda(state_of(grid256, np.full(256, -1.0)))
        assert np.max(np.abs(out)) == 0.0

    def test_flat_fixed_point(self, grid256):
        out = rhs_lambda(state_of(grid256, np.zeros(256)))
        assert np.max(np.abs(out)) == 0.0

    def test_constant_reaction_only(self, grid256):
        # lam = -1/2, n = 3: derivative terms vanish, RHS = 4 * (-1/2) * (1/2)
        out = rhs_lambda(state_of(grid256, np.full(256, -0.5)))
        assert np.allclose(out[:-1], -1.0, rtol=1e-13)
        assert out[-1] == 0.0

    def test_origin_limit(self, grid256):
        # lam = -1 - 0.5 e^{-r^2}: lam_rr(0) = 1, so the origin limit is
        # (n+2)*1 + 2(n-1) lam0 (lam0+1) = 5 - 6 = ... computed explicitly
        lam = -1 - 0.5 * np.exp(-grid256.r_nodes**2)
        out = rhs_lambda(state_of(grid256, lam))
        expected = 5.0 * 1.0 + 4.0 * (-1.5) * (-0.5)
        assert out[0] == pytest.approx(expected, rel=5e-3)

    def test_reduction_matches_direct_evaluation(self):
        # the closed-form reduction must agree term-by-term with the direct
        # evaluation through f, to discretization accuracy, and converge
        spec = InitialDataSpec("gaussian_bump", amplitude=-0.5, width=1.0)
        diffs = {}
        for size in (128, 256):
            grid = RadialGrid(size)
            st = FlowState(0.0, build_profile(spec, grid))
            d = np.abs(rhs_lambda(st) - rhs_lambda_direct(st))
            diffs[size] = np.max(d[1:-1])
        assert diffs[256] < 2e-5
        order = np.log2(diffs[128] / diffs[256])
        assert 1.5 <= order <= 2.5

    def test_rejects_minimal_sphere_state(self, grid256):
        with pytest.raises(MinimalSphereViolation):
            rhs_lambda(state_of(grid256, np.full(256, 2.0)))

    def test_kernel_matches_numpy(self, grid256, rng):
        from ahflow.evolution import _lambda_coefficients
        from ahflow.verification import random_admissible_profile

        p = random_admissible_profile(grid256, rng)
        st = FlowState(0.0, p)
        expected = rhs_lambda(st)
        r, r2, s, crr_a, crr_b, adv, half_r2 = _lambda_coefficients(grid256, 3, 1.0)
        out = np.empty(256)
        dx = grid256.spacing
        _kernels.rhs_lambda_kernel(p.lam, out, 1 / (2 * dx), 1 / dx**2, r, r2,
                                   s, crr_a, crr_b, adv, half_r2, 4.0, 5.0)
        assert np.max(np.abs(out - expected)) < 1e-13


class TestRhsW:
    def test_hyperbolic_fixed_point(self):
        # discrete residual is pure truncation: (dr^2/12) * w'''' with
        # w''''(0) = 24, so ~1.2e-3 at dr = 0.025, quartering under refinement
        resid = {}
        for npts in (801, 1601):
            rr = np.linspace(0, 20, npts)
            ww = 1.0 / (1.0 + rr**2)
            resid[npts] = np.max(np.abs(rhs_w(ww, rr, 3)))
        assert resid[1601] < 1e-3
        assert np.log2(resid[801] / resid[1601]) > 1.5

    def test_flat_fixed_point(self):
        r = np.linspace(0, 20, 401)
        out = rhs_w(np.ones(401), r, 3)
        assert np.max(np.abs(out)) == 0.0

    def test_rejects_nonpositive(self):
        r = np.linspace(0, 20, 401)
        w = np.ones(401)
        w[5] = 0.0
        with pytest.raises(NonpositiveMetric):
            rhs_w(w, r, 3)


class TestStep:
    def test_hyperbolic_stationary(self, grid256):
        cfg = SolverConfig(t_end=1.0)
        st = state_of(grid256, np.full(256, -1.0))
        for _ in range(200):
            st = step(st, cfg)
        assert np.max(np.abs(st.profile.lam + 1.0)) <= 1e-13 * st.t
        assert st.step_count == 200
        assert st.t > 0

    def test_flat_stationary(self, grid256):
        cfg = SolverConfig(t_end=1.0)
        st = state_of(grid256, np.zeros(256))
        for _ in range(200):
            st = step(st, cfg)
        assert np.max(np.abs(st.profile.lam)) <= 1e-13 * st.t

    def test_underflow(self, grid256):
        cfg = SolverConfig(t_end=1.0, dt_fixed=1e-15)
        with pytest.raises(StepUnderflow):
            step(state_of(grid256, np.full(256, -1.0)), cfg)

    def test_rejects_pinched_state(self, grid256):
        cfg = SolverConfig(t_end=1.0)
        with pytest.raises(MinimalSphereViolation):
            step(state_of(grid256, np.full(256, 2.0)), cfg)


class TestRun:
    def test_hyperbolic_converges_immediately(self, grid256):
        p = build_profile(InitialDataSpec("hyperbolic"), grid256)
        traj = run(p, SolverConfig(t_end=5.0))
        assert traj.verdict == "converged"
        assert all(r.sup_rm_plus_k < 1e-10 for r in traj.records)

    def test_zero_horizon(self, grid256):
        p = build_profile(InitialDataSpec("hyperbolic"), grid256)
        traj = run(p, SolverConfig(t_end=0.0))
        assert traj.verdict == "reached_t_end"

    def test_cfl_violation_is_blowup_not_silent(self, grid256, profile_below):
        # cfl = 10 is far beyond the RK4 stability bound: the run must stop
        # with a blowup verdict, not emit NaNs or call it a neckpinch
        traj = run(profile_below, SolverConfig(t_end=1.0, cfl_factor=10.0))
        assert traj.verdict == "blowup"
        for rec in traj.records:
            assert np.isfinite(rec.sup_rm_plus_k)

    def test_below_regime_run(self, run_below):
        assert run_below.verdict == "reached_t_end"
        t = run_below.times
        assert np.all(np.diff(t) > 0)
        mono = run_below.series("sup_rm_plus_k")
        # decays after the transient by many orders of magnitude
        assert mono[-1] < 1e-9 * np.max(mono)

    def test_determinism(self, grid256):
        spec = InitialDataSpec("gaussian_bump", amplitude=-0.3, width=1.0)
        p = build_profile(spec, grid256)
        cfg = SolverConfig(t_end=0.05, convergence_tol=0.0)
        t1 = run(p, cfg)
        t2 = run(p, cfg)
        assert t1.verdict == t2.verdict
        assert len(t1.records) == len(t2.records)
        for a, b in zip(t1.records, t2.records):
            assert a == b
        assert np.array_equal(
            t1.snapshots[-1].profile.lam, t2.snapshots[-1].profile.lam
        )

    def test_neckpinch_regime_definite_verdict(self):
        # open-question regime: sign-indefinite data near the minimal-sphere
        # threshold; no ground truth exists, only definite termination and a
        # finite recorded monitor are asserted
        grid = RadialGrid(192)
        spec = InitialDataSpec("gaussian_bump", amplitude=1.2, center=2.0, width=0.3)
        p = build_profile(spec, grid)
        traj = run(p, SolverConfig(t_end=2.0, cfl_factor=0.9))
        assert traj.verdict in ("converged", "neckpinch", "reached_t_end")
        for rec in traj.records:
            assert np.isfinite(rec.sup_r2_lambda)

    def test_neckpinch_verdict_on_threshold_crossing(self):
        # admissible data already past a (deliberately low) pinch threshold
        # must terminate with the neckpinch verdict, not integrate on
        grid = RadialGrid(192)
        spec = InitialDataSpec("gaussian_bump", amplitude=1.2, center=2.0, width=0.3)
        p = build_profile(spec, grid)
        traj = run(p, SolverConfig(t_end=2.0, neckpinch_threshold=0.5))
        assert traj.verdict == "neckpinch"

    def test_dimension_four(self):
        # nothing in the stencils is n = 3 specific
        grid = RadialGrid(128)
        spec = InitialDataSpec("gaussian_bump", amplitude=-0.5, width=1.0,
                               dimension=4)
        p = build_profile(spec, grid)
        traj = run(p, SolverConfig(t_end=2.0, cfl_factor=0.9, convergence_tol=0.0))
        assert traj.verdict == "reached_t_end"
        assert traj.records[-1].max_lambda <= -1.0 + 1e-10
        from ahflow.diagnostics import check_lambda_lower_envelope

        assert check_lambda_lower_envelope(traj, p).holds

    def test_subfloor_final_clamp_is_not_underflow(self):
        # a remaining interval below the dt floor (possible from float
        # accumulation near t_end) must finish the run, not report underflow
        grid = RadialGrid(64)
        p = build_profile(
            InitialDataSpec("gaussian_bump", amplitude=-0.3, width=1.0), grid
        )
        dt = 1e-5  # stable at this grid's CFL scale
        cfg = SolverConfig(t_end=200 * dt + 5e-15, dt_fixed=dt,
                           convergence_tol=0.0)
        traj = run(p, cfg)
        assert traj.verdict == "reached_t_end"

    def test_snapshot_cadence(self, grid256, profile_below):
        cfg = SolverConfig(t_end=0.02, convergence_tol=0.0,
                           record_stride=100, snapshot_stride=400)
        traj = run(profile_below, cfg)
        assert len(traj.snapshots) >= 3
        times = [s.t for s in traj.snapshots]
        assert times == sorted(times)
        assert traj.snapshots[0].t == 0.0


class TestVerdictClassifier:
    """The kernel labels a threshold crossing by the local shape: smooth
    positive cap -> neckpinch, grid-scale sawtooth -> blowup."""

    def advance(self, lam, grid, thresh):
        from ahflow.evolution import _lambda_coefficients

        r, r2, s, crr_a, crr_b, adv, half_r2 = _lambda_coefficients(grid, 3, 1.0)
        return _kernels.advance_lambda(
            lam.copy(), 0.0, 1.0, 64, grid.spacing, r, r2, s, crr_a, crr_b,
            adv, half_r2, 3.0, 0.4, 0.0, thresh, 1e300, 0.0,
        )

    def test_smooth_cap_is_neckpinch(self):
        grid = RadialGrid(192)
        r = grid.r_nodes
        lam = -1 + 1.9 * (np.exp(-((r - 2.0) ** 2) / 0.25)
                          + np.exp(-((r + 2.0) ** 2) / 0.25))
        # sup r^2 lam ~ 3.4 already past the threshold; cap is smooth positive
        status, steps, t, dt = self.advance(lam, grid, 0.9)
        assert status == _kernels.STATUS_NECKPINCH

    def test_sawtooth_is_blowup(self):
        grid = RadialGrid(192)
        r = grid.r_nodes
        lam = np.full(grid.size, -1.0)
        sel = (r > 1.5) & (r < 2.5)
        lam[sel] += 2.0 * np.where(np.arange(grid.size)[sel] % 2 == 0, 1.0, -1.0)
        status, steps, t, dt = self.advance(lam, grid, 0.9)
        assert status == _kernels.STATUS_BLOWUP


class TestWOracle:
    def test_hyperbolic_near_stationary(self, grid256):
        p = build_profile(InitialDataSpec("hyperbolic"), grid256)
        cfg = SolverConfig(formulation="w_oracle", t_end=0.1, convergence_tol=0.0,
                           w_grid_size=401)
        traj = run(p, cfg)
        assert traj.verdict == "reached_t_end"
        assert traj.w_r_nodes is not None
        t_last, w_last = traj.w_snapshots[-1]
        lam = lambda_from_w(traj.w_r_nodes, w_last)
        # stays near the hyperbolic profile up to discretization error
        assert np.max(np.abs(lam + 1.0)) < 5e-3

    def test_lambda_kappa_from_w_roundtrip(self):
        r = np.linspace(0, 20, 801)
        w = 1.0 / (1.0 + r**2)
        lam = lambda_from_w(r, w)
        kap = kappa_from_w(r, w)
        assert np.max(np.abs(lam + 1.0)) < 1e-10
        # kappa inherits ~2 dr^2 truncation near the origin
        assert np.max(np.abs(kap[1:-1] + 1.0)) < 5e-3


class TestTemporalOrder:
    def test_rk4_order(self):
        order, errs = temporal_order_study()
        assert errs[0] > 1e-8  # far above roundoff
        assert 3.5 <= order <= 4.5


class TestSolverConfig:
    def test_bad_formulation(self):
        with pytest.raises(ValueError):
            SolverConfig(formulation="implicit")

    def test_bad_cfl(self):
        with pytest.raises(ValueError):
            SolverConfig(cfl_factor=0.0)

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            SolverConfig(neckpinch_threshold=1.5)
        with pytest.raises(ValueError):
            SolverConfig(blowup_threshold=-1.0)
