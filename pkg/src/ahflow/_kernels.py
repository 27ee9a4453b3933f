"""Compiled inner loops for the explicit RK4 integrators.

Everything here is a plain function of float64 arrays and scalars so it can
be jitted by numba.  If numba is unavailable the same code runs as pure
Python (correct but slow).  The advance loops re-check the stopping monitors
after every accepted step so a run can never silently integrate NaNs or walk
past the minimal-sphere threshold between diagnostic records.

Status codes returned by the advance loops:

0  stride exhausted (keep going)
1  reached t_end
2  converged (sup |Rm+K| below tolerance)
3  blowup (monitor above threshold, NaN, or grid-scale divergence)
4  neckpinch (sup r^2*lam crossed threshold with a smooth positive cap)
5  step underflow (dt < 1e-14)
6  nonpositive metric coefficient (w-solver only)
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


STATUS_STRIDE_DONE = 0
STATUS_T_END = 1
STATUS_CONVERGED = 2
STATUS_BLOWUP = 3
STATUS_NECKPINCH = 4
STATUS_UNDERFLOW = 5
STATUS_NONPOSITIVE = 6

DT_FLOOR = 1e-14


@njit(cache=True)
def rhs_lambda_kernel(lam, out, inv2dx, invdx2, r, r2, s, crr_a, crr_b, adv,
                      half_r2, two_nm1, np2):
    """Reduced evolution equation for the orbit curvature.

    Interior:  dlam/dt = (1 - r^2 lam) lam_rr
                         + [(n+1)/r + (n-1) r - r lam] lam_r
                         + (r^2/2) lam_r^2 + 2(n-1) lam (lam+1)
    with lam_r, lam_rr mapped from centered x-stencils.  The origin uses the
    parity limit (n+2) lam_xx(0) + 2(n-1) lam(0)(lam(0)+1) with an even ghost
    node; the last node is held fixed (Dirichlet at its initial value).
    """
    npts = lam.shape[0]
    for i in range(1, npts - 1):
        lx = (lam[i + 1] - lam[i - 1]) * inv2dx
        lxx = (lam[i + 1] - 2.0 * lam[i] + lam[i - 1]) * invdx2
        lr = s[i] * lx
        lrr = crr_a[i] * lxx - crr_b[i] * lx
        lv = lam[i]
        diff = 1.0 - r2[i] * lv
        out[i] = (
            diff * lrr
            + (adv[i] - r[i] * lv) * lr
            + half_r2[i] * lr * lr
            + two_nm1 * lv * (lv + 1.0)
        )
    lxx0 = 2.0 * (lam[1] - lam[0]) * invdx2
    out[0] = np2 * lxx0 + two_nm1 * lam[0] * (lam[0] + 1.0)
    out[npts - 1] = 0.0


MONITOR_STRIDE = 8


@njit(cache=True)
def advance_lambda(lam, t, t_end, max_steps, dx, r, r2, s, crr_a, crr_b, adv,
                   half_r2, n, cfl, dt_fixed, neck_thresh, blowup2, conv2):
    """Advance the orbit-curvature field by up to max_steps RK4 steps.

    The CFL denominator is the largest effective diffusion coefficient
    (1 - r^2 lam)(1-x)^4, with the origin entering through its parity limit,
    which carries the radial-Laplacian dimension factor n+2; omitting that
    factor makes the origin node the first to go unstable.

    The stopping monitors (NaN, curvature-norm blowup, minimal-sphere
    proximity, convergence) are evaluated every MONITOR_STRIDE steps and on
    the final step of the stride; the crossing scales are thousands of steps,
    so nothing is missed while the per-step cost stays in the stencil loops.
    Mutates ``lam`` in place.  Returns (status, steps_taken, t, dt_last).
    """
    npts = lam.shape[0]
    k1 = np.empty(npts)
    k2 = np.empty(npts)
    k3 = np.empty(npts)
    k4 = np.empty(npts)
    y = np.empty(npts)
    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / (dx * dx)
    two_nm1 = 2.0 * (n - 1.0)
    np2 = n + 2.0
    cn = 4.0 * (n - 1.0)
    hm = 0.5 * (n - 2.0)
    steps = 0
    dt_last = 0.0
    status = STATUS_STRIDE_DONE

    # effective diffusion of the current state (origin carries factor n+2)
    max_diff = np2 * (1.0 - r2[0] * lam[0]) * s[0] * s[0]
    for i in range(1, npts):
        d = (1.0 - r2[i] * lam[i]) * s[i] * s[i]
        if d > max_diff:
            max_diff = d

    while steps < max_steps:
        rem = t_end - t
        if rem <= 1e-15:
            status = STATUS_T_END
            break
        if dt_fixed > 0.0:
            dt = dt_fixed
        else:
            if max_diff <= 0.0 or max_diff != max_diff:
                status = STATUS_BLOWUP
                break
            dt = cfl * dx * dx / max_diff
        hit_end = False
        if dt >= rem:
            dt = rem
            hit_end = True
        if dt < DT_FLOOR:
            # a sub-floor step that only exists because of the final clamp is
            # a completed run, not an underflow
            status = STATUS_T_END if hit_end else STATUS_UNDERFLOW
            if hit_end:
                t = t_end
            break

        rhs_lambda_kernel(lam, k1, inv2dx, invdx2, r, r2, s, crr_a, crr_b,
                          adv, half_r2, two_nm1, np2)
        for i in range(npts):
            y[i] = lam[i] + 0.5 * dt * k1[i]
        rhs_lambda_kernel(y, k2, inv2dx, invdx2, r, r2, s, crr_a, crr_b,
                          adv, half_r2, two_nm1, np2)
        for i in range(npts):
            y[i] = lam[i] + 0.5 * dt * k2[i]
        rhs_lambda_kernel(y, k3, inv2dx, invdx2, r, r2, s, crr_a, crr_b,
                          adv, half_r2, two_nm1, np2)
        for i in range(npts):
            y[i] = lam[i] + dt * k3[i]
        rhs_lambda_kernel(y, k4, inv2dx, invdx2, r, r2, s, crr_a, crr_b,
                          adv, half_r2, two_nm1, np2)
        c = dt / 6.0
        max_diff = np2 * (1.0 - r2[0] * (lam[0] + c * (k1[0] + 2.0 * k2[0]
                          + 2.0 * k3[0] + k4[0]))) * s[0] * s[0]
        for i in range(npts):
            lv = lam[i] + c * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            lam[i] = lv
            if i >= 1:
                d = (1.0 - r2[i] * lv) * s[i] * s[i]
                if d > max_diff:
                    max_diff = d

        t += dt
        steps += 1
        dt_last = dt

        if steps % MONITOR_STRIDE != 0 and steps < max_steps and not hit_end:
            continue

        # monitors: NaN, |Rm+K| extremes, minimal-sphere proximity
        nan_found = False
        max_norm2 = 0.0
        max_r2l = -1e300
        arg_r2l = 1
        for i in range(npts):
            lv = lam[i]
            if lv != lv:
                nan_found = True
                break
            if i == 0:
                kap = lv
            elif i == npts - 1:
                kap = lv + 0.5 * r[i] * s[i] * (
                    3.0 * lam[i] - 4.0 * lam[i - 1] + lam[i - 2]
                ) * inv2dx
            else:
                kap = lv + 0.5 * r[i] * s[i] * (lam[i + 1] - lam[i - 1]) * inv2dx
            a1 = kap + 1.0
            a2 = lv + 1.0
            n2 = cn * (a1 * a1 + hm * a2 * a2)
            if n2 > max_norm2:
                max_norm2 = n2
            if i >= 1:
                v = r2[i] * lv
                if v > max_r2l:
                    max_r2l = v
                    arg_r2l = i
        if nan_found:
            status = STATUS_BLOWUP
            break
        if max_norm2 > blowup2:
            status = STATUS_BLOWUP
            break
        if max_r2l > neck_thresh:
            # A resolved pinch has a smooth positive curvature cap around the
            # crossing node; a grid-scale sawtooth there means the explicit
            # scheme diverged and is reported as blowup, not neckpinch.
            j = arg_r2l
            pinch = lam[j] > 0.0
            if pinch and j > 0 and lam[j - 1] <= 0.25 * lam[j]:
                pinch = False
            if pinch and j < npts - 1 and lam[j + 1] <= 0.25 * lam[j]:
                pinch = False
            status = STATUS_NECKPINCH if pinch else STATUS_BLOWUP
            break
        if max_norm2 < conv2:
            status = STATUS_CONVERGED
            break
        if hit_end:
            status = STATUS_T_END
            break

    return status, steps, t, dt_last


@njit(cache=True)
def rhs_w_kernel(w, out, inv2dr, invdr2, r_inv, r2_inv, nm1_r, nm2, two_nm2):
    """Evolution equation for w = f^2 on a uniform truncated r-grid.

    Interior:  dw/dt = w_rr / w - (3/2) w_r^2 / w^2
                       + [(n-2)/r - 1/(r w) + (n-1) r] w_r
                       - 2(n-2)(w - 1)/r^2.
    Both ends are Dirichlet: w(0) = 1 (smooth origin) and w(R) pinned to the
    hyperbolic tail value.
    """
    npts = w.shape[0]
    for i in range(1, npts - 1):
        wr = (w[i + 1] - w[i - 1]) * inv2dr
        wrr = (w[i + 1] - 2.0 * w[i] + w[i - 1]) * invdr2
        iw = 1.0 / w[i]
        out[i] = (
            iw * wrr
            - 1.5 * iw * iw * wr * wr
            + ((nm2 - iw) * r_inv[i] + nm1_r[i]) * wr
            - two_nm2 * r2_inv[i] * (w[i] - 1.0)
        )
    out[0] = 0.0
    out[npts - 1] = 0.0


@njit(cache=True)
def advance_w(w, t, t_end, max_steps, dr, r_inv, r2_inv, nm1_r, n, cfl,
              dt_fixed, neck_thresh, blowup2, conv2):
    """RK4 advance for the w-formulation.  Mutates ``w``; same status codes."""
    npts = w.shape[0]
    k1 = np.empty(npts)
    k2 = np.empty(npts)
    k3 = np.empty(npts)
    k4 = np.empty(npts)
    y = np.empty(npts)
    inv2dr = 1.0 / (2.0 * dr)
    invdr2 = 1.0 / (dr * dr)
    nm2 = n - 2.0
    two_nm2 = 2.0 * (n - 2.0)
    cn = 4.0 * (n - 1.0)
    hm = 0.5 * (n - 2.0)
    steps = 0
    dt_last = 0.0
    status = STATUS_STRIDE_DONE

    min_w = w[0]
    for i in range(npts):
        if w[i] < min_w:
            min_w = w[i]

    while steps < max_steps:
        rem = t_end - t
        if rem <= 1e-15:
            status = STATUS_T_END
            break
        if min_w <= 0.0 or min_w != min_w:
            status = STATUS_NONPOSITIVE
            break
        if dt_fixed > 0.0:
            dt = dt_fixed
        else:
            dt = cfl * dr * dr * min_w
        hit_end = False
        if dt >= rem:
            dt = rem
            hit_end = True
        if dt < DT_FLOOR:
            status = STATUS_T_END if hit_end else STATUS_UNDERFLOW
            if hit_end:
                t = t_end
            break

        rhs_w_kernel(w, k1, inv2dr, invdr2, r_inv, r2_inv, nm1_r, nm2, two_nm2)
        for i in range(npts):
            y[i] = w[i] + 0.5 * dt * k1[i]
        rhs_w_kernel(y, k2, inv2dr, invdr2, r_inv, r2_inv, nm1_r, nm2, two_nm2)
        for i in range(npts):
            y[i] = w[i] + 0.5 * dt * k2[i]
        rhs_w_kernel(y, k3, inv2dr, invdr2, r_inv, r2_inv, nm1_r, nm2, two_nm2)
        for i in range(npts):
            y[i] = w[i] + dt * k3[i]
        rhs_w_kernel(y, k4, inv2dr, invdr2, r_inv, r2_inv, nm1_r, nm2, two_nm2)
        c = dt / 6.0
        min_w = w[0] + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        for i in range(npts):
            wv = w[i] + c * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            w[i] = wv
            if wv < min_w:
                min_w = wv

        t += dt
        steps += 1
        dt_last = dt

        if steps % MONITOR_STRIDE != 0 and steps < max_steps and not hit_end:
            continue

        nan_found = False
        nonpos = False
        max_norm2 = 0.0
        max_r2l = -1e300
        arg_r2l = 1
        # origin curvature by even-parity quadratic extrapolation of
        # (1 - 1/w)/r^2 from the two innermost positive nodes
        q1 = (1.0 - 1.0 / w[1]) * r2_inv[1]
        q2 = (1.0 - 1.0 / w[2]) * r2_inv[2]
        lam0 = (4.0 * q1 - q2) / 3.0
        for i in range(npts):
            wv = w[i]
            if wv != wv:
                nan_found = True
                break
            if wv <= 0.0:
                nonpos = True
                break
            if i == 0:
                lam_i = lam0
                kap = lam0
            else:
                iw = 1.0 / wv
                lam_i = (1.0 - iw) * r2_inv[i]
                if i == npts - 1:
                    wr = (3.0 * w[i] - 4.0 * w[i - 1] + w[i - 2]) * inv2dr
                else:
                    wr = (w[i + 1] - w[i - 1]) * inv2dr
                kap = 0.5 * wr * r_inv[i] * iw * iw
                v = 1.0 - iw  # equals r^2 * lam
                if v > max_r2l:
                    max_r2l = v
                    arg_r2l = i
            a1 = kap + 1.0
            a2 = lam_i + 1.0
            n2 = cn * (a1 * a1 + hm * a2 * a2)
            if n2 > max_norm2:
                max_norm2 = n2
        if nan_found:
            status = STATUS_BLOWUP
            break
        if nonpos:
            status = STATUS_NONPOSITIVE
            break
        if max_norm2 > blowup2:
            status = STATUS_BLOWUP
            break
        if max_r2l > neck_thresh:
            j = arg_r2l
            pinch = w[j] > 1.0
            if pinch and j > 0 and w[j - 1] <= 0.0:
                pinch = False
            if pinch and j < npts - 1 and w[j + 1] <= 0.0:
                pinch = False
            status = STATUS_NECKPINCH if pinch else STATUS_BLOWUP
            break
        if max_norm2 < conv2:
            status = STATUS_CONVERGED
            break
        if hit_end:
            status = STATUS_T_END
            break

    return status, steps, t, dt_last
