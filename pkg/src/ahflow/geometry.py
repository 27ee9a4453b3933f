"""Curvature algebra for rotationally symmetric metrics in area-radius form.

The metric is g = f(r)^2 dr^2 + r^2 * (round unit sphere), with two sectional
curvatures:

* ``kappa`` -- curvature of 2-planes containing the radial direction,
  kappa = f'(r) / (r f^3);
* ``lam`` -- curvature of 2-planes tangent to the symmetry orbits,
  lam = (1 - 1/f^2) / r^2.

``lam`` is the canonical stored field.  Everything else (f, w = f^2, kappa,
mean curvature H, the deviation-from-constant-curvature norm) is derived from
it.  The two curvatures are tied together by the radial contracted-Bianchi
relation r * dlam/dr = 2 (kappa - lam), which is what makes a single scalar
field sufficient.

Radial grids are uniform in the compactified coordinate x = r / (1 + r), so
r = x / (1 - x) covers [0, inf) while x covers [0, 1).  All derivatives are
taken with second-order stencils in x and mapped with d/dr = (1-x)^2 d/dx.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MinimalSphereViolation, NonpositiveMetric

__all__ = [
    "RadialGrid",
    "CurvatureProfile",
    "f_from_lambda",
    "lambda_from_f",
    "kappa_from_lambda",
    "kappa_from_f",
    "mean_curvature",
    "gauss_codazzi_residual",
    "rm_plus_k_norm",
    "bianchi_residual",
    "gauge_vector_field",
    "nrf_to_rf_time",
    "first_derivative_x",
    "second_derivative_x",
]

MIN_GRID_SIZE = 16


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in the compactified coordinate x = r/(1+r).

    Nodes are x_j = j/size for j = 0 .. size-1, so x stays strictly below 1
    and the area radius r_j = x_j/(1-x_j) runs from 0 to size-1.
    """

    size: int
    x_nodes: np.ndarray = field(init=False, repr=False, compare=False)
    r_nodes: np.ndarray = field(init=False, repr=False, compare=False)
    spacing: float = field(init=False, compare=False)

    def __post_init__(self):
        if self.size < MIN_GRID_SIZE:
            raise ValueError(f"grid size must be >= {MIN_GRID_SIZE}, got {self.size}")
        x = np.arange(self.size, dtype=np.float64) / self.size
        r = x / (1.0 - x)
        object.__setattr__(self, "x_nodes", _readonly(x))
        object.__setattr__(self, "r_nodes", _readonly(r))
        object.__setattr__(self, "spacing", 1.0 / self.size)

    # derived per-node factors used by every stencil; computed once
    @property
    def dr_dx(self) -> np.ndarray:
        """(1-x)^2, the Jacobian factor in d/dr = (1-x)^2 d/dx."""
        if not hasattr(self, "_dr_dx"):
            object.__setattr__(self, "_dr_dx", _readonly((1.0 - self.x_nodes) ** 2))
        return self._dr_dx

    @property
    def r_squared(self) -> np.ndarray:
        if not hasattr(self, "_r_sq"):
            object.__setattr__(self, "_r_sq", _readonly(self.r_nodes**2))
        return self._r_sq


def first_derivative_x(values: np.ndarray, dx: float) -> np.ndarray:
    """d/dx with centered interior stencil and one-sided second-order ends."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return out


def second_derivative_x(values: np.ndarray, dx: float) -> np.ndarray:
    """d2/dx2 with centered interior stencil and one-sided second-order ends."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (dx * dx)
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (dx * dx)
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (dx * dx)
    return out


def radial_derivative(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """d/dr via the chain rule from the x-stencils."""
    return grid.dr_dx * first_derivative_x(values, grid.spacing)


def _even_extrapolate_origin(grid: RadialGrid, values: np.ndarray) -> float:
    """Value at r = 0 of an even function sampled at nodes 1 and 2.

    Fits v(r) = a + b r^2 through the two innermost positive-radius nodes.
    """
    r1sq = grid.r_squared[1]
    r2sq = grid.r_squared[2]
    return float((values[1] * r2sq - values[2] * r1sq) / (r2sq - r1sq))


@dataclass(frozen=True)
class CurvatureProfile:
    """Orbit sectional curvature sampled on a radial grid.

    ``lam`` must be even in r (regular at the origin) and approach -1 at the
    far end for the profile to describe an asymptotically hyperbolic metric;
    those properties are checked by :func:`ahflow.initial_data.validate`, not
    here.  Construction only enforces shape, finiteness and dimension.
    """

    grid: RadialGrid
    lam: np.ndarray
    dimension: int = 3

    def __post_init__(self):
        lam = np.ascontiguousarray(self.lam, dtype=np.float64)
        if lam.shape != (self.grid.size,):
            raise ValueError(
                f"lam has shape {lam.shape}, expected ({self.grid.size},)"
            )
        if not np.all(np.isfinite(lam)):
            raise ValueError("lam contains non-finite entries")
        if self.dimension < 3:
            raise ValueError(f"dimension must be >= 3, got {self.dimension}")
        object.__setattr__(self, "lam", _readonly(lam))

    def with_lam(self, lam: np.ndarray) -> "CurvatureProfile":
        return CurvatureProfile(self.grid, lam, self.dimension)


def sup_r2_lambda(profile: CurvatureProfile) -> float:
    """Minimal-hypersphere proximity monitor: max over nodes 1.. of r^2*lam.

    Node 0 is excluded because r^2*lam vanishes there identically and carries
    no information.  The area-radius form breaks down exactly when this
    quantity reaches 1.
    """
    return float(np.max(profile.grid.r_squared[1:] * profile.lam[1:]))


def f_from_lambda(profile: CurvatureProfile) -> np.ndarray:
    """Radial metric coefficient f = (1 - r^2 lam)^(-1/2); f[0] = 1."""
    one_minus = 1.0 - profile.grid.r_squared * profile.lam
    if np.any(one_minus <= 0.0):
        worst = int(np.argmin(one_minus))
        raise MinimalSphereViolation(
            f"1 - r^2*lam <= 0 at node {worst} (r = {profile.grid.r_nodes[worst]:.6g})"
        )
    f = 1.0 / np.sqrt(one_minus)
    f[0] = 1.0
    return f


def lambda_from_f(grid: RadialGrid, f: np.ndarray, n: int) -> np.ndarray:
    """Invert f back to the orbit curvature: lam = (1 - 1/f^2) / r^2.

    At r = 0 the quotient is filled in by even-parity quadratic extrapolation
    from the two innermost positive-radius nodes.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0.0):
        raise NonpositiveMetric("f must be positive everywhere")
    lam = np.empty_like(f)
    lam[1:] = (1.0 - 1.0 / f[1:] ** 2) / grid.r_squared[1:]
    lam[0] = _even_extrapolate_origin(grid, lam)
    return lam


def kappa_from_lambda(profile: CurvatureProfile) -> np.ndarray:
    """Radial sectional curvature via kappa = lam + (r/2) dlam/dr.

    kappa[0] = lam[0]: the r*lam' term vanishes at the origin by parity.
    """
    grid = profile.grid
    lam_r = radial_derivative(grid, profile.lam)
    kappa = profile.lam + 0.5 * grid.r_nodes * lam_r
    kappa[0] = profile.lam[0]
    return kappa


KAPPA_FROM_F_INNER_RADIUS = 0.5


def kappa_from_f(grid: RadialGrid, f: np.ndarray, n: int) -> np.ndarray:
    """Radial sectional curvature from the metric coefficient: f'(r)/(r f^3).

    Independent of :func:`kappa_from_lambda`; the two agree to O(dx^2) on
    consistent inputs, which is exercised as a cross-formula check.

    Near the origin the quotient f'/r amplifies the x-stencil truncation by
    1/r, so for r below a fixed cut the derivative is taken with respect to
    u = r^2 instead (f is even in r, hence smooth in u), where the same
    quantity is the regular 2 (df/du) / f^3.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0.0):
        raise NonpositiveMetric("f must be positive everywhere")
    f_r = radial_derivative(grid, f)
    kappa = np.empty_like(f)
    kappa[1:] = f_r[1:] / (grid.r_nodes[1:] * f[1:] ** 3)

    u = grid.r_squared
    inner = np.nonzero(grid.r_nodes < KAPPA_FROM_F_INNER_RADIUS)[0]
    for i in inner[1:]:
        h0 = u[i] - u[i - 1]
        h1 = u[i + 1] - u[i]
        f_u = (
            h0 * h0 * f[i + 1] - h1 * h1 * f[i - 1]
            + (h1 * h1 - h0 * h0) * f[i]
        ) / (h0 * h1 * (h0 + h1))
        kappa[i] = 2.0 * f_u / f[i] ** 3
    kappa[0] = _even_extrapolate_origin(grid, kappa)
    return kappa


def mean_curvature(grid: RadialGrid, f: np.ndarray, n: int) -> np.ndarray:
    """Mean curvature H = (n-1)/(r f) of the constant-r spheres.

    H diverges at the origin; node 0 is reported as +inf.  On an
    asymptotically hyperbolic end H tends to n-1.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0.0):
        raise NonpositiveMetric("f must be positive everywhere")
    h = np.empty_like(f)
    h[1:] = (n - 1) / (grid.r_nodes[1:] * f[1:])
    h[0] = np.inf
    return h


def gauss_codazzi_residual(profile: CurvatureProfile) -> np.ndarray:
    """Residual of 1/r^2 = lam + H^2/(n-1)^2 for the symmetry orbits.

    Algebraically zero for any profile; the computed value only picks up
    rounding at the 1/r^2 scale.  Node 0, where both singular terms cancel in
    the limit, is reported as 0.
    """
    n = profile.dimension
    f = f_from_lambda(profile)
    h = mean_curvature(profile.grid, f, n)
    res = np.empty_like(f)
    rsq = profile.grid.r_squared
    res[1:] = 1.0 / rsq[1:] - profile.lam[1:] - (h[1:] / (n - 1)) ** 2
    res[0] = 0.0
    return res


def rm_plus_k_norm(profile: CurvatureProfile) -> tuple[np.ndarray, float]:
    """Pointwise deviation of the curvature tensor from constant curvature -1.

    In rotational symmetry |Rm + K|^2 = 4(n-1)[(kappa+1)^2 + (n-2)/2 (lam+1)^2].
    Returns the per-node norm and its supremum over the grid.
    """
    n = profile.dimension
    kappa = kappa_from_lambda(profile)
    norm = np.sqrt(
        4.0 * (n - 1) * ((kappa + 1.0) ** 2 + 0.5 * (n - 2) * (profile.lam + 1.0) ** 2)
    )
    return norm, float(np.max(norm))


def bianchi_residual(grid: RadialGrid, f: np.ndarray, n: int) -> np.ndarray:
    """Discrete residual of r dlam/dr - 2(kappa - lam) with both curvatures
    derived from f through independent difference paths.

    Converges to zero at O(dx^2) for smooth f; identically zero (to rounding)
    for f = 1 where every term vanishes node-by-node.
    """
    lam = lambda_from_f(grid, f, n)
    kappa = kappa_from_f(grid, f, n)
    lam_r = radial_derivative(grid, lam)
    return grid.r_nodes * lam_r - 2.0 * (kappa - lam)


def gauge_vector_field(grid: RadialGrid, f: np.ndarray, n: int) -> np.ndarray:
    """Radial component of the gauge vector field that keeps the metric in
    area-radius form: f'/f^3 + ((n-2)/r)(1 - 1/f^2) + (n-1) r.

    Individual terms are singular at the origin but the combination vanishes
    there by parity; node 0 is reported as exactly 0.  Evaluated as
    r (kappa + (n-2) lam + (n-1)), which is the same expression written
    through the curvatures and inherits their origin-safe stencils.  The
    hyperbolic metric makes the whole field vanish: the gauged flow has it
    as a fixed point.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0.0):
        raise NonpositiveMetric("f must be positive everywhere")
    kappa = kappa_from_f(grid, f, n)
    lam = lambda_from_f(grid, f, n)
    x = grid.r_nodes * (kappa + (n - 2) * lam + (n - 1))
    x[0] = 0.0
    return x


def nrf_to_rf_time(t: float, n: int) -> float:
    """Map normalized-flow time to unnormalized Ricci-flow time:
    u(t) = (exp(2(n-1)t) - 1) / (2(n-1)).  Strictly increasing in t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(np.expm1(2.0 * (n - 1) * t) / (2.0 * (n - 1)))
