"""Construction and admissibility screening of initial curvature profiles.

Four regimes matter downstream, classified by the sign pattern of the initial
orbit curvature lam0:

* ``strictly_below_minus_one`` -- sup lam0 <= -1,
* ``strictly_negative``        -- sup lam0 < 0,
* ``nonpositive``              -- sup lam0 <= 0 with the sup attained (touching 0),
* ``sign_indefinite``          -- lam0 somewhere positive but still free of
  minimal hyperspheres (sup r^2 lam0 < 1); this is the open regime probed by
  the neckpinch sweeps.

Admissibility = no minimal hypersphere + even parity at the origin + the far
tail sitting at the asymptotic value -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InadmissibleSpec, IoError
from .geometry import CurvatureProfile, RadialGrid, sup_r2_lambda

__all__ = [
    "InitialDataSpec",
    "ValidationReport",
    "FAMILIES",
    "REGIMES",
    "build_profile",
    "evaluate_family",
    "validate",
    "load_table",
]

FAMILIES = ("hyperbolic", "gaussian_bump", "polynomial_bump", "custom_table")
REGIMES = (
    "strictly_below_minus_one",
    "strictly_negative",
    "nonpositive",
    "sign_indefinite",
)

# Absolute tolerance separating "touching zero" from "strictly negative".
TOUCH_TOL = 1e-12


@dataclass(frozen=True)
class InitialDataSpec:
    """Parameters of one initial-data family.

    ``amplitude`` is the peak height of lam - (-1) at the bump center, for
    both bump families.  ``center``/``width`` are ignored by the families
    that do not use them.  ``table`` holds (r, lam) rows for custom_table.
    """

    family: str
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    dimension: int = 3
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InadmissibleSpec(f"unknown family {self.family!r}")
        if self.width <= 0:
            raise InadmissibleSpec(f"width must be > 0, got {self.width}")
        if self.center < 0:
            raise InadmissibleSpec(f"center must be >= 0, got {self.center}")
        if self.dimension < 3:
            raise InadmissibleSpec(f"dimension must be >= 3, got {self.dimension}")
        if self.family == "custom_table" and not self.table:
            raise InadmissibleSpec("custom_table requires table data")


def load_table(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Read a two-column (r, lambda) CSV with strictly increasing r from 0."""
    rows: list[tuple[float, float]] = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                if len(row) < 2:
                    raise InadmissibleSpec(f"{path}:{lineno}: expected two columns")
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if lineno == 1:  # header line
                        continue
                    raise InadmissibleSpec(f"{path}:{lineno}: non-numeric entry")
    except OSError as exc:
        raise IoError(f"cannot read table {path}: {exc}") from exc
    if len(rows) < 4:
        raise InadmissibleSpec(f"{path}: need at least 4 rows")
    r = np.array([p[0] for p in rows])
    if r[0] != 0.0:
        raise InadmissibleSpec(f"{path}: table must start at r = 0")
    if np.any(np.diff(r) <= 0):
        raise InadmissibleSpec(f"{path}: r column must be strictly increasing")
    return tuple(rows)


def evaluate_family(spec: InitialDataSpec, r: np.ndarray) -> np.ndarray:
    """Sample the family's lam(r) on an arbitrary array of radii.

    gaussian_bump is the even-parity symmetrization of a bump at +-center,
    normalized so lam(center) = -1 + amplitude exactly:

        lam = -1 + A * [e^(-((r-r0)/s)^2) + e^(-((r+r0)/s)^2)] / (1 + e^(-(2 r0/s)^2))

    polynomial_bump has an O(1/r^4) tail, comfortably inside the conformally
    compact class:  lam = -1 + A * (1 + (r/s)^2)^(-2).

    custom_table uses monotone cubic (PCHIP) interpolation inside the tabulated
    range and relaxes the end value to -1 with a (r_end/r)^4 tail beyond it.
    """
    r = np.asarray(r, dtype=np.float64)
    if spec.family == "hyperbolic":
        return np.full_like(r, -1.0)
    if spec.family == "gaussian_bump":
        a, r0, s = spec.amplitude, spec.center, spec.width
        norm = 1.0 + np.exp(-((2.0 * r0 / s) ** 2))
        bump = np.exp(-(((r - r0) / s) ** 2)) + np.exp(-(((r + r0) / s) ** 2))
        return -1.0 + a * bump / norm
    if spec.family == "polynomial_bump":
        a, s = spec.amplitude, spec.width
        return -1.0 + a * (1.0 + (r / s) ** 2) ** (-2)
    # custom_table: mirror about r = 0 before interpolating so the fit is
    # exactly even at the origin (the raw left-endpoint slope estimate is not)
    tab = np.asarray(spec.table, dtype=np.float64)
    r_full = np.concatenate([-tab[:0:-1, 0], tab[:, 0]])
    lam_full = np.concatenate([tab[:0:-1, 1], tab[:, 1]])
    interp = PchipInterpolator(r_full, lam_full, extrapolate=False)
    out = np.full_like(r, -1.0)
    inside = np.abs(r) <= tab[-1, 0]
    out[inside] = interp(r[inside])
    r_end, lam_end = tab[-1, 0], tab[-1, 1]
    beyond = ~inside
    if np.any(beyond):
        out[beyond] = -1.0 + (lam_end + 1.0) * (r_end / np.abs(r[beyond])) ** 4
    return out


def build_profile(spec: InitialDataSpec, grid: RadialGrid) -> CurvatureProfile:
    """Sample the family on the grid; reject data with a minimal hypersphere."""
    lam = evaluate_family(spec, grid.r_nodes)
    profile = CurvatureProfile(grid, lam, spec.dimension)
    s = sup_r2_lambda(profile)
    if s >= 1.0:
        raise InadmissibleSpec(
            f"profile violates sup r^2*lam < 1 (got {s:.6g}); "
            "initial data would contain a minimal hypersphere"
        )
    return profile


@dataclass(frozen=True)
class ValidationReport:
    admissible: bool
    regime: str
    sup_r2_lambda: float
    parity_defect: float
    tail_defect: float

    def summary(self) -> str:
        flag = "admissible" if self.admissible else "INADMISSIBLE"
        return (
            f"{flag} regime={self.regime} sup_r2_lambda={self.sup_r2_lambda:.3g} "
            f"parity_defect={self.parity_defect:.3g} tail_defect={self.tail_defect:.3g}"
        )


def classify_regime(lam: np.ndarray, touch_tol: float = TOUCH_TOL) -> str:
    m = float(np.max(lam))
    if m <= -1.0 + touch_tol:
        return "strictly_below_minus_one"
    if m < -touch_tol:
        return "strictly_negative"
    if m <= touch_tol:
        return "nonpositive"
    return "sign_indefinite"


def validate(
    profile: CurvatureProfile,
    *,
    parity_tol: float = 1e-3,
    tail_tol: float = 1e-3,
    touch_tol: float = TOUCH_TOL,
) -> ValidationReport:
    """Admissibility report: minimal-sphere proximity, origin parity, far tail.

    The parity defect is the one-sided second-order estimate of dlam/dx at
    x = 0, which vanishes for any profile even in r.  The tail defect is the
    distance of the last node from the asymptotic value -1.  Failures are
    carried in the report, never raised.
    """
    lam = profile.lam
    grid = profile.grid
    dx = grid.spacing
    parity = abs(-3.0 * lam[0] + 4.0 * lam[1] - lam[2]) / (2.0 * dx)
    tail = abs(lam[-1] + 1.0)
    s = sup_r2_lambda(profile)
    admissible = s < 1.0 and parity <= parity_tol and tail <= tail_tol
    return ValidationReport(
        admissible=admissible,
        regime=classify_regime(lam, touch_tol),
        sup_r2_lambda=s,
        parity_defect=parity,
        tail_defect=tail,
    )
