"""Exception types shared across the package."""


class AHFlowError(Exception):
    """Base class for all package-specific errors."""


class MinimalSphereViolation(AHFlowError):
    """The orbit curvature crossed the minimal-hypersphere threshold r^2*lam >= 1,
    so the radial metric coefficient is no longer defined."""


class NonpositiveMetric(AHFlowError):
    """A metric coefficient (f or w = f^2) is zero or negative."""


class InadmissibleSpec(AHFlowError):
    """Initial-data specification produces a profile outside the admissible class."""


class StepUnderflow(AHFlowError):
    """The stable time step fell below the hard floor (1e-14)."""


class DegenerateFit(AHFlowError):
    """Decay fit requested on nonpositive data or a window with too few samples."""


class InsufficientSnapshots(AHFlowError):
    """Fewer than three consecutive snapshots available for a time-derivative check."""


class ConfigError(AHFlowError):
    """Malformed or inconsistent run configuration; message names the offending field."""


class IoError(AHFlowError):
    """Failure reading or writing a run artifact."""


class MissingColumn(AHFlowError):
    """A persisted CSV lacks a column (or any rows) required by the consumer."""
