import numpy as np
import pytest

from ahflow.evolution import SolverConfig, run
from ahflow.geometry import RadialGrid
from ahflow.initial_data import InitialDataSpec, build_profile


@pytest.fixture(scope="session")
def grid256():
    return RadialGrid(256)


@pytest.fixture(scope="session")
def profile_below(grid256):
    """lam0 = -1 - 0.5 exp(-r^2): strictly below -1."""
    return build_profile(
        InitialDataSpec("gaussian_bump", amplitude=-0.5, center=0.0, width=1.0),
        grid256,
    )


@pytest.fixture(scope="session")
def profile_neg(grid256):
    """lam0 = -1 + 0.5 exp(-r^2): strictly negative, max -0.5."""
    return build_profile(
        InitialDataSpec("gaussian_bump", amplitude=0.5, center=0.0, width=1.0),
        grid256,
    )


@pytest.fixture(scope="session")
def run_below(profile_below):
    """Long run of the below-minus-one regime, convergence stop disabled so
    the full t <= 10 window is covered."""
    cfg = SolverConfig(t_end=10.0, convergence_tol=0.0, cfl_factor=0.9)
    return run(profile_below, cfg)


@pytest.fixture(scope="session")
def run_neg(profile_neg):
    cfg = SolverConfig(t_end=10.0, convergence_tol=0.0, cfl_factor=0.9)
    return run(profile_neg, cfg)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
