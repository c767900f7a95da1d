import pytest

from extinctlab.profiles import OmegaProfile, PotentialField
from extinctlab.solver import ProblemSpec, run


@pytest.fixture(scope="session")
def omega_r_potential():
    """a(r) = exp(-1/r): the reference extinction potential."""
    return PotentialField(1.0, OmegaProfile.power(1.0))


@pytest.fixture(scope="session")
def omega_r_run(omega_r_potential):
    """Shared extinction run with the exp(-1/r) potential (u0 = 1)."""
    spec = ProblemSpec(q=0.5, potential=omega_r_potential, u0=1.0, cells=1000,
                       dt=2e-3, horizon=30.0, snapshot_every=25)
    return run(spec), omega_r_potential


@pytest.fixture(scope="session")
def omega_r_small_run(omega_r_potential):
    """Same potential, small data: the dominating curve bends inside the ball."""
    spec = ProblemSpec(q=0.5, potential=omega_r_potential, u0=0.05, cells=1000,
                       dt=1e-3, horizon=10.0, snapshot_every=25)
    return run(spec), omega_r_potential
