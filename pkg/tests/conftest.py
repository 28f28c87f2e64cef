import math

import numpy as np
import pytest

from pymetawave.utils.floquet import first_instability
from pymetawave.utils.orbits import orbit_for_period
from pymetawave.utils.wavesolver import ModelParams, newton_solve, seed_from_orbit

N_SITES = 20


@pytest.fixture(scope="session")
def orbit_4pi():
    """Unperturbed periodic orbit with period 4 pi, beta = 1."""
    return orbit_for_period(4.0 * math.pi, beta=1.0, n_samples=1024)


@pytest.fixture(scope="session")
def base_params():
    return ModelParams(beta=1.0, gamma=0.0, lam=0.0, omega=0.5, p=2.0 * math.pi / N_SITES, Delta=0.0)


@pytest.fixture(scope="session")
def unperturbed_wave(orbit_4pi, base_params):
    """Converged travelling wave from the 4 pi orbit: J = 50, omega = 1/2, u = 1."""
    sol, report = newton_solve(seed_from_orbit(orbit_4pi, J=50, u=1), base_params, full_output=True)
    return sol, report


@pytest.fixture(scope="session")
def period_doubling_onset(unperturbed_wave, base_params):
    """First unstable point of the Delta sweep 1e-4 .. 2e-3 on the 4 pi wave, gamma = lambda = 0."""
    sol, _ = unperturbed_wave
    deltas = np.linspace(1e-4, 2e-3, 20)
    return first_instability(sol, base_params, deltas, N=N_SITES, steps_per_period=1024, check_resolution=False)
