import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from pymetawave.utils.elliptic import complete_K
from pymetawave.utils.errors import (
    DegenerateLevelError,
    EllipticDomainError,
    NearHomoclinicWarning,
    ResolutionError,
    SingularityError,
)
from pymetawave.utils.orbits import (
    CnoidalParameters,
    HomoclinicOrbit,
    PotentialLevel,
    cnoidal_profile,
    elliptic_profile,
    homoclinic_profile,
    homoclinic_second_derivative,
    orbit_for_period,
    orbit_from_energy,
    orbit_period,
    potential_energy,
    turning_points,
)


def _shooting_period(c0, beta=1.0):
    u_max = turning_points(PotentialLevel(c0, beta))[1]

    def slope_up(_, y):
        return y[1]

    slope_up.terminal = True
    slope_up.direction = 1

    sol = solve_ivp(
        lambda _, y: [y[1], -y[0] + beta * y[0] ** 2],
        (0.0, 200.0),
        [u_max, 0.0],
        method="DOP853",
        events=slope_up,
        rtol=1e-12,
        atol=1e-13,
    )
    return 2.0 * sol.t_events[0][0]


def test_potential_energy():
    assert potential_energy(0.0, 0.0, 1.0) == 0.0
    assert potential_energy(1.0, 0.0, 1.0) == pytest.approx(1.0 / 6.0)
    assert potential_energy(0.0, 1.0, 2.0) == pytest.approx(0.5)


@pytest.mark.parametrize("c0", [1e-6, 0.01, 0.08, 0.12, 0.1666])
def test_turning_points(c0):
    u_min, u_max, u_far = turning_points(PotentialLevel(c0))
    assert u_min < 0.0 < u_max < 1.0 < u_far
    for u in (u_min, u_max, u_far):
        assert potential_energy(u, 0.0, 1.0) - c0 == pytest.approx(0.0, abs=1e-12)


def test_turning_points_limits():
    u_min, u_max, _ = turning_points(PotentialLevel(1e-10))
    assert u_min == pytest.approx(-math.sqrt(2e-10), rel=1e-3)
    assert u_max == pytest.approx(math.sqrt(2e-10), rel=1e-3)
    u_min, u_max, u_far = turning_points(PotentialLevel.from_saddle_gap(1e-12))
    assert u_min == pytest.approx(-0.5, abs=1e-5)
    assert u_max == pytest.approx(1.0, abs=1e-5)
    assert u_far == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("c0", [0.0, -0.1, 1.0 / 6.0, 0.2])
def test_degenerate_levels(c0):
    with pytest.raises(DegenerateLevelError):
        PotentialLevel(c0)


def test_period_limits_and_oracle():
    assert orbit_period(PotentialLevel(1e-8)) == pytest.approx(2.0 * math.pi, abs=1e-3)
    assert orbit_period(PotentialLevel(0.15)) == pytest.approx(_shooting_period(0.15), rel=1e-6)

    periods = [orbit_period(PotentialLevel(c0)) for c0 in np.linspace(0.01, 0.16, 16)]
    assert np.all(np.diff(periods) > 0)


def test_orbit_from_energy(orbit_4pi):
    orbit = orbit_from_energy(PotentialLevel(0.1), n_samples=512)
    assert orbit.energy_residual() < 1e-8
    assert orbit.samples[0] == pytest.approx(orbit.turning_points[1], abs=1e-14)
    assert orbit.samples[256] == pytest.approx(orbit.turning_points[0], abs=1e-9)
    assert orbit.derivative[256] == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(orbit.z, np.arange(512) * orbit.period / 512)

    with pytest.raises(ResolutionError):
        orbit_from_energy(PotentialLevel(0.1), n_samples=32)


@pytest.mark.parametrize("Tbar", [2.0 * math.pi + 0.01, 3.0 * math.pi, 4.0 * math.pi, 40.0, 10.0 * math.pi])
def test_orbit_for_period(Tbar):
    orbit = orbit_for_period(Tbar, n_samples=256)
    assert orbit.period == pytest.approx(Tbar, rel=1e-8)
    assert orbit.energy_residual() < 1e-8


@pytest.mark.parametrize("Tbar", [2.0 * math.pi, 5.0, -1.0])
def test_orbit_for_period_below_harmonic_limit(Tbar):
    with pytest.raises(DegenerateLevelError):
        orbit_for_period(Tbar)


@pytest.mark.parametrize("gap", [1e-50, 1e-200, 1e-300])
def test_turning_points_next_to_the_saddle(gap):
    u_min, u_max, u_far = turning_points(PotentialLevel.from_saddle_gap(gap))
    assert u_min == pytest.approx(-0.5, abs=1e-12)
    assert u_max == pytest.approx(1.0, abs=1e-12)
    assert u_far == pytest.approx(1.0, abs=1e-12)
    assert u_max <= 1.0 <= u_far


def test_period_grows_logarithmically_near_the_saddle():
    saddle = 1.0 / 6.0
    periods = [orbit_period(PotentialLevel.from_saddle_gap(saddle * r)) for r in (1e-20, 1e-25, 1e-30)]
    assert np.diff(periods) == pytest.approx([math.log(1e5)] * 2, rel=1e-3)


def test_period_beyond_search_range_is_rejected():
    with pytest.raises(DegenerateLevelError, match="near-homoclinic range"):
        orbit_for_period(400.0)


def test_near_homoclinic_orbit_is_flagged():
    with pytest.warns(NearHomoclinicWarning):
        orbit = orbit_for_period(20.0 * math.pi, n_samples=256)
    assert orbit.near_homoclinic
    assert orbit.period == pytest.approx(20.0 * math.pi, rel=1e-8)


def test_elliptic_profile_matches_samples(orbit_4pi):
    np.testing.assert_allclose(elliptic_profile(orbit_4pi, orbit_4pi.z), orbit_4pi.samples, atol=1e-8)


def test_cnoidal_parameters_from_orbit(orbit_4pi):
    params = CnoidalParameters.from_orbit(orbit_4pi)
    u_min, u_max = orbit_4pi.turning_points
    assert params.period == pytest.approx(orbit_4pi.period, rel=1e-10)
    assert cnoidal_profile(params, 0.0) == pytest.approx(u_max, abs=1e-14)
    quarter = params.g * complete_K(params.k)
    assert cnoidal_profile(params, quarter) == pytest.approx(u_min, abs=1e-10)
    with pytest.raises(SingularityError):
        cnoidal_profile(params, 2.0 * quarter)


def test_cnoidal_from_offset_solves_the_ode():
    params = CnoidalParameters.from_offset(2.0, beta=1.0)
    h = 1e-3
    z = np.linspace(-0.5, 0.5, 11) * params.g * complete_K(params.k)
    U = cnoidal_profile(params, z)
    Upp = (cnoidal_profile(params, z + h) - 2.0 * U + cnoidal_profile(params, z - h)) / (h * h)
    np.testing.assert_allclose(Upp + U - U**2, 0.0, atol=1e-5 * max(1.0, np.max(np.abs(U**2))))
    assert cnoidal_profile(params, 0.0) == pytest.approx(2.0)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.4])
def test_cnoidal_from_offset_needs_single_real_root(alpha):
    with pytest.raises(EllipticDomainError):
        CnoidalParameters.from_offset(alpha, beta=1.0)


def test_homoclinic_profile():
    assert homoclinic_profile(1.0, 0.0) == (-0.5, 0.0)
    assert abs(homoclinic_profile(1.0, 40.0)[0] - 1.0) < 1e-15
    assert homoclinic_profile(2.0, 0.0)[0] == pytest.approx(-0.25)

    z = np.linspace(-30.0, 30.0, 601)
    for beta in (0.5, 1.0, 3.0):
        G, _ = homoclinic_profile(beta, z)
        residual = homoclinic_second_derivative(beta, z) + G - beta * G**2
        assert np.max(np.abs(residual)) < 1e-12


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_homoclinic_slope_integral(beta):
    value, _ = quad(lambda z: homoclinic_profile(beta, z)[1] ** 2, -60.0, 60.0, epsabs=1e-14, limit=200)
    assert value == pytest.approx(6.0 / (5.0 * beta**2), rel=1e-10)


def test_homoclinic_orbit_dataclass():
    orbit = HomoclinicOrbit(beta=1.0)
    assert orbit.profile(0.0)[0] == -0.5
    with pytest.raises(DegenerateLevelError):
        HomoclinicOrbit(beta=0.0)
