"""
melnikov.py

Module Overview
---------------
Melnikov functions of the travelling-frame equation perturbed by loss and
the drive h(z) = Delta cos z, their simple zeros, and the damping thresholds
below which a periodic (subharmonic) or localized (homoclinic) wave persists.

Two evaluation paths exist for each function. The quadrature path is
authoritative; the closed forms are evaluated as printed and, for the
subharmonic case, only compared against quadrature in a logged report.

Sign convention
---------------
Orbits are sampled with U0(0) = U_max. For the subharmonic function this
gives M(a) = -gamma I1 + Delta C sin a with C = omega * int cos(omega z) U0 dz.
For u = 1 (the orbit maximum aligned with the drive maximum) C > 0.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from pymetawave.utils.elliptic import complete_E, complete_K
from pymetawave.utils.errors import (
    QuadratureError,
    ResolutionError,
    ResonanceError,
    SingularityError,
    SmallOrbitWarning,
)
from pymetawave.utils.orbits import homoclinic_profile

logger = logging.getLogger(__name__)

# sech(Z/2)**2 < 1e-16 with a safety factor
HOMOCLINIC_CUTOFF = 2.0 * math.acosh(1e8) * 1.25

SIMPLE_ZERO_SLOPE = 1e-8


@dataclass(frozen=True)
class DriveSpec:
    """h(z) = Delta cos z."""

    Delta: float = 1.0

    def h(self, z):
        return self.Delta * np.cos(z)

    def h_prime(self, z):
        return -self.Delta * np.sin(z)


@dataclass(frozen=True)
class SubharmonicIndex:
    """
    Resonance u : 1 between the orbit period Tbar and the drive.

    Attributes
    ----------
    u : int
        Positive harmonic number.
    Tbar : float
        Orbit period.
    """

    u: int
    Tbar: float

    def __post_init__(self):
        if int(self.u) != self.u or self.u < 1:
            raise ValueError(f"Harmonic number u must be a positive integer, got {self.u!r}.")
        if not self.Tbar > 0:
            raise ValueError(f"Orbit period must be positive, got {self.Tbar!r}.")

    @property
    def v(self):
        return 1

    @property
    def omega(self):
        return 2.0 * math.pi * self.u / self.Tbar

    @classmethod
    def for_orbit(cls, orbit, u=1):
        return cls(u=int(u), Tbar=orbit.period)


@dataclass
class MelnikovCurve:
    """
    Sampled Melnikov function over one drive phase period.

    Attributes
    ----------
    phases : numpy.ndarray
        Uniform grid of a in [0, 2 pi).
    values : numpy.ndarray
        M(a) on the grid.
    zeros : list of tuple
        (a0, sign of dM/da) for each simple zero, a0 in [0, 2 pi).
    """

    phases: np.ndarray
    values: np.ndarray
    zeros: list = field(default_factory=list)

    @property
    def n_zeros(self):
        return len(self.zeros)

    def to_frame(self):
        return pd.DataFrame({"a": self.phases, "M": self.values})


@dataclass(frozen=True)
class MelnikovEstimate:
    """A Melnikov value tagged with the formula that produced it."""

    value: float
    provenance: str = "quadrature"

    def __float__(self):
        return float(self.value)


def _check_resonance(orbit, idx):
    if abs(idx.Tbar - orbit.period) > 1e-8 * orbit.period:
        raise ValueError(
            f"Subharmonic index built for Tbar={idx.Tbar!r} does not match the orbit period "
            f"{orbit.period!r}."
        )
    if orbit.n_samples < 32 * idx.u:
        raise ResolutionError(
            f"{orbit.n_samples} orbit samples cannot resolve u={idx.u} drive oscillations; "
            f"at least {32 * idx.u} are needed."
        )


def subharmonic_components(orbit, idx):
    """
    Integrals that fix the subharmonic Melnikov function.

    The trapezoid rule on the uniform orbit samples is spectrally accurate
    because every integrand is T-periodic.

    Returns
    -------
    tuple of float
        (I1, C, S) with I1 = int U0'**2, C = omega int cos(omega z) U0 and
        S = omega int sin(omega z) U0 (zero for an even orbit), so that
        M(a) = -gamma I1 + Delta (C sin a + S cos a).
    """
    _check_resonance(orbit, idx)
    weight = orbit.period / orbit.n_samples
    omega = idx.omega
    I1 = weight * float(np.sum(orbit.derivative**2))
    C = omega * weight * float(np.sum(np.cos(omega * orbit.z) * orbit.samples))
    S = omega * weight * float(np.sum(np.sin(omega * orbit.z) * orbit.samples))
    return I1, C, S


def melnikov_subharmonic_numeric(orbit, idx, gamma, drive, a):
    """
    Subharmonic Melnikov function by quadrature over the sampled orbit,

        M(a) = -gamma int_0^T U0'(z)**2 dz - omega int_0^T h'(omega z + a) U0(z) dz

    with omega = 2 pi u / T.

    Parameters
    ----------
    orbit : PeriodicOrbit
        Unperturbed orbit, at least 32 u samples.
    idx : SubharmonicIndex
        Resonance with idx.Tbar equal to orbit.period.
    gamma : float
        Loss coefficient.
    drive : DriveSpec
        Drive amplitude.
    a : float or numpy.ndarray
        Drive phase(s).

    Returns
    -------
    float or numpy.ndarray
        M(a).

    Raises
    ------
    ResolutionError
        If the orbit has fewer than 32 u samples.
    """
    I1, C, S = subharmonic_components(orbit, idx)
    a = np.asarray(a, dtype=float)
    value = -gamma * I1 + drive.Delta * (C * np.sin(a) + S * np.cos(a))
    return float(value) if value.ndim == 0 else value


def _closed_P(k, K, u):
    # numerator of Xi, transcribed with K**2 inside the trigonometric arguments
    pu = math.pi * u
    K2 = K * K
    phase = 2.0 * pu * K2
    first = 64.0 * pu * math.cos(phase) * K2 * (
        24.0 - 48.0 * k + pu * pu * K2 * (-3.0 + 16.0 * (-1.0 + 2.0 * k) * K2)
    )
    second = (
        32.0
        * (
            -24.0
            + 48.0 * k
            + pu * pu * K2 * (3.0 + K2 * (48.0 - 96.0 * k + 2.0 * pu * pu * K2 * (-3.0 + 8.0 * (-1.0 + 2.0 * k) * K2)))
        )
        * math.sin(phase)
    )
    return -(first + second)


def melnikov_subharmonic_closed(params, idx, gamma, drive, a):
    """
    Closed-form subharmonic Melnikov value as printed for the cnoidal family,

        -gamma (4 A**2/g) [((2k - 1) E(am(4K)) - 4 (k - 1) K) / (3 (1 + cn)**4 k)]
        + (A pi u / (2K)) Xi Delta sin a,   Xi = P / (24 pi**5 u**5 K**5).

    E(am(4K(k), k), k) = 4 E(k); (1 + cn)**4 is evaluated at z = 0, where it
    equals 16. The value is not asserted against quadrature; see
    ``subharmonic_discrepancy``.

    Returns
    -------
    MelnikovEstimate
        Value with provenance "closed-form".

    Raises
    ------
    SingularityError
        For k near 0 or 1, where the expression divides by vanishing terms.
    """
    k = params.k
    if k < 1e-8 or 1.0 - k < 1e-12:
        raise SingularityError(f"Closed-form Melnikov expression is singular at k={k!r}.")
    K = complete_K(k)
    E_am = 4.0 * complete_E(k)
    u = idx.u
    loss = (4.0 * params.A**2 / params.g) * (
        ((-1.0 + 2.0 * k) * E_am - 4.0 * (-1.0 + k) * K) / (3.0 * 16.0 * k)
    )
    xi = _closed_P(k, K, u) / (24.0 * math.pi**5 * u**5 * K**5)
    drive_term = (params.A * math.pi * u / (2.0 * K)) * xi * drive.Delta * math.sin(a)
    return MelnikovEstimate(value=-gamma * loss + drive_term, provenance="closed-form")


def subharmonic_discrepancy(orbit, idx, gamma, drive, phases):
    """
    Compare the closed form with quadrature at the given phases.

    Each row is logged at INFO; rows whose relative difference exceeds 1e-6
    are logged at WARNING.

    Returns
    -------
    pandas.DataFrame
        Columns a, closed, numeric, relative_difference.
    """
    params = orbit.cnoidal_parameters()
    rows = []
    for a in np.atleast_1d(np.asarray(phases, dtype=float)):
        closed = melnikov_subharmonic_closed(params, idx, gamma, drive, a).value
        numeric = melnikov_subharmonic_numeric(orbit, idx, gamma, drive, a)
        scale = max(abs(numeric), np.finfo(float).tiny)
        relative = abs(closed - numeric) / scale
        rows.append((a, closed, numeric, relative))
        level = logging.WARNING if relative > 1e-6 else logging.INFO
        logger.log(
            level,
            "closed-form vs quadrature at a=%.6f: closed=%.12g numeric=%.12g rel=%.3e",
            a,
            closed,
            numeric,
            relative,
        )
    return pd.DataFrame(rows, columns=["a", "closed", "numeric", "relative_difference"])


def melnikov_homoclinic_closed(beta, omega, gamma, drive, a):
    """
    M(a) = -6 (gamma + 5 beta pi omega**2 Delta csch(pi omega) sin a) / (5 beta**2).

    Example
    -------
    >>> round(melnikov_homoclinic_closed(1.0, 1.0, 0.0, DriveSpec(1.0), math.pi / 2), 5)
    -1.63217
    """
    a = np.asarray(a, dtype=float)
    forcing = 5.0 * beta * math.pi * omega**2 * drive.Delta / math.sinh(math.pi * omega)
    value = -6.0 * (gamma + forcing * np.sin(a)) / (5.0 * beta**2)
    return float(value) if value.ndim == 0 else value


def _quad(func, lower, upper, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        value, abserr = quad(func, lower, upper, epsabs=1e-14, epsrel=1e-13, limit=400, **kwargs)
    if not np.isfinite(value) or abserr > 1e-10 * max(abs(value), 1e-6):
        raise QuadratureError(f"Homoclinic quadrature did not converge (error estimate {abserr:.2e}).")
    return value


def homoclinic_components(beta, omega):
    """
    Integrals over (-Z, Z) fixing the homoclinic Melnikov function.

    Returns
    -------
    tuple of float
        (I, Cc, Cs) with I = int Gamma'**2, Cc = int cos(omega z) Gamma' and
        Cs = int sin(omega z) Gamma', so M(a) = -gamma I + Delta (Cc cos a - Cs sin a).
    """

    def slope(z):
        return homoclinic_profile(beta, z)[1]

    def slope_squared(z):
        return slope(z) ** 2

    Z = HOMOCLINIC_CUTOFF
    I = _quad(slope_squared, -Z, 0.0) + _quad(slope_squared, 0.0, Z)
    Cc = _quad(slope, -Z, 0.0, weight="cos", wvar=omega) + _quad(slope, 0.0, Z, weight="cos", wvar=omega)
    Cs = _quad(slope, -Z, 0.0, weight="sin", wvar=omega) + _quad(slope, 0.0, Z, weight="sin", wvar=omega)
    return I, Cc, Cs


def melnikov_homoclinic_numeric(beta, omega, gamma, drive, a):
    """
    Homoclinic Melnikov function int (-gamma Gamma'(z) + h(omega z + a)) Gamma'(z) dz
    by adaptive quadrature over (-Z, Z), Z = 2 asech(1e-8) * 1.25.

    Raises
    ------
    QuadratureError
        If any of the component integrals fails to converge.
    """
    if not (beta > 0 and omega > 0):
        raise ValueError(f"beta and omega must be positive, got beta={beta!r}, omega={omega!r}.")
    I, Cc, Cs = homoclinic_components(beta, omega)
    a = np.asarray(a, dtype=float)
    value = -gamma * I + drive.Delta * (Cc * np.cos(a) - Cs * np.sin(a))
    return float(value) if value.ndim == 0 else value


def damping_threshold_homoclinic(beta, omega, Delta):
    """
    gamma* = 5 beta pi omega**2 Delta csch(pi omega).

    A localized wave is predicted to persist iff gamma < gamma*.
    """
    return 5.0 * beta * math.pi * omega**2 * Delta / math.sinh(math.pi * omega)


def damping_threshold_periodic(orbit, idx, drive):
    """
    gamma* = |drive-term amplitude| / int U0'**2 from the quadrature decomposition.

    Parameters
    ----------
    orbit : PeriodicOrbit
    idx : SubharmonicIndex
    drive : DriveSpec
        Delta > 0.

    Returns
    -------
    float

    Raises
    ------
    ResonanceError
        If the drive term vanishes (the orbit has no u-th harmonic).
    """
    if not drive.Delta > 0:
        raise ValueError(f"Drive amplitude must be positive, got Delta={drive.Delta!r}.")
    I1, C, S = subharmonic_components(orbit, idx)
    forcing = drive.Delta * math.hypot(C, S)
    scale = drive.Delta * idx.omega * orbit.period * orbit.amplitude
    if forcing <= 1e-13 * scale:
        raise ResonanceError(f"Drive term vanishes for u={idx.u}; the orbit has no such harmonic.")
    if orbit.amplitude < 1e-3:
        warnings.warn(
            f"Orbit amplitude {orbit.amplitude:.3e} is in the harmonic limit; the threshold "
            "is a ratio of vanishing quantities.",
            SmallOrbitWarning,
            stacklevel=2,
        )
    return forcing / I1


def persistence_predicted(gamma, threshold):
    return abs(gamma) < threshold


def find_simple_zeros(producer, grid_size=256):
    """
    Simple zeros of a 2 pi periodic Melnikov function.

    M is sampled on a uniform grid; each sign change is refined with Brent's
    bracketed method and kept when a centred difference of M confirms a
    nonzero slope.

    Parameters
    ----------
    producer : callable
        a -> M(a) for scalar a.
    grid_size : int, optional
        Number of phase samples, at least 32. Default 256.

    Returns
    -------
    MelnikovCurve
        An empty zero list signals that the loss exceeds the threshold.
    """
    n = int(grid_size)
    if n < 32:
        raise ResolutionError(f"Phase grid needs at least 32 points, got {n}.")
    phases = 2.0 * math.pi * np.arange(n) / n
    values = np.array([float(producer(a)) for a in phases])
    h = 1e-5

    candidates = []
    for i in range(n):
        left, right = phases[i], phases[i] + 2.0 * math.pi / n
        v_left = values[i]
        v_right = values[(i + 1) % n]
        if v_left == 0.0:
            candidates.append(left)
        elif v_left * v_right < 0.0:
            candidates.append(brentq(producer, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps))

    zeros = []
    for a0 in candidates:
        slope = (float(producer(a0 + h)) - float(producer(a0 - h))) / (2.0 * h)
        if abs(slope) > SIMPLE_ZERO_SLOPE:
            zeros.append((float(a0 % (2.0 * math.pi)), int(np.sign(slope))))
        else:
            logger.debug("Discarding degenerate zero at a=%.6f (slope %.3e).", a0, slope)
    return MelnikovCurve(phases=phases, values=values, zeros=zeros)


def homoclinic_curve(beta, omega, gamma, drive, grid_size=256, closed=False):
    """Zeros of the homoclinic Melnikov function, by quadrature or by closed form."""
    if closed:

        def producer(a):
            return melnikov_homoclinic_closed(beta, omega, gamma, drive, a)

    else:
        I, Cc, Cs = homoclinic_components(beta, omega)

        def producer(a):
            return -gamma * I + drive.Delta * (Cc * math.cos(a) - Cs * math.sin(a))

    return find_simple_zeros(producer, grid_size)


def subharmonic_curve(orbit, idx, gamma, drive, grid_size=256):
    I1, C, S = subharmonic_components(orbit, idx)

    def producer(a):
        return -gamma * I1 + drive.Delta * (C * math.sin(a) + S * math.cos(a))

    return find_simple_zeros(producer, grid_size)
