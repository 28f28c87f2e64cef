"""
orbits.py

Module Overview
---------------
Unperturbed travelling-wave orbits of U'' + U - beta U**2 = 0.

The first integral is 1/2 U'**2 + V(U) = c0 with V(U) = U**2/2 - beta U**3/3.
V has a centre at U = 0 and a saddle at U = 1/beta with energy 1/(6 beta**2);
for 0 < c0 < 1/(6 beta**2) the motion around the centre is periodic and
oscillates between the two smaller roots of V(U) = c0. The separatrix is the
homoclinic orbit Gamma(z) = 1/beta - 3/(2 beta) sech(z/2)**2.

Periodic orbits are represented by samples of the numerically integrated
profile over one period (the canonical representation); the cnoidal
closed form and the exact Jacobi form are secondary evaluators.

Phase convention: U0'(0) = 0 and U0(0) = U_max, so U0 is even.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.optimize import brentq

from pymetawave.utils.elliptic import (
    EllipticModulus,
    complete_K,
    jacobi,
)
from pymetawave.utils.errors import (
    DegenerateLevelError,
    EllipticDomainError,
    NearHomoclinicWarning,
    QuadratureError,
    ResolutionError,
    SingularityError,
)

NEAR_HOMOCLINIC = 1e-8
# smallest gap/saddle ratio orbit_for_period searches, a period of about 75
MIN_SADDLE_GAP = 1e-30

_ROOT_RTOL = 4 * np.finfo(float).eps
_ROOT_XTOL = 1e-300


def saddle_energy(beta):
    return 1.0 / (6.0 * beta * beta)


def potential(U, beta):
    """V(U) = U**2/2 - beta U**3/3."""
    return 0.5 * U * U - beta * U**3 / 3.0


def potential_energy(U, Uprime, beta):
    """
    First integral 1/2 U'**2 + U**2/2 - beta U**3/3.

    Parameters
    ----------
    U, Uprime : float or numpy.ndarray
        Profile value and slope.
    beta : float
        Quadratic coefficient.

    Returns
    -------
    float or numpy.ndarray
        Energy c0 of the phase point(s).
    """
    return 0.5 * Uprime * Uprime + potential(U, beta)


@dataclass(frozen=True)
class PotentialLevel:
    """
    Energy level of the unperturbed oscillator.

    Attributes
    ----------
    c0 : float
        Energy, 0 < c0 < 1/(6 beta**2) for a periodic orbit around U = 0.
    beta : float
        Quadratic coefficient, beta > 0.
    gap : float
        Distance to the saddle energy, 1/(6 beta**2) - c0. Filled in from c0
        when not given; levels built with ``from_saddle_gap`` keep it exact,
        which is what makes very long periods resolvable.
    """

    c0: float
    beta: float = 1.0
    gap: float = None

    def __post_init__(self):
        if not self.beta > 0:
            raise DegenerateLevelError(f"beta must be positive, got beta={self.beta!r}.")
        if self.gap is None:
            object.__setattr__(self, "gap", saddle_energy(self.beta) - self.c0)
        if not (self.c0 > 0.0 and self.gap > 0.0):
            raise DegenerateLevelError(
                f"Energy level c0={self.c0!r} is degenerate: a periodic orbit needs "
                f"0 < c0 < 1/(6 beta^2) = {saddle_energy(self.beta)!r}."
            )

    @classmethod
    def from_saddle_gap(cls, gap, beta=1.0):
        return cls(c0=saddle_energy(beta) - gap, beta=beta, gap=gap)

    @property
    def saddle_energy(self):
        return saddle_energy(self.beta)


def _root(f, lo, hi, level):
    try:
        return brentq(f, lo, hi, xtol=_ROOT_XTOL, rtol=_ROOT_RTOL, maxiter=200)
    except (RuntimeError, ValueError) as err:
        raise DegenerateLevelError(
            f"Turning points of c0={level.c0!r} (gap {level.gap!r}) could not be bracketed: {err}"
        ) from err


def _roots(level):
    # returns (U_min, U_max, U_far, U_far - U_max) with the last difference
    # computed without cancellation. Roots close to a critical point of V are
    # solved for in a coordinate scaled by their distance to it.
    beta = level.beta
    if level.c0 <= 0.5 * level.saddle_energy:
        # U = sqrt(2 c0) t around the centre: 1 - t**2 + eps t**3 = 0
        scale = math.sqrt(2.0 * level.c0)
        eps = 2.0 * beta * scale / 3.0

        def g(t):
            return 1.0 - t * t + eps * t**3

        def f(u):
            return level.c0 - potential(u, beta)

        u_min = scale * _root(g, -1.0, 0.0, level)
        u_max = scale * _root(g, 1.0, math.sqrt(2.0), level)
        u_far = _root(f, 1.0 / beta, 1.5 / beta, level)
        return u_min, u_max, u_far, u_far - u_max

    # U = 1/beta + w around the saddle, and w = sqrt(2 gap) t near it:
    # t**2 + eps t**3 - 1 = 0
    scale = math.sqrt(2.0 * level.gap)
    eps = 2.0 * beta * scale / 3.0

    def g(t):
        return t * t + eps * t**3 - 1.0

    def h(w):
        return 0.5 * w * w + beta * w**3 / 3.0 - level.gap

    w_min = _root(h, -1.5 / beta, -1.0 / beta, level)
    t_max = _root(g, -2.0, -1.0, level)
    t_far = _root(g, 0.5, 1.0, level)
    s = 1.0 / beta
    return s + w_min, s + scale * t_max, s + scale * t_far, scale * (t_far - t_max)


def turning_points(level):
    """
    Roots of V(U) = c0.

    Parameters
    ----------
    level : PotentialLevel
        Admissible energy level.

    Returns
    -------
    tuple of float
        (U_min, U_max, U_far) with U_min < 0 < U_max < 1/beta < U_far. The
        orbit oscillates in [U_min, U_max]; U_far is the third root.
    """
    u_min, u_max, u_far, _ = _roots(level)
    return u_min, u_max, u_far


def orbit_period(level):
    """
    Period of the orbit at ``level`` by quadrature.

    T = 2 * integral over [U_min, U_max] of dU / sqrt(2 (c0 - V(U))). With
    c0 - V = beta/3 (U - U_min)(U_max - U)(U_far - U) and U = m + h sin(theta)
    the square-root endpoint singularities cancel; writing psi = pi/2 - theta
    leaves

        T = 2 sqrt(3/(2 beta)) * integral_0^pi dpsi / sqrt(s + 2h sin(psi/2)**2)

    with s = U_far - U_max. Near the separatrix s -> 0 and the integrand peaks
    at psi = 0 with width w = sqrt(2s/h); psi = w sinh(x) flattens the peak.
    """
    u_min, u_max, _, spread = _roots(level)
    half_width = 0.5 * (u_max - u_min)
    width = math.sqrt(2.0 * spread / half_width)
    upper = math.asinh(math.pi / width)

    def integrand(x):
        psi = width * math.sinh(x)
        return width * math.cosh(x) / math.sqrt(
            spread + 2.0 * half_width * math.sin(0.5 * psi) ** 2
        )

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        value, abserr = quad(integrand, 0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=400)
    if not np.isfinite(value) or abserr > 1e-9 * abs(value):
        raise QuadratureError(
            f"Period quadrature did not converge at c0={level.c0!r} (error estimate {abserr:.2e})."
        )
    return 2.0 * math.sqrt(1.5 / level.beta) * value


@dataclass(frozen=True)
class PeriodicOrbit:
    """
    Sampled unperturbed periodic orbit.

    Attributes
    ----------
    level : PotentialLevel
    period : float
        Period T.
    z : numpy.ndarray
        Uniform sample points i*T/n, i = 0 .. n-1.
    samples : numpy.ndarray
        U0(z_i); U0(0) = U_max.
    derivative : numpy.ndarray
        U0'(z_i).
    turning_points : tuple
        (U_min, U_max).
    far_root : float
        Third root U_far of V(U) = c0.
    modulus : float
        k = sqrt((U_max - U_min)/(U_far - U_min)); T = 4 K(k) g.
    near_homoclinic : bool
        True when 1 - k < NEAR_HOMOCLINIC.
    """

    level: PotentialLevel
    period: float
    z: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)
    turning_points: tuple = (0.0, 0.0)
    far_root: float = 0.0
    modulus: float = 0.0
    near_homoclinic: bool = False

    @property
    def beta(self):
        return self.level.beta

    @property
    def n_samples(self):
        return len(self.samples)

    @property
    def amplitude(self):
        return self.turning_points[1] - self.turning_points[0]

    def energy_residual(self):
        """Max over samples of |1/2 U'^2 + V(U) - c0|."""
        energy = potential_energy(self.samples, self.derivative, self.beta)
        return float(np.max(np.abs(energy - self.level.c0)))

    def cnoidal_parameters(self):
        return CnoidalParameters.from_orbit(self)


def _orbit_rhs(beta):
    def rhs(_, y):
        return [y[1], -y[0] + beta * y[0] * y[0]]

    return rhs


def orbit_from_energy(level, n_samples=1024):
    """
    Periodic orbit at a given energy level.

    The period comes from ``orbit_period``; the profile is integrated from
    (U_max, 0) over half a period with an 8th-order Dormand-Prince scheme and
    mirrored (U0 is even, U0' odd) onto the second half.

    Parameters
    ----------
    level : PotentialLevel
        Admissible energy level.
    n_samples : int, optional
        Number of uniform samples over one period, at least 64. Default 1024.

    Returns
    -------
    PeriodicOrbit

    Raises
    ------
    ResolutionError
        If n_samples < 64.
    QuadratureError
        If the period quadrature or the profile integration fails.
    """
    n = int(n_samples)
    if n < 64:
        raise ResolutionError(f"An orbit needs at least 64 samples, got {n}.")
    u_min, u_max, u_far, spread = _roots(level)
    period = orbit_period(level)
    modulus = math.sqrt((u_max - u_min) / (u_far - u_min))
    near_homoclinic = 0.5 * spread / (u_far - u_min) < NEAR_HOMOCLINIC
    if near_homoclinic:
        warnings.warn(
            f"Orbit with period {period:.6g} is near-homoclinic; the integrated "
            "profile amplifies integration error near the saddle.",
            NearHomoclinicWarning,
            stacklevel=2,
        )

    z = np.arange(n) * (period / n)
    half = n // 2
    solution = solve_ivp(
        _orbit_rhs(level.beta),
        (0.0, z[half]),
        [u_max, 0.0],
        method="DOP853",
        t_eval=z[: half + 1],
        rtol=1e-12,
        atol=1e-12,
    )
    if not solution.success:
        raise QuadratureError(f"Profile integration failed: {solution.message}")

    samples = np.empty(n)
    derivative = np.empty(n)
    samples[: half + 1] = solution.y[0]
    derivative[: half + 1] = solution.y[1]
    mirror = np.arange(half + 1, n)
    samples[mirror] = samples[n - mirror]
    derivative[mirror] = -derivative[n - mirror]
    derivative[0] = 0.0

    return PeriodicOrbit(
        level=level,
        period=period,
        z=z,
        samples=samples,
        derivative=derivative,
        turning_points=(u_min, u_max),
        far_root=u_far,
        modulus=modulus,
        near_homoclinic=near_homoclinic,
    )


def orbit_for_period(Tbar, beta=1.0, n_samples=1024):
    """
    Periodic orbit with prescribed period.

    The period map is monotone in c0; it is inverted by a bracketed root
    search on log(gap), gap = 1/(6 beta**2) - c0, which resolves periods from
    just above 2 pi up to the period of the level MIN_SADDLE_GAP below the
    saddle energy.

    Parameters
    ----------
    Tbar : float
        Target period, Tbar > 2 pi.
    beta : float, optional
        Quadratic coefficient. Default 1.
    n_samples : int, optional
        Samples of the returned orbit. Default 1024.

    Returns
    -------
    PeriodicOrbit

    Raises
    ------
    DegenerateLevelError
        If Tbar <= 2 pi or Tbar is outside the resolvable range.
    QuadratureError
        If the period quadrature or its inversion does not converge.
    """
    Tbar = float(Tbar)
    if not Tbar > 2.0 * math.pi:
        raise DegenerateLevelError(f"No periodic orbit has period Tbar={Tbar!r} <= 2 pi.")
    saddle = saddle_energy(beta)

    def mismatch(log_gap):
        return orbit_period(PotentialLevel.from_saddle_gap(math.exp(log_gap), beta)) - Tbar

    log_hi = math.log(saddle * (1.0 - 1e-12))
    log_lo = math.log(saddle * MIN_SADDLE_GAP)
    if mismatch(log_hi) > 0.0:
        raise DegenerateLevelError(
            f"Tbar={Tbar!r} is within numerical resolution of the harmonic limit 2 pi."
        )
    if mismatch(log_lo) < 0.0:
        raise DegenerateLevelError(f"Tbar={Tbar!r} lies beyond the resolvable near-homoclinic range.")
    try:
        log_gap = brentq(mismatch, log_lo, log_hi, xtol=1e-15, rtol=_ROOT_RTOL, maxiter=300)
    except RuntimeError as err:
        raise QuadratureError(f"Period map inversion failed at Tbar={Tbar!r}: {err}") from err
    level = PotentialLevel.from_saddle_gap(math.exp(log_gap), beta)
    return orbit_from_energy(level, n_samples)


def elliptic_profile(orbit, z):
    """
    Exact Jacobi form of a periodic orbit,
    U0(z) = U_min + (U_max - U_min) * (cn/dn)(z/(2g), k)**2.
    """
    u_min, u_max = orbit.turning_points
    params = CnoidalParameters.from_orbit(orbit)
    t = jacobi(np.asarray(z, dtype=float) / (2.0 * params.g), params.k)
    return u_min + (u_max - u_min) * (t.cn / t.dn) ** 2


@dataclass(frozen=True)
class CnoidalParameters:
    """
    Parameters of the closed form U(z) = A (1 - cn(z/g)) / (1 + cn(z/g)) + alpha.

    Attributes
    ----------
    A : float
        Amplitude scale.
    alpha : float
        Offset; U(0) = alpha.
    g : float
        Argument scale, g > 0.
    k : float
        Elliptic modulus.
    """

    A: float
    alpha: float
    g: float
    k: float

    def __post_init__(self):
        if not self.g > 0:
            raise EllipticDomainError(f"Argument scale g must be positive, got {self.g!r}.")
        EllipticModulus(self.k)

    @property
    def period(self):
        """4 K(k) g."""
        return 4.0 * complete_K(self.k) * self.g

    @classmethod
    def from_orbit(cls, orbit):
        """
        Parameters paired with a periodic orbit: k**2 = (U_max - U_min)/(U_far - U_min),
        g = sqrt(3/(2 beta (U_far - U_min))) so that T = 4 K(k) g, alpha = U_max
        and A = U_min - U_max.
        """
        u_min, u_max = orbit.turning_points
        reach = orbit.far_root - u_min
        return cls(
            A=u_min - u_max,
            alpha=u_max,
            g=math.sqrt(1.5 / (orbit.beta * reach)),
            k=orbit.modulus,
        )

    @classmethod
    def from_offset(cls, alpha, beta=1.0):
        """
        Closed-form solution through (alpha, 0) when V(U) = V(alpha) has one real
        root and a complex pair b1 +- i a1, i.e. alpha < -1/(2 beta) or
        alpha > 3/(2 beta). Then

            A**2 = (b1 - alpha)**2 + a1**2,  g = sqrt(3/(2 beta)) / sqrt(A),
            k**2 = (A + b1 - alpha) / (2A)

        and the closed form solves U'' + U - beta U**2 = 0 wherever
        1 + cn(z/g) > 0.
        """
        alpha = float(alpha)
        p = alpha - 1.5 / beta
        q = alpha * p
        b1 = -0.5 * p
        a1_squared = q - 0.25 * p * p
        if not a1_squared > 0.0:
            raise EllipticDomainError(
                f"alpha={alpha!r} gives three real roots; the closed form needs "
                "alpha < -1/(2 beta) or alpha > 3/(2 beta)."
            )
        A = math.sqrt((b1 - alpha) ** 2 + a1_squared)
        return cls(
            A=A,
            alpha=alpha,
            g=math.sqrt(1.5 / beta) / math.sqrt(A),
            k=math.sqrt((A + b1 - alpha) / (2.0 * A)),
        )


def cnoidal_profile(params, z):
    """
    Evaluate A (1 - cn(z/g)) / (1 + cn(z/g)) + alpha.

    Raises
    ------
    SingularityError
        Where 1 + cn(z/g) < 1e-10 (z/g near 2K(k) mod 4K(k)).
    """
    t = jacobi(np.asarray(z, dtype=float) / params.g, params.k)
    denominator = 1.0 + np.asarray(t.cn)
    if np.any(denominator < 1e-10):
        raise SingularityError("Cnoidal closed form diverges where cn(z/g) = -1.")
    value = params.A * (1.0 - np.asarray(t.cn)) / denominator + params.alpha
    return float(value) if np.ndim(value) == 0 else value


def _sech(x):
    x = np.abs(x)
    e = np.exp(-x)
    return 2.0 * e / (1.0 + e * e)


@dataclass(frozen=True)
class HomoclinicOrbit:
    """Gamma(z) = 1/beta - 3/(2 beta) sech(z/2)**2, homoclinic to the saddle U = 1/beta."""

    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DegenerateLevelError(f"beta must be positive, got beta={self.beta!r}.")

    def profile(self, z):
        return homoclinic_profile(self.beta, z)

    def second_derivative(self, z):
        return homoclinic_second_derivative(self.beta, z)


def homoclinic_profile(beta, z):
    """
    Homoclinic orbit and its slope.

    Returns
    -------
    tuple
        (Gamma, Gamma') with Gamma' = 3/(2 beta) sech(z/2)**2 tanh(z/2).
    """
    x = 0.5 * np.asarray(z, dtype=float)
    s2 = _sech(x) ** 2
    gamma = 1.0 / beta - 1.5 / beta * s2
    gamma_prime = 1.5 / beta * s2 * np.tanh(x)
    if np.ndim(gamma) == 0:
        return float(gamma), float(gamma_prime)
    return gamma, gamma_prime


def homoclinic_second_derivative(beta, z):
    # 3/(4 beta) (sech^4 - 2 sech^2 tanh^2) at z/2
    x = 0.5 * np.asarray(z, dtype=float)
    s2 = _sech(x) ** 2
    value = 0.75 / beta * (s2 * s2 - 2.0 * s2 * np.tanh(x) ** 2)
    return float(value) if np.ndim(value) == 0 else value
