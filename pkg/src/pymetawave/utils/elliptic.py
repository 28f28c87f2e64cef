"""
elliptic.py

Module Overview
---------------
Real-argument elliptic integrals and Jacobi elliptic functions.

All functions take the elliptic *modulus* k (never the parameter m = k**2)
with 0 <= k < 1. Complete integrals use the arithmetic-geometric mean,
Jacobi functions use the descending Landen (AGM) scheme and the incomplete
integrals are evaluated through Carlson's symmetric forms R_F and R_D with
the duplication theorem.

Moduli within ``NEAR_DEGENERATE`` of 1 are accepted but emit a
``NearDegenerateWarning``: K(k) then behaves like log(4/k') and every
quantity built on it inherits the logarithmic sensitivity.

Usage
-----
>>> from pymetawave.utils.elliptic import complete_K
>>> complete_K(0.0)
1.5707963267948966
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from pymetawave.utils.errors import EllipticDomainError, NearDegenerateWarning

NEAR_DEGENERATE = 1e-6

_EPS = np.finfo(float).eps
_AGM_MAXITER = 64
_CARLSON_TOL = 1e-3


@dataclass(frozen=True)
class EllipticModulus:
    """
    Validated elliptic modulus.

    Attributes
    ----------
    k : float
        Modulus, 0 <= k < 1.
    """

    k: float

    def __post_init__(self):
        k = self.k
        if not np.isfinite(k) or k < 0.0 or k >= 1.0:
            raise EllipticDomainError(
                f"Elliptic modulus must satisfy 0 <= k < 1, got k={k!r}."
            )

    @property
    def complement(self):
        # (1-k)(1+k) keeps the digits of k' when k is close to 1
        return math.sqrt((1.0 - self.k) * (1.0 + self.k))

    @property
    def near_degenerate(self):
        return 1.0 - self.k < NEAR_DEGENERATE


@dataclass(frozen=True)
class JacobiTriple:
    """
    Jacobi elliptic functions at one argument (or an array of arguments).

    Attributes
    ----------
    sn, cn, dn : float or numpy.ndarray
    am : float or numpy.ndarray
        Jacobi amplitude in radians; sn = sin(am) and cn = cos(am).
    """

    sn: float
    cn: float
    dn: float
    am: float


def as_modulus(k):
    """
    Validate a modulus given as a float or an EllipticModulus and return it
    as a float. Emits NearDegenerateWarning for 1 - k < NEAR_DEGENERATE.
    """
    if not isinstance(k, EllipticModulus):
        k = EllipticModulus(float(k))
    if k.near_degenerate:
        warnings.warn(
            f"Elliptic modulus k={k.k!r} is near-degenerate (1-k={1.0 - k.k:.3e}).",
            NearDegenerateWarning,
            stacklevel=3,
        )
    return k.k


def _agm_sequence(k):
    # rows (a_n, b_n, c_n) with a_0 = 1, b_0 = k', c_0 = k
    a = 1.0
    b = EllipticModulus(k).complement
    c = k
    sequence = [(a, b, c)]
    for _ in range(_AGM_MAXITER):
        if abs(c) <= _EPS * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        sequence.append((a, b, c))
    return sequence


def complete_K(k):
    """
    Complete elliptic integral of the first kind.

    K(k) = integral from 0 to pi/2 of 1/sqrt(1 - k**2 sin(t)**2) dt, computed
    as pi / (2 AGM(1, k')).

    Parameters
    ----------
    k : float or EllipticModulus
        Elliptic modulus, 0 <= k < 1.

    Returns
    -------
    float
        K(k).

    Raises
    ------
    EllipticDomainError
        If k < 0 or k >= 1.

    Example
    -------
    >>> complete_K(0.8)
    1.9953027776647296
    """
    k = as_modulus(k)
    a_n = _agm_sequence(k)[-1][0]
    return math.pi / (2.0 * a_n)


def complete_E(k):
    """
    Complete elliptic integral of the second kind.

    Uses E(k) = K(k) * (1 - sum_n 2**(n-1) c_n**2) over the AGM sequence
    started at (1, k') with c_0 = k.

    Parameters
    ----------
    k : float or EllipticModulus
        Elliptic modulus, 0 <= k < 1.

    Returns
    -------
    float
        E(k).
    """
    k = as_modulus(k)
    sequence = _agm_sequence(k)
    total = 0.0
    for n, (_, _, c) in enumerate(sequence):
        total += 2.0 ** (n - 1) * c * c
    a_n = sequence[-1][0]
    return math.pi / (2.0 * a_n) * (1.0 - total)


def carlson_rf(x, y, z):
    """Carlson's symmetric integral R_F(x, y, z); at most one argument may be zero."""
    xt, yt, zt = float(x), float(y), float(z)
    while True:
        sx, sy, sz = math.sqrt(xt), math.sqrt(yt), math.sqrt(zt)
        alamb = sx * (sy + sz) + sy * sz
        xt = 0.25 * (xt + alamb)
        yt = 0.25 * (yt + alamb)
        zt = 0.25 * (zt + alamb)
        ave = (xt + yt + zt) / 3.0
        delx = (ave - xt) / ave
        dely = (ave - yt) / ave
        delz = (ave - zt) / ave
        if max(abs(delx), abs(dely), abs(delz)) <= _CARLSON_TOL:
            break
    e2 = delx * dely - delz * delz
    e3 = delx * dely * delz
    return (1.0 + (e2 / 24.0 - 0.1 - 3.0 * e3 / 44.0) * e2 + e3 / 14.0) / math.sqrt(ave)


def carlson_rd(x, y, z):
    """Carlson's integral R_D(x, y, z); x and y may not both vanish, z > 0."""
    c1 = 3.0 / 14.0
    c2 = 1.0 / 6.0
    c3 = 9.0 / 22.0
    c4 = 3.0 / 26.0
    c5 = 0.25 * c3
    c6 = 1.5 * c4
    xt, yt, zt = float(x), float(y), float(z)
    total = 0.0
    fac = 1.0
    while True:
        sx, sy, sz = math.sqrt(xt), math.sqrt(yt), math.sqrt(zt)
        alamb = sx * (sy + sz) + sy * sz
        total += fac / (sz * (zt + alamb))
        fac *= 0.25
        xt = 0.25 * (xt + alamb)
        yt = 0.25 * (yt + alamb)
        zt = 0.25 * (zt + alamb)
        ave = 0.2 * (xt + yt + 3.0 * zt)
        delx = (ave - xt) / ave
        dely = (ave - yt) / ave
        delz = (ave - zt) / ave
        if max(abs(delx), abs(dely), abs(delz)) <= _CARLSON_TOL:
            break
    ea = delx * dely
    eb = delz * delz
    ec = ea - eb
    ed = ea - 6.0 * eb
    ee = ed + ec + ec
    series = 1.0 + ed * (-c1 + c5 * ed - c6 * delz * ee)
    series += delz * (c2 * ee + delz * (-c3 * ec + delz * c4 * ea))
    return 3.0 * total + fac * series / (ave * math.sqrt(ave))


def _reduce_amplitude(phi):
    # phi = phi_r + m*pi with |phi_r| <= pi/2
    m = round(phi / math.pi)
    return phi - m * math.pi, m


def incomplete_F(phi, k):
    """
    Incomplete elliptic integral of the first kind F(phi, k), extended to all
    real phi by F(phi + pi, k) = F(phi, k) + 2 K(k).
    """
    k = as_modulus(k)
    phi = float(phi)
    if not np.isfinite(phi):
        raise EllipticDomainError(f"Amplitude must be finite, got phi={phi!r}.")
    phi_r, m = _reduce_amplitude(phi)
    s, c = math.sin(phi_r), math.cos(phi_r)
    value = 0.0
    if s != 0.0:
        value = s * carlson_rf(c * c, 1.0 - (k * s) ** 2, 1.0)
    if m:
        value += 2.0 * m * complete_K(k)
    return value


def incomplete_E(phi, k):
    """
    Incomplete elliptic integral of the second kind.

    E(phi, k) = integral from 0 to phi of sqrt(1 - k**2 sin(t)**2) dt, with the
    quasi-periodic extension E(phi + pi, k) = E(phi, k) + 2 E(k). Note that
    am(4K(k), k) = 2 pi, so E(am(4K, k), k) = 4 E(k).

    Parameters
    ----------
    phi : float
        Amplitude in radians, any finite value.
    k : float or EllipticModulus
        Elliptic modulus, 0 <= k < 1.

    Returns
    -------
    float
        E(phi, k).

    Example
    -------
    >>> abs(incomplete_E(2 * math.pi, 0.5) - 4 * complete_E(0.5)) < 1e-14
    True
    """
    k = as_modulus(k)
    phi = float(phi)
    if not np.isfinite(phi):
        raise EllipticDomainError(f"Amplitude must be finite, got phi={phi!r}.")
    phi_r, m = _reduce_amplitude(phi)
    s, c = math.sin(phi_r), math.cos(phi_r)
    value = 0.0
    if s != 0.0:
        q = 1.0 - (k * s) ** 2
        value = s * carlson_rf(c * c, q, 1.0)
        value -= (k * k / 3.0) * s**3 * carlson_rd(c * c, q, 1.0)
    if m:
        value += 2.0 * m * complete_E(k)
    return value


def jacobi(u, k):
    """
    Jacobi elliptic functions sn, cn, dn and the amplitude am.

    Descending Landen transformation: the AGM sequence (a_n, c_n) is built to
    machine precision, phi_N = 2**N a_N u, and the amplitude is recovered by
    phi_{n-1} = (phi_n + arcsin(c_n / a_n sin phi_n)) / 2.

    Parameters
    ----------
    u : float or array_like
        Argument(s).
    k : float or EllipticModulus
        Elliptic modulus, 0 <= k < 1.

    Returns
    -------
    JacobiTriple
        Fields are floats for scalar ``u`` and arrays otherwise.

    Example
    -------
    >>> t = jacobi(complete_K(0.6), 0.6)
    >>> round(t.sn, 12), round(t.dn, 12)
    (1.0, 0.8)
    """
    k = as_modulus(k)
    scalar = np.ndim(u) == 0
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise EllipticDomainError("Jacobi functions need a finite argument.")

    sequence = _agm_sequence(k)
    n = len(sequence) - 1
    phi = (2.0**n) * sequence[-1][0] * u
    for j in range(n, 0, -1):
        a_j, _, c_j = sequence[j]
        phi = 0.5 * (phi + np.arcsin(c_j / a_j * np.sin(phi)))

    sn = np.sin(phi)
    cn = np.cos(phi)
    dn = np.sqrt(1.0 - (k * sn) ** 2)
    if scalar:
        return JacobiTriple(float(sn), float(cn), float(dn), float(phi))
    return JacobiTriple(sn, cn, dn, phi)


def inverse_cn(x, k):
    """
    Inverse of cn on [0, 2K(k)].

    Arguments outside [-1, 1] by less than 1e-12 are clamped; anything
    further out raises EllipticDomainError.
    """
    x = float(x)
    if abs(x) > 1.0 + 1e-12 or not np.isfinite(x):
        raise EllipticDomainError(f"cn^-1 needs |x| <= 1, got x={x!r}.")
    x = min(1.0, max(-1.0, x))
    return incomplete_F(math.acos(x), k)


def appendixA_reduction(alpha, b1, a1, y):
    """
    Integral of 1/sqrt((t - alpha)((t - b1)**2 + a1**2)) from alpha to y.

    One real root alpha and the complex pair b1 +- i a1 reduce the integral to
    g cn^-1(cos phi, k) with

        A**2 = (b1 - alpha)**2 + a1**2,   g = 1/sqrt(A),
        k**2 = (A + b1 - alpha) / (2A),   cos phi = (A + alpha - y)/(A - alpha + y).

    Parameters
    ----------
    alpha : float
        Real root and lower limit.
    b1, a1 : float
        Real and imaginary parts of the complex root pair, a1 != 0.
    y : float
        Upper limit, y > alpha.

    Returns
    -------
    float
        Value of the integral.

    Raises
    ------
    EllipticDomainError
        If y <= alpha, a1 == 0, or cos phi leaves [-1, 1] by more than the
        clamp ``inverse_cn`` allows.
    """
    alpha, b1, a1, y = float(alpha), float(b1), float(a1), float(y)
    if not y > alpha:
        raise EllipticDomainError(f"Upper limit must exceed alpha, got y={y!r} <= {alpha!r}.")
    if a1 == 0.0:
        raise EllipticDomainError("Complex root pair needs a1 != 0.")
    A = math.hypot(b1 - alpha, a1)
    g = 1.0 / math.sqrt(A)
    k = math.sqrt((A + b1 - alpha) / (2.0 * A))
    return g * inverse_cn((A + alpha - y) / (A - alpha + y), k)
