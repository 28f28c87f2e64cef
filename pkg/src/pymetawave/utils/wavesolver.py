"""
wavesolver.py

Module Overview
---------------
Travelling waves q_n(t) = U(omega t + p n) of the driven lattice satisfy the
advance-delay equation

    omega^2 U'' + U - beta U^2 - lambda omega^2 [U''(z - p) + U''(z + p)]
        + gamma omega U' - Delta cos z = 0.

U is expanded in a truncated Fourier series on a domain of period L,

    U(z) = sum_{j=1..J} A_j cos((j-1) k z) + sum_{j=1..J} B_j sin(j k z),  k = 2 pi / L,

and the coefficients are found by collocation at 2J uniform points starting
at z = -L/2. Shifts by +-p are exact phase rotations of each mode, so the
linear part of the equation is diagonal per mode. The grid nodes are zeros of
sin(J k z), so B_J is pinned to zero and the Newton iteration is a
Gauss-Newton least-squares iteration on the remaining unknowns.

Branches of solutions are traced in gamma or Delta with natural continuation,
switching to pseudo-arclength continuation on the first failure so that folds
can be passed.

Classes
-------
ModelParams
FourierSolution
NewtonReport
BranchPoint
BifurcationBranch

Functions
---------
evaluate, shift_evaluate, residual, residual_at, newton_solve,
linear_response_guess, seed_from_orbit, continue_branch, solution_norm,
reflect, translate, resample, branch_table
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from pymetawave.utils.errors import (
    ConvergenceError,
    IncompatibleLatticeError,
    ResolutionError,
    ResonanceError,
    SingularJacobianError,
)

logger = logging.getLogger(__name__)

SINGULAR_RATIO = 1e-13
MIN_STEP = 1e-12
FOLD_RESOLUTION = 1e-6

CONTINUATION_PARAMETERS = {"gamma": "gamma", "delta": "Delta", "Delta": "Delta"}


@dataclass(frozen=True)
class ModelParams:
    """
    Dimensionless lattice and drive parameters.

    Attributes
    ----------
    beta : float
        Quadratic nonlinearity, beta > 0.
    gamma : float
        Loss coefficient. Negative values are admitted so that branches can be
        continued through gamma = 0.
    lam : float
        Coupling lambda, |lambda| < 1/2.
    omega : float
        Frame (drive) frequency, omega > 0.
    p : float
        Drive wavenumber, p != 0.
    Delta : float
        Drive amplitude.
    """

    beta: float = 1.0
    gamma: float = 0.0
    lam: float = 0.0
    omega: float = 0.5
    p: float = 2.0 * math.pi / 20
    Delta: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must satisfy beta > 0, got {self.beta!r}.")
        if not self.omega > 0:
            raise ValueError(f"omega must satisfy omega > 0, got {self.omega!r}.")
        if not abs(self.lam) < 0.5:
            raise ValueError(f"Coupling must satisfy |lambda| < 1/2, got lambda={self.lam!r}.")
        if self.p == 0:
            raise ValueError("Drive wavenumber must satisfy p != 0.")
        for name in ("gamma", "Delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite.")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_parameter(self, name, value):
        return self.replace(**{_parameter_field(name): float(value)})

    def get_parameter(self, name):
        return getattr(self, _parameter_field(name))

    def as_dict(self):
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "lambda": self.lam,
            "omega": self.omega,
            "p": self.p,
            "delta": self.Delta,
        }


def _parameter_field(name):
    try:
        return CONTINUATION_PARAMETERS[name]
    except KeyError:
        raise ValueError(f"Unknown continuation parameter {name!r}; use 'gamma' or 'delta'.") from None


@dataclass(frozen=True)
class FourierSolution:
    """
    Truncated Fourier series of a travelling-frame profile.

    Attributes
    ----------
    L : float
        Domain period in z.
    A : numpy.ndarray
        A[m] multiplies cos(m k z), m = 0 .. J-1; A[0] is the mean.
    B : numpy.ndarray
        B[m-1] multiplies sin(m k z), m = 1 .. J.
    """

    L: float
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 1 or A.shape != B.shape or len(A) < 1:
            raise ValueError("A and B must be 1-D arrays of equal length J >= 1.")
        if not self.L > 0:
            raise ValueError(f"Domain period must be positive, got L={self.L!r}.")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def J(self):
        return len(self.A)

    @property
    def ktilde(self):
        return 2.0 * math.pi / self.L

    @property
    def coefficients(self):
        return np.concatenate([self.A, self.B])

    @classmethod
    def zeros(cls, J, L):
        return cls(L=L, A=np.zeros(J), B=np.zeros(J))

    @classmethod
    def from_coefficients(cls, x, L):
        x = np.asarray(x, dtype=float)
        J = len(x) // 2
        return cls(L=L, A=x[:J].copy(), B=x[J:].copy())

    def is_even(self, tol=1e-12):
        scale = max(1.0, float(np.max(np.abs(self.A))))
        return bool(np.max(np.abs(self.B)) <= tol * scale)


def collocation_points(J, L):
    """2J uniform points in [-L/2, L/2), endpoint excluded."""
    return -0.5 * L + L * np.arange(2 * J) / (2 * J)


def _mode_basis(J, L, z, derivative=0):
    # columns: cos(m k z) for m = 0..J-1, then sin(m k z) for m = 1..J
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k = 2.0 * math.pi / L
    w_cos = k * np.arange(J)
    w_sin = k * np.arange(1, J + 1)
    shift = 0.5 * math.pi * derivative
    cos_part = w_cos**derivative * np.cos(np.outer(z, w_cos) + shift)
    sin_part = w_sin**derivative * np.sin(np.outer(z, w_sin) + shift)
    return np.hstack([cos_part, sin_part])


def evaluate(sol, z, derivative=0):
    """
    Series value or term-by-term derivative of order 0, 1 or 2.

    Example
    -------
    >>> sol = FourierSolution(2 * math.pi, [0.0, 1.0], [0.0, 0.0])
    >>> evaluate(sol, 0.0, derivative=2)
    -1.0
    """
    if derivative not in (0, 1, 2):
        raise ValueError(f"derivative must be 0, 1 or 2, got {derivative!r}.")
    value = _mode_basis(sol.J, sol.L, z, derivative) @ sol.coefficients
    return float(value[0]) if np.ndim(z) == 0 else value


def shift_evaluate(sol, z, shift, derivative=0):
    """Series at z + shift; each mode is rotated by its own phase m k shift."""
    return evaluate(sol, np.asarray(z, dtype=float) + shift, derivative)


def _mode_operator(J, L, params):
    # diagonal symbol of omega^2 d2 + 1 - lambda omega^2 (S_p + S_-p) d2
    w = (2.0 * math.pi / L) * np.arange(J + 1)
    om2 = params.omega**2
    return 1.0 - om2 * w * w + 2.0 * params.lam * om2 * w * w * np.cos(w * params.p), w


class _CollocationSystem:
    """Residual and Jacobian of the collocation equations at fixed parameters."""

    def __init__(self, J, L, params, z=None, drive=None):
        self.J = J
        self.L = L
        self.params = params
        self.z = collocation_points(J, L) if z is None else np.atleast_1d(np.asarray(z, dtype=float))
        symbol, w = _mode_operator(J, L, params)
        phase = np.outer(self.z, w)
        cosM, sinM = np.cos(phase), np.sin(phase)
        damping = params.gamma * params.omega * w
        self.basis = np.hstack([cosM[:, :J], sinM[:, 1:]])
        self.dbasis = np.hstack([-w[:J] * sinM[:, :J], w[1:] * cosM[:, 1:]])
        self.linear = np.hstack(
            [
                symbol[:J] * cosM[:, :J] - damping[:J] * sinM[:, :J],
                symbol[1:] * sinM[:, 1:] + damping[1:] * cosM[:, 1:],
            ]
        )
        if drive is None:
            self.forcing = params.Delta * np.cos(self.z)
        else:
            self.forcing = np.asarray(drive(self.z), dtype=float)

    def residual(self, x):
        U = self.basis @ x
        return self.linear @ x - self.params.beta * U * U - self.forcing

    def jacobian(self, x):
        U = self.basis @ x
        return self.linear - 2.0 * self.params.beta * U[:, None] * self.basis

    def parameter_derivative(self, x, name):
        if _parameter_field(name) == "gamma":
            return self.params.omega * (self.dbasis @ x)
        return -np.cos(self.z)


def residual(sol, params, drive=None):
    """
    Collocation residual at the 2J points of ``collocation_points``.

    Parameters
    ----------
    sol : FourierSolution
    params : ModelParams
    drive : callable, optional
        h(z); defaults to params.Delta * cos(z).

    Returns
    -------
    numpy.ndarray
        2J residual values.
    """
    return _CollocationSystem(sol.J, sol.L, params, drive=drive).residual(sol.coefficients)


def residual_at(sol, params, z, drive=None):
    """Residual of the advance-delay equation at arbitrary points z."""
    return _CollocationSystem(sol.J, sol.L, params, z=z, drive=drive).residual(sol.coefficients)


def solution_norm(sol):
    """N = sqrt(int_0^L U^2 dz) by Parseval."""
    power = sol.A[0] ** 2 + 0.5 * np.sum(sol.A[1:] ** 2) + 0.5 * np.sum(sol.B**2)
    return math.sqrt(sol.L * power)


def reflect(sol):
    """U(z) -> U(-z)."""
    return FourierSolution(sol.L, sol.A.copy(), -sol.B)


def translate(sol, shift):
    """
    U(z) -> U(z + shift) by rotating each mode.

    The sine mode m = J has no cosine partner in the basis; its cosine
    component after rotation is dropped. Solutions from ``newton_solve`` have
    B_J = 0, for which the rotation is exact.
    """
    J = sol.J
    w = sol.ktilde * np.arange(1, J + 1)
    c, s = np.cos(w * shift), np.sin(w * shift)
    A = sol.A.copy()
    B = sol.B.copy()
    A[1:] = sol.A[1:] * c[:-1] + sol.B[:-1] * s[:-1]
    B[:-1] = sol.B[:-1] * c[:-1] - sol.A[1:] * s[:-1]
    B[-1] = sol.B[-1] * c[-1]
    if sol.B[-1] * s[-1] != 0.0:
        logger.debug("Translation dropped a cosine Nyquist component %.3e.", sol.B[-1] * s[-1])
    return FourierSolution(sol.L, A, B)


def resample(sol, J):
    """Change the truncation to J modes by zero padding or truncation."""
    J = int(J)
    if J < 1:
        raise ResolutionError(f"Truncation must keep at least one mode, got J={J}.")
    A = np.zeros(J)
    B = np.zeros(J)
    n = min(J, sol.J)
    A[:n] = sol.A[:n]
    B[:n] = sol.B[:n]
    return FourierSolution(sol.L, A, B)


def drive_harmonic(L, J=None):
    """
    Mode index u of the drive cos z on a domain of period L = 2 pi u.

    Raises
    ------
    IncompatibleLatticeError
        If L is not an integer multiple of 2 pi, or the mode exceeds J - 1.
    """
    ratio = L / (2.0 * math.pi)
    u = int(round(ratio))
    if u < 1 or abs(ratio - u) > 1e-9 * max(1.0, ratio):
        raise IncompatibleLatticeError(
            f"Domain period L={L!r} is not commensurate with the drive: L must equal 2 pi u."
        )
    if J is not None and u > J - 1:
        raise ResolutionError(f"Drive harmonic u={u} is not resolved with J={J} modes.")
    return u


@dataclass(frozen=True)
class NewtonReport:
    iterations: int
    residual: float
    even: bool


def _active_mask(J, even):
    mask = np.ones(2 * J, dtype=bool)
    mask[-1] = False
    if even:
        mask[J:] = False
    return mask


def _check_singular(jacobian):
    s = np.linalg.svd(jacobian, compute_uv=False)
    if s[0] == 0.0 or s[-1] < SINGULAR_RATIO * s[0]:
        raise SingularJacobianError(
            f"Collocation Jacobian is numerically singular (condition {s[0] / max(s[-1], 1e-300):.2e})."
        )


def _gauss_newton(system, x, mask, tol, max_iter):
    # returns (x, iterations, residual max-norm)
    x = x.copy()
    x[~mask] = 0.0
    for iteration in range(max_iter + 1):
        R = system.residual(x)
        norm = float(np.max(np.abs(R)))
        logger.debug("Newton iteration %d: residual %.3e", iteration, norm)
        if not np.isfinite(norm):
            raise ConvergenceError("Newton iteration diverged (non-finite residual).")
        if norm < tol:
            return x, iteration, norm
        if iteration == max_iter:
            break
        jac = system.jacobian(x)[:, mask]
        _check_singular(jac)
        step, *_ = np.linalg.lstsq(jac, -R, rcond=None)
        x[mask] += step
    raise ConvergenceError(
        f"Newton iteration did not reach tol={tol:.1e} in {max_iter} iterations (residual {norm:.3e})."
    )


def newton_solve(initial, params, tol=1e-10, max_iter=50, full_output=False, drive=None):
    """
    Newton (Gauss-Newton) solution of the collocation equations.

    Parameters
    ----------
    initial : FourierSolution
        Starting guess; its L and J fix the discretization.
    params : ModelParams
    tol : float, optional
        Residual max-norm at which the iteration stops. Default 1e-10.
    max_iter : int, optional
        Default 50.
    full_output : bool, optional
        Also return a NewtonReport.
    drive : callable, optional
        h(z); defaults to params.Delta * cos(z).

    Returns
    -------
    FourierSolution or (FourierSolution, NewtonReport)

    Raises
    ------
    ConvergenceError
        If the residual stays above tol after max_iter iterations.
    SingularJacobianError
        If the Jacobian is numerically singular (near a fold).
    IncompatibleLatticeError
        If Delta != 0 and L is not a multiple of 2 pi.

    Notes
    -----
    With gamma = 0 and an even starting guess the iteration stays in the
    cosine subspace. With gamma = Delta = 0 it is forced there, which removes
    the translation null vector.
    """
    if params.Delta != 0 and drive is None:
        drive_harmonic(initial.L, initial.J)
    even = params.gamma == 0 and initial.is_even()
    if params.gamma == 0 and params.Delta == 0 and drive is None and not even:
        logger.warning("Unforced conservative problem: discarding sine coefficients of the guess.")
        initial = FourierSolution(initial.L, initial.A, np.zeros(initial.J))
        even = True
    system = _CollocationSystem(initial.J, initial.L, params, drive=drive)
    mask = _active_mask(initial.J, even)
    x, iterations, norm = _gauss_newton(system, initial.coefficients, mask, tol, max_iter)
    sol = FourierSolution.from_coefficients(x, initial.L)
    if full_output:
        return sol, NewtonReport(iterations=iterations, residual=norm, even=even)
    return sol


def linear_response_guess(params, J=50, u=1):
    """
    Single-mode solution of the linearized equation.

    With D = 1 - omega^2 + 2 lambda omega^2 cos p, the cos z and sin z
    coefficients solve [D, gamma omega; -gamma omega, D] [C; S] = [Delta; 0].

    Returns
    -------
    FourierSolution
        L = 2 pi u, with C at mode u of A and S at mode u of B.

    Raises
    ------
    ResonanceError
        If D^2 + gamma^2 omega^2 < 1e-20.
    """
    L = 2.0 * math.pi * u
    drive_harmonic(L, J)
    om = params.omega
    D = 1.0 - om * om + 2.0 * params.lam * om * om * math.cos(params.p)
    g = params.gamma * om
    det = D * D + g * g
    if det < 1e-20:
        raise ResonanceError(f"Linear response is resonant: D^2 + (gamma omega)^2 = {det:.3e}.")
    A = np.zeros(J)
    B = np.zeros(J)
    A[u] = params.Delta * D / det
    B[u - 1] = params.Delta * g / det
    return FourierSolution(L, A, B)


def seed_from_orbit(orbit, J=50, u=1, shift=0.0):
    """
    Fourier coefficients of U0(z / omega) on L = 2 pi u, omega = 2 pi u / Tbar.

    The coefficients are read off the real FFT of the uniform orbit samples;
    mode m of the orbit over one period is mode m of the frame series.
    """
    n = orbit.n_samples
    if J > n // 2:
        raise ResolutionError(f"J={J} modes need at least {2 * J} orbit samples, got {n}.")
    X = np.fft.rfft(orbit.samples)
    A = np.zeros(J)
    B = np.zeros(J)
    A[0] = X[0].real / n
    A[1:] = 2.0 * X[1:J].real / n
    B[:-1] = -2.0 * X[1:J].imag / n
    sol = FourierSolution(2.0 * math.pi * u, A, B)
    return translate(sol, shift) if shift else sol


def frame_frequency(orbit, u=1):
    return 2.0 * math.pi * u / orbit.period


@dataclass
class BranchPoint:
    param: float
    solution: FourierSolution = field(repr=False)
    norm: float
    stable: object = None
    fold: bool = False
    iterations: int = 0


@dataclass
class BifurcationBranch:
    """
    Ordered continuation points.

    Attributes
    ----------
    parameter_name : str
        'gamma' or 'delta'.
    params : ModelParams
        Parameters at the start; the continued one varies along the branch.
    points : list of BranchPoint
    folds : list of float
        Parameter values of the bisected turning points.
    status : str
        'complete', 'closed-loop', 'left-range', 'max-steps' or 'step-underflow'.
    """

    parameter_name: str
    params: ModelParams
    points: list = field(default_factory=list)
    folds: list = field(default_factory=list)
    status: str = "complete"

    @property
    def param_values(self):
        return np.array([pt.param for pt in self.points])

    @property
    def norms(self):
        return np.array([pt.norm for pt in self.points])

    def params_at(self, index):
        return self.params.with_parameter(self.parameter_name, self.points[index].param)

    def __len__(self):
        return len(self.points)


def branch_table(branch):
    """DataFrame with columns param, norm, stable, fold_flag."""
    return pd.DataFrame(
        {
            "param": branch.param_values,
            "norm": branch.norms,
            "stable": [pt.stable for pt in branch.points],
            "fold_flag": [bool(pt.fold) for pt in branch.points],
        }
    )


class _Continuation:
    """
    State of a branch trace in the scaled coordinates y = (x_active, mu / sigma).
    """

    def __init__(self, start, params, name, sigma, tol, max_iter):
        self.J = start.J
        self.L = start.L
        self.params = params
        self.name = name
        self.sigma = sigma
        self.tol = tol
        self.max_iter = max_iter
        even = _parameter_field(name) == "Delta" and params.gamma == 0 and start.is_even()
        self.mask = _active_mask(self.J, even)

    def system(self, mu):
        return _CollocationSystem(self.J, self.L, self.params.with_parameter(self.name, mu))

    def unpack(self, y):
        x = np.zeros(2 * self.J)
        x[self.mask] = y[:-1]
        return x, y[-1] * self.sigma

    def pack(self, x, mu):
        return np.append(x[self.mask], mu / self.sigma)

    def extended_jacobian(self, y):
        x, mu = self.unpack(y)
        system = self.system(mu)
        jac = system.jacobian(x)[:, self.mask]
        dmu = self.sigma * system.parameter_derivative(x, self.name)
        return system.residual(x), np.column_stack([jac, dmu])

    def tangent(self, y, reference):
        _, G = self.extended_jacobian(y)
        _, _, vt = np.linalg.svd(G)
        t = vt[-1]
        if np.dot(t, reference) < 0:
            t = -t
        return t / np.linalg.norm(t)

    def natural(self, x_guess, mu):
        system = self.system(mu)
        x, iterations, _ = _gauss_newton(system, x_guess, self.mask, self.tol, self.max_iter)
        return self.pack(x, mu), iterations

    def arclength(self, y_base, t, ds):
        # Gauss-Newton on [R(y); t.(y - y_pred)] = 0
        y = y_base + ds * t
        y_pred = y.copy()
        for iteration in range(self.max_iter + 1):
            R, G = self.extended_jacobian(y)
            constraint = float(np.dot(t, y - y_pred))
            norm = float(np.max(np.abs(R)))
            if not np.isfinite(norm):
                raise ConvergenceError("Arclength corrector diverged.")
            if norm < self.tol and abs(constraint) < self.tol:
                return y, iteration
            if iteration == self.max_iter:
                break
            system_matrix = np.vstack([G, t])
            _check_singular(system_matrix)
            step, *_ = np.linalg.lstsq(system_matrix, -np.append(R, constraint), rcond=None)
            y = y + step
        raise ConvergenceError(f"Arclength corrector did not converge (residual {norm:.3e}).")

    def point(self, y, iterations, fold=False):
        x, mu = self.unpack(y)
        sol = FourierSolution.from_coefficients(x, self.L)
        return BranchPoint(param=mu, solution=sol, norm=solution_norm(sol), fold=fold, iterations=iterations)


def _bisect_fold(state, y_base, t_base, ds):
    # the mu component of the tangent changes sign between arclength 0 and ds
    sign_lo = np.sign(t_base[-1])
    s_lo, s_hi = 0.0, ds
    y_mid = y_base
    while s_hi - s_lo > 1e-5 * ds:
        s_mid = 0.5 * (s_lo + s_hi)
        y_mid, _ = state.arclength(y_base, t_base, s_mid)
        if np.sign(state.tangent(y_mid, t_base)[-1]) == sign_lo:
            s_lo = s_mid
        else:
            s_hi = s_mid
    return y_mid


def continue_branch(
    start,
    params,
    parameter_name="gamma",
    param_range=(0.0, 0.01),
    step=0.05,
    param_scale=1e-3,
    max_steps=2000,
    tol=1e-10,
    max_iter=20,
):
    """
    Trace a solution branch in gamma or Delta.

    Parameters
    ----------
    start : FourierSolution
        Converged solution at ``param_range[0]``.
    params : ModelParams
        Model parameters; the continued one is overwritten along the branch.
    parameter_name : str, optional
        'gamma' or 'delta'. Default 'gamma'.
    param_range : tuple of float, optional
        (start, end). The trace stops when the parameter passes ``end``, leaves
        the mirror window below ``start``, closes a loop or runs out of steps.
    step : float, optional
        Initial (and maximal) step ds in the scaled coordinates. Default 0.05.
    param_scale : float, optional
        sigma: the parameter enters the arclength as mu / sigma. Default 1e-3.
    max_steps : int, optional
        Default 2000.
    tol, max_iter : optional
        Corrector tolerance and iteration cap.

    Returns
    -------
    BifurcationBranch
        Folds are bisected to 1e-6 in the parameter and appear both in
        ``folds`` and as points with ``fold=True``. A step underflow returns the
        partial branch with status 'step-underflow'.
    """
    mu0, mu_end = float(param_range[0]), float(param_range[1])
    state = _Continuation(start, params, parameter_name, param_scale, tol, max_iter)
    y0, iterations = state.natural(start.coefficients, mu0)
    branch = BifurcationBranch(parameter_name=parameter_name, params=params.with_parameter(parameter_name, mu0))
    branch.points.append(state.point(y0, iterations))
    if mu_end == mu0:
        return branch

    direction = math.copysign(1.0, mu_end - mu0)
    window = abs(mu_end - mu0)
    ds_max = float(step)
    ds = ds_max
    initial = np.zeros_like(y0)
    initial[-1] = direction
    # loop closure is tested against the hyperplane through y0 normal to t0
    t0 = state.tangent(y0, initial)
    y_prev, y = None, y0
    t = None
    mode = "natural"
    left_start = False

    for _ in range(max_steps):
        if ds < MIN_STEP:
            branch.status = "step-underflow"
            logger.info("Continuation step underflow at %s=%.6g.", parameter_name, y[-1] * param_scale)
            return branch
        mu = y[-1] * param_scale
        passed_end = False
        try:
            if mode == "natural":
                target = mu + direction * ds * param_scale
                if (target - mu_end) * direction >= 0:
                    target, passed_end = mu_end, True
                x_now, _ = state.unpack(y)
                x_guess = x_now
                if y_prev is not None:
                    x_old, mu_old = state.unpack(y_prev)
                    x_guess = x_now + (x_now - x_old) * (target - mu) / (mu - mu_old)
                y_new, iterations = state.natural(x_guess, target)
            else:
                y_new, iterations = state.arclength(y, t, ds)
        except ConvergenceError as exc:
            if mode == "natural":
                mode = "arclength"
                reference = y - y_prev if y_prev is not None else t0
                t = state.tangent(y, reference)
                logger.info("Switching to arclength continuation at %s=%.6g (%s).", parameter_name, mu, exc)
            else:
                ds *= 0.5
                logger.debug("Step rejected, ds -> %.3e (%s)", ds, exc)
            continue

        if mode == "arclength":
            t_new = state.tangent(y_new, t)
            if t[-1] != 0.0 and np.sign(t_new[-1]) != np.sign(t[-1]):
                fold_point = state.point(_bisect_fold(state, y, t, ds), 0, fold=True)
                branch.points.append(fold_point)
                branch.folds.append(fold_point.param)
                logger.info("Fold at %s=%.8g.", parameter_name, fold_point.param)
            t = t_new

        point = state.point(y_new, iterations)
        branch.points.append(point)
        logger.debug("Accepted %s=%.8g norm=%.8g ds=%.3e", parameter_name, point.param, point.norm, ds)

        if passed_end or (point.param - mu_end) * direction > 0:
            return branch
        if (mu0 - point.param) * direction > window:
            branch.status = "left-range"
            return branch
        if np.linalg.norm(y_new - y0) > 5.0 * ds_max:
            left_start = True
        elif left_start and np.dot(t0, y - y0) < 0.0 <= np.dot(t0, y_new - y0):
            branch.status = "closed-loop"
            logger.info("Branch closed after %d points.", len(branch.points))
            return branch

        y_prev, y = y, y_new
        if iterations <= 3:
            ds = min(1.3 * ds, ds_max)

    branch.status = "max-steps"
    return branch
