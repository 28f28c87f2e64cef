"""
floquet.py

Module Overview
---------------
Linear stability of travelling waves on a ring of N sites. Perturbations
(u_n, v_n) of q_n(t) = U(omega t + p n) obey

    u_n' = v_n,
    v_n' - lambda (v_{n-1}' + v_{n+1}') = -gamma v_n - u_n + 2 beta U_n(t) u_n,

a linear system with period T = L / omega. The monodromy matrix is
integrated with fixed-step RK4 from the 2N unit vectors; its eigenvalues are
the Floquet multipliers. A wave is unstable iff some multiplier lies outside
the unit circle by more than a small tolerance.

The trace of the linearized vector field is the constant
-gamma trace(M^-1), so det of the monodromy matrix is exp(-gamma T trace(M^-1))
(Abel-Liouville). ``liouville_residual`` measures the mismatch.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pymetawave.utils.errors import (
    ConvergenceError,
    IncompatibleLatticeError,
    MetawaveError,
    ResolutionError,
)
from pymetawave.utils.wavesolver import evaluate, newton_solve, translate

logger = logging.getLogger(__name__)

STABILITY_TOLERANCE = 1e-6
REAL_AXIS_TOLERANCE = 1e-3


@dataclass(frozen=True)
class LatticeCoupling:
    """
    Periodic tridiagonal mass matrix of the coupled ring and its inverse.

    Attributes
    ----------
    N : int
    lam : float
    mass_matrix : numpy.ndarray
        1 on the diagonal, -lambda on the off-diagonals and periodic corners.
    mass_inverse : numpy.ndarray
    """

    N: int
    lam: float
    mass_matrix: np.ndarray = field(repr=False)
    mass_inverse: np.ndarray = field(repr=False)

    @property
    def trace_inverse(self):
        return float(np.trace(self.mass_inverse))


def build_mass(N, lam):
    """
    Assemble the coupling for N >= 3 sites and |lambda| < 1/2.

    Example
    -------
    >>> build_mass(3, 0.1).mass_matrix[0]
    array([ 1. , -0.1, -0.1])
    """
    N = int(N)
    if N < 3:
        raise ValueError(f"A ring needs at least 3 sites, got N={N}.")
    if not abs(lam) < 0.5:
        raise ValueError(f"Coupling must satisfy |lambda| < 1/2, got lambda={lam!r}.")
    eye = np.eye(N)
    mass = eye - lam * (np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1))
    inverse = np.linalg.solve(mass, eye)
    return LatticeCoupling(N=N, lam=float(lam), mass_matrix=mass, mass_inverse=inverse)


def check_compatibility(params, N, L):
    """
    Require N p = 0 mod L so that q_{n+N} = q_n for the travelling wave (which
    also makes the drive cos(omega t + p n) N-periodic, L being a multiple of 2 pi).

    Raises
    ------
    IncompatibleLatticeError
    """
    for period in (L, 2.0 * math.pi) if params.Delta != 0 else (L,):
        turns = N * params.p / period
        if abs(turns - round(turns)) > 1e-9 * max(1.0, abs(turns)):
            raise IncompatibleLatticeError(
                f"N p = {N * params.p!r} is not a multiple of {period!r}; the travelling wave "
                "does not fit the periodic lattice."
            )


@dataclass(frozen=True)
class StabilityVerdict:
    """
    Attributes
    ----------
    stable : bool
    max_modulus : float
    n_unstable : int
        Multipliers with modulus above 1 + tol.
    kind : str
        'stable', 'period-doubling' (dominant multiplier real and negative),
        'real-positive' or 'complex'.
    """

    stable: bool
    max_modulus: float
    n_unstable: int
    kind: str

    def as_dict(self):
        return {
            "max_modulus": self.max_modulus,
            "stable": self.stable,
            "type": self.kind,
            "n_unstable": self.n_unstable,
        }


@dataclass
class MonodromyResult:
    """
    Attributes
    ----------
    matrix : numpy.ndarray
        2N x 2N monodromy matrix.
    multipliers : numpy.ndarray
        Its 2N complex eigenvalues.
    max_modulus : float
    stable : bool
    tolerance : float
    period : float
        Integration period T = L / omega.
    steps : int
        RK4 steps per period.
    verdict : StabilityVerdict
    """

    matrix: np.ndarray = field(repr=False)
    multipliers: np.ndarray = field(repr=False)
    max_modulus: float
    stable: bool
    tolerance: float
    period: float
    steps: int
    verdict: StabilityVerdict = None


def classify(result, tol=STABILITY_TOLERANCE):
    """
    Stability verdict from a MonodromyResult or an array of multipliers.
    """
    multipliers = result.multipliers if isinstance(result, MonodromyResult) else np.asarray(result)
    moduli = np.abs(multipliers)
    dominant = multipliers[int(np.argmax(moduli))]
    max_modulus = float(np.max(moduli))
    n_unstable = int(np.sum(moduli > 1.0 + tol))
    if n_unstable == 0:
        kind = "stable"
    elif abs(dominant.imag) < REAL_AXIS_TOLERANCE:
        kind = "period-doubling" if dominant.real < 0 else "real-positive"
    else:
        kind = "complex"
    return StabilityVerdict(stable=n_unstable == 0, max_modulus=max_modulus, n_unstable=n_unstable, kind=kind)


def _site_profiles(sol, params, N, period, steps):
    # U_n at the RK4 stage times t = j h / 2, j = 0 .. 2 steps
    times = 0.5 * (period / steps) * np.arange(2 * steps + 1)
    profiles = np.empty((len(times), N))
    for n in range(N):
        profiles[:, n] = evaluate(sol, params.omega * times + n * params.p)
    return profiles


def _integrate_monodromy(sol, params, coupling, steps):
    N = coupling.N
    period = sol.L / params.omega
    h = period / steps
    profiles = _site_profiles(sol, params, N, period, steps)
    Minv = coupling.mass_inverse
    gamma, two_beta = params.gamma, 2.0 * params.beta

    def rhs(Y, U):
        Xu, Xv = Y[:N], Y[N:]
        force = -gamma * Xv - Xu + two_beta * U[:, None] * Xu
        return np.vstack([Xv, Minv @ force])

    Y = np.eye(2 * N)
    for j in range(steps):
        U0, Uh, U1 = profiles[2 * j], profiles[2 * j + 1], profiles[2 * j + 2]
        k1 = rhs(Y, U0)
        k2 = rhs(Y + 0.5 * h * k1, Uh)
        k3 = rhs(Y + 0.5 * h * k2, Uh)
        k4 = rhs(Y + h * k3, U1)
        Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y, period


def monodromy(
    sol,
    params,
    N=20,
    steps_per_period=4096,
    tol=STABILITY_TOLERANCE,
    check_resolution=True,
    coupling=None,
):
    """
    Monodromy matrix and Floquet multipliers of a travelling wave.

    Parameters
    ----------
    sol : FourierSolution
        Converged travelling-frame solution.
    params : ModelParams
    N : int, optional
        Lattice sites. Default 20.
    steps_per_period : int, optional
        RK4 steps over T = L / omega. Default 4096.
    tol : float, optional
        Classification slack. Default 1e-6.
    check_resolution : bool, optional
        Repeat with half the steps and raise if max |chi| moves by more than
        1e-6. Default True.
    coupling : LatticeCoupling, optional
        Reused when given.

    Returns
    -------
    MonodromyResult

    Raises
    ------
    IncompatibleLatticeError
        If N p is not a multiple of L.
    ResolutionError
        If the step-halving check fails.
    """
    check_compatibility(params, N, sol.L)
    if coupling is None or coupling.N != N or coupling.lam != params.lam:
        coupling = build_mass(N, params.lam)
    matrix, period = _integrate_monodromy(sol, params, coupling, int(steps_per_period))
    multipliers = np.linalg.eigvals(matrix)
    verdict = classify(multipliers, tol)
    if check_resolution:
        coarse, _ = _integrate_monodromy(sol, params, coupling, int(steps_per_period) // 2)
        change = abs(float(np.max(np.abs(np.linalg.eigvals(coarse)))) - verdict.max_modulus)
        if not change <= 1e-6:
            raise ResolutionError(
                f"Halving the RK4 step changes max|chi| by {change:.2e}; increase steps_per_period."
            )
    return MonodromyResult(
        matrix=matrix,
        multipliers=multipliers,
        max_modulus=verdict.max_modulus,
        stable=verdict.stable,
        tolerance=tol,
        period=period,
        steps=int(steps_per_period),
        verdict=verdict,
    )


def liouville_residual(result, params, coupling):
    """
    Relative mismatch |det(M) / exp(-gamma T trace(M^-1)) - 1|, computed
    from log-determinants so that strongly damped cases do not underflow.
    """
    sign, logdet = np.linalg.slogdet(result.matrix)
    expected = -params.gamma * result.period * coupling.trace_inverse
    if sign <= 0:
        return math.inf
    return abs(math.expm1(logdet - expected))


def _evaluate_point(args):
    sol, params, N, steps, tol, check = args
    try:
        return monodromy(sol, params, N, steps, tol, check_resolution=check).verdict
    except MetawaveError as exc:
        logger.warning("Stability evaluation failed: %s", exc)
        return None


def stability_along_branch(
    branch, params=None, N=20, steps_per_period=4096, tol=STABILITY_TOLERANCE, threads=1, check_resolution=True
):
    """
    Fill the ``stable`` flag of every branch point.

    Errors at individual points are logged and leave the flag as None.
    Points are evaluated in a thread pool of ``threads`` workers; results are
    collected in branch order.
    """
    base = branch.params if params is None else params
    jobs = [
        (pt.solution, base.with_parameter(branch.parameter_name, pt.param), N, steps_per_period, tol, check_resolution)
        for pt in branch.points
    ]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as executor:
        verdicts = list(executor.map(_evaluate_point, jobs))
    for pt, verdict in zip(branch.points, verdicts):
        pt.stable = None if verdict is None else verdict.stable
    return branch


def stability_segments(branch):
    """Contiguous runs of equal verdicts as (param_start, param_end, stable)."""
    segments = []
    for pt in branch.points:
        if segments and segments[-1][2] == pt.stable:
            segments[-1][1] = pt.param
        else:
            segments.append([pt.param, pt.param, pt.stable])
    return [tuple(s) for s in segments]


_SWEEP_FIELDS = {"delta": "Delta", "Delta": "Delta", "gamma": "gamma", "lambda": "lam", "lam": "lam"}


def multiplier_sweep(sol, params, name, values, N=20, steps_per_period=4096, threads=1, tol=1e-10, check_resolution=True):
    """
    Multiplier clouds along a parameter sweep.

    The wave is re-solved at each value by natural continuation from the
    previous one; the monodromy computations run in a thread pool.

    Returns
    -------
    list of tuple
        (value, FourierSolution, MonodromyResult) in input order.
    """
    try:
        key = _SWEEP_FIELDS[name]
    except KeyError:
        raise ValueError(f"Cannot sweep parameter {name!r}.") from None
    solutions = []
    current = sol
    for value in values:
        current = newton_solve(current, params.replace(**{key: float(value)}), tol=tol)
        solutions.append((float(value), current))

    def job(item):
        value, solution = item
        return monodromy(solution, params.replace(**{key: value}), N, steps_per_period, check_resolution=check_resolution)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as executor:
        results = list(executor.map(job, solutions))
    return [(value, solution, result) for (value, solution), result in zip(solutions, results)]


@dataclass(frozen=True)
class InstabilityOnset:
    Delta: float
    verdict: StabilityVerdict
    multipliers: np.ndarray = field(repr=False)
    solution: object = field(repr=False, default=None)


def _stable_phase(sol, params, N, steps, check):
    # of the two even phases, keep the one whose multipliers stay on the unit circle
    candidates = [sol, translate(sol, 0.5 * sol.L)]
    best = None
    for candidate in candidates:
        try:
            solved = newton_solve(candidate, params)
        except ConvergenceError:
            continue
        verdict = monodromy(solved, params, N, steps, check_resolution=check).verdict
        if verdict.stable:
            return solved
        if best is None or verdict.max_modulus < best[1]:
            best = (solved, verdict.max_modulus)
    if best is None:
        raise ConvergenceError("Neither phase of the seed converges at the first sweep value.")
    return best[0]


def first_instability(sol, params, deltas, N=20, steps_per_period=4096, tol=STABILITY_TOLERANCE, check_resolution=True):
    """
    First unstable verdict along an increasing sweep of Delta.

    At the first value the seed and its half-period translate are both
    solved and the phase that is stable (or least unstable) is followed; the
    sweep then proceeds by natural continuation.

    Returns
    -------
    InstabilityOnset or None
        None if every value in ``deltas`` is stable or the branch ends.
    """
    deltas = [float(d) for d in deltas]
    current = _stable_phase(sol, params.replace(Delta=deltas[0]), N, steps_per_period, check_resolution)
    for i, delta in enumerate(deltas):
        at = params.replace(Delta=delta)
        if i > 0:
            try:
                current = newton_solve(current, at)
            except ConvergenceError as exc:
                logger.info("Delta sweep stopped at %.6g: %s", delta, exc)
                return None
        result = monodromy(current, at, N, steps_per_period, tol, check_resolution)
        logger.debug("Delta=%.6g max|chi|=%.9f", delta, result.max_modulus)
        if not result.stable:
            return InstabilityOnset(Delta=delta, verdict=result.verdict, multipliers=result.multipliers, solution=current)
    return None


@dataclass(frozen=True)
class StabilityChange:
    gamma_low: float
    gamma_high: float
    stable_low: bool
    stable_high: bool

    @property
    def width(self):
        return abs(self.gamma_high - self.gamma_low)


def locate_stability_change(sol, params, gammas, N=20, resolution=1e-3, steps_per_period=4096, check_resolution=True):
    """
    Bracket the first change of verdict along a gamma walk and bisect it.

    Parameters
    ----------
    sol : FourierSolution
        Solution converged at gammas[0].
    params : ModelParams
    gammas : sequence of float
        Walk, in either direction; consecutive solutions are obtained by
        natural continuation.
    resolution : float, optional
        Width of the final bracket. Default 1e-3.

    Returns
    -------
    StabilityChange or None
    """
    gammas = [float(g) for g in gammas]

    def verdict_at(guess, gamma):
        at = params.replace(gamma=gamma)
        solved = newton_solve(guess, at)
        return solved, monodromy(solved, at, N, steps_per_period, check_resolution=check_resolution).stable

    try:
        lo_sol, lo_stable = verdict_at(sol, gammas[0])
    except ConvergenceError as exc:
        logger.info("No solution at gamma=%.6g: %s", gammas[0], exc)
        return None
    lo_gamma = gammas[0]
    for gamma in gammas[1:]:
        try:
            hi_sol, hi_stable = verdict_at(lo_sol, gamma)
        except ConvergenceError as exc:
            logger.info("gamma walk ended at %.6g: %s", gamma, exc)
            return None
        if hi_stable != lo_stable:
            hi_gamma = gamma
            while abs(hi_gamma - lo_gamma) > resolution:
                mid = 0.5 * (lo_gamma + hi_gamma)
                mid_sol, mid_stable = verdict_at(lo_sol, mid)
                if mid_stable == lo_stable:
                    lo_gamma, lo_sol = mid, mid_sol
                else:
                    hi_gamma = mid
            return StabilityChange(lo_gamma, hi_gamma, lo_stable, hi_stable)
        lo_gamma, lo_sol, lo_stable = gamma, hi_sol, hi_stable
    return None
