"""
lattice.py

Module Overview
---------------
Direct integration of the driven lattice

    q_n'' - lambda (q_{n-1}'' + q_{n+1}'') + gamma q_n' + q_n - beta q_n^2
        = Delta cos(omega t + p n),   q_{n+N} = q_n,

with fixed-step RK4, the same scheme the monodromy computation uses. Runs
stop at the first step where max |q_n| exceeds the blow-up threshold; the
blow-up time and site are recorded on the returned field.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from pymetawave.utils.errors import ResolutionError
from pymetawave.utils.floquet import build_mass, check_compatibility
from pymetawave.utils.wavesolver import evaluate

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e6


@dataclass
class LatticeState:
    t: float
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise ValueError("q and qdot must be 1-D arrays of equal length.")

    @property
    def N(self):
        return len(self.q)

    def copy(self):
        return LatticeState(self.t, self.q.copy(), self.qdot.copy())


@dataclass
class SpaceTimeField:
    """
    Sampled lattice history.

    Attributes
    ----------
    times : numpy.ndarray
    frames : numpy.ndarray
        q snapshots, shape (len(times), N).
    dt : float
    blowup : tuple or None
        (time, site) of the first step with max |q| above the threshold.
    final_state : LatticeState
    """

    times: np.ndarray
    frames: np.ndarray
    dt: float
    blowup: tuple = None
    final_state: LatticeState = field(default=None, repr=False)

    @property
    def N(self):
        return self.frames.shape[1]


def seed_from_wave(sol, params, N):
    """
    Travelling-wave initial data q_n = U(n p), qdot_n = omega U'(n p).

    Raises
    ------
    IncompatibleLatticeError
        If N p is not a multiple of the wave period.
    """
    check_compatibility(params, N, sol.L)
    z = params.p * np.arange(N)
    return LatticeState(
        t=0.0,
        q=np.atleast_1d(evaluate(sol, z)),
        qdot=params.omega * np.atleast_1d(evaluate(sol, z, derivative=1)),
    )


def _acceleration(q, v, t, params, Minv, phases):
    force = -params.gamma * v - q + params.beta * q * q + params.Delta * np.cos(params.omega * t + phases)
    return Minv @ force


def _rk4(q, v, t, dt, params, Minv, phases):
    a1 = _acceleration(q, v, t, params, Minv, phases)
    q2, v2 = q + 0.5 * dt * v, v + 0.5 * dt * a1
    a2 = _acceleration(q2, v2, t + 0.5 * dt, params, Minv, phases)
    q3, v3 = q + 0.5 * dt * v2, v + 0.5 * dt * a2
    a3 = _acceleration(q3, v3, t + 0.5 * dt, params, Minv, phases)
    q4, v4 = q + dt * v3, v + dt * a3
    a4 = _acceleration(q4, v4, t + dt, params, Minv, phases)
    q_new = q + (dt / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return q_new, v_new


def step(state, params, coupling, dt):
    """One RK4 step of M q'' = -gamma q' - q + beta q^2 + Delta cos(omega t + p n)."""
    if not dt > 0:
        raise ValueError(f"Time step must be positive, got dt={dt!r}.")
    phases = params.p * np.arange(state.N)
    with np.errstate(over="ignore", invalid="ignore"):
        q, v = _rk4(state.q, state.qdot, state.t, dt, params, coupling.mass_inverse, phases)
    return LatticeState(state.t + dt, q, v)


def simulate(
    initial,
    params,
    duration,
    sample_every=64,
    dt=None,
    period=None,
    steps_per_period=4096,
    blowup_threshold=BLOWUP_THRESHOLD,
    coupling=None,
    wave=None,
):
    """
    Integrate the lattice and record snapshots.

    Parameters
    ----------
    initial : LatticeState
    params : ModelParams
    duration : float
        Integration time, >= 0.
    sample_every : int, optional
        Record every ``sample_every`` steps. Default 64.
    dt : float, optional
        Step; defaults to period / steps_per_period.
    period : float, optional
        Reference period; defaults to the wave period L / omega when ``wave``
        is given and to the drive period 2 pi / omega otherwise.
    steps_per_period : int, optional
        Default 4096.
    blowup_threshold : float, optional
        Default 1e6.
    coupling : LatticeCoupling, optional
    wave : FourierSolution, optional
        Travelling wave the initial state was seeded from.

    Returns
    -------
    SpaceTimeField
    """
    if duration < 0:
        raise ValueError(f"Duration must be non-negative, got {duration!r}.")
    if period is None:
        period = (2.0 * math.pi if wave is None else wave.L) / params.omega
    if dt is None:
        dt = period / steps_per_period
    if coupling is None or coupling.N != initial.N or coupling.lam != params.lam:
        coupling = build_mass(initial.N, params.lam)
    n_steps = int(round(duration / dt))
    phases = params.p * np.arange(initial.N)
    Minv = coupling.mass_inverse

    q, v, t = initial.q.copy(), initial.qdot.copy(), float(initial.t)
    times = [t]
    frames = [q.copy()]
    blowup = None
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n_steps + 1):
            q, v = _rk4(q, v, t, dt, params, Minv, phases)
            t = initial.t + i * dt
            peak = np.max(np.abs(q))
            if not np.isfinite(peak) or peak > blowup_threshold:
                magnitude = np.where(np.isfinite(q), np.abs(q), np.inf)
                blowup = (t, int(np.argmax(magnitude)))
                logger.info("Blow-up at t=%.6g, site %d.", *blowup)
                times.append(t)
                frames.append(q.copy())
                break
            if i % sample_every == 0:
                times.append(t)
                frames.append(q.copy())
    return SpaceTimeField(
        times=np.array(times),
        frames=np.array(frames),
        dt=dt,
        blowup=blowup,
        final_state=LatticeState(t, q, v),
    )


def lattice_energy(state, params, coupling):
    """H = 1/2 qdot^T M qdot + sum(q^2/2 - beta q^3/3)."""
    kinetic = 0.5 * state.qdot @ coupling.mass_matrix @ state.qdot
    return float(kinetic + np.sum(0.5 * state.q**2 - params.beta * state.q**3 / 3.0))


def perturb(state, amplitude=1e-8, seed=0):
    """Multiplicative perturbation q -> q (1 + amplitude xi), xi ~ U(-1, 1)."""
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=state.N)
    return LatticeState(state.t, state.q * (1.0 + amplitude * xi), state.qdot.copy())


def wave_deviation(spacetime, sol, params):
    """max_n |q_n(t) - U(omega t + p n)| for every snapshot."""
    n = np.arange(spacetime.N)
    deviation = np.empty(len(spacetime.times))
    for i, t in enumerate(spacetime.times):
        wave = evaluate(sol, params.omega * t + params.p * n)
        deviation[i] = np.max(np.abs(spacetime.frames[i] - wave))
    return deviation


def growth_rate(spacetime, sol, params, window=(1e-6, 1e-2), period=None):
    """
    Exponential growth rate of the deviation from the travelling wave.

    Deviations are read stroboscopically once per ``period`` (default the
    wave period L / omega) and log-deviation is fitted linearly in time over the
    samples inside ``window``.

    Raises
    ------
    ResolutionError
        If fewer than three stroboscopic samples fall inside the window.
    """
    if period is None:
        period = sol.L / params.omega
    cycles = spacetime.times / period
    strobe = np.abs(cycles - np.round(cycles)) * period < 0.5 * spacetime.dt
    deviation = wave_deviation(spacetime, sol, params)
    lo, hi = window
    keep = strobe & (deviation > lo) & (deviation < hi)
    if np.count_nonzero(keep) < 3:
        raise ResolutionError("Fewer than three stroboscopic samples lie inside the growth window.")
    slope, _ = np.polyfit(spacetime.times[keep], np.log(deviation[keep]), 1)
    return float(slope)


def return_error(spacetime, period_samples):
    """max over k of max_n |q(t_k + T) - q(t_k)| with T = period_samples snapshots."""
    period_samples = int(period_samples)
    if len(spacetime.frames) <= period_samples:
        raise ResolutionError("The field is shorter than one period.")
    return float(np.max(np.abs(spacetime.frames[period_samples:] - spacetime.frames[:-period_samples])))


def shift_consistency(sol, params, N, steps=512):
    """
    Integrate the seeded wave for t = p / omega; by the travelling ansatz the
    result equals the initial state shifted by one site. Returns the max-norm
    mismatch of (q, qdot).
    """
    if params.p < 0:
        raise ValueError("Shift consistency is defined for p > 0.")
    state = seed_from_wave(sol, params, N)
    coupling = build_mass(N, params.lam)
    dt = params.p / params.omega / steps
    current = state
    for _ in range(steps):
        current = step(current, params, coupling, dt)
    error_q = np.max(np.abs(current.q - np.roll(state.q, -1)))
    error_v = np.max(np.abs(current.qdot - np.roll(state.qdot, -1)))
    return float(max(error_q, error_v))
