import math

import numpy as np
import pytest

from pymetawave.utils.errors import IncompatibleLatticeError, ResolutionError
from pymetawave.utils.floquet import (
    MonodromyResult,
    build_mass,
    check_compatibility,
    classify,
    first_instability,
    liouville_residual,
    locate_stability_change,
    monodromy,
    multiplier_sweep,
    stability_along_branch,
    stability_segments,
)
from pymetawave.utils.wavesolver import (
    FourierSolution,
    ModelParams,
    continue_branch,
    linear_response_guess,
    newton_solve,
    solution_norm,
)

N = 20
P = 2.0 * math.pi / N

# omega close to 2: the drive sits next to the first parametric tongue of a
# unit-frequency oscillator, which it enters at Delta ~ 0.17
TONGUE = ModelParams(omega=2.05, lam=0.0, p=P)


def _zero_wave(J=8):
    return FourierSolution.zeros(J, 2.0 * math.pi)


def test_build_mass():
    coupling = build_mass(3, 0.1)
    np.testing.assert_array_equal(coupling.mass_matrix[0], [1.0, -0.1, -0.1])
    coupling = build_mass(N, 0.2)
    np.testing.assert_allclose(coupling.mass_matrix @ coupling.mass_inverse, np.eye(N), atol=1e-14)
    assert build_mass(N, 0.0).trace_inverse == pytest.approx(N)
    with pytest.raises(ValueError):
        build_mass(2, 0.1)
    with pytest.raises(ValueError):
        build_mass(N, 0.5)


def test_check_compatibility():
    check_compatibility(ModelParams(p=P), N, 2.0 * math.pi)
    check_compatibility(ModelParams(p=2.0 * P, Delta=0.1), N, 4.0 * math.pi)
    with pytest.raises(IncompatibleLatticeError):
        check_compatibility(ModelParams(p=0.5), N, 2.0 * math.pi)
    # N p = L but not a multiple of 2 pi: fine unforced, incompatible with the drive
    check_compatibility(ModelParams(p=P / 2.0), N, math.pi)
    with pytest.raises(IncompatibleLatticeError):
        check_compatibility(ModelParams(p=P / 2.0, Delta=0.1), N, math.pi)


def test_zero_wave_multipliers_lie_on_unit_circle():
    params = ModelParams(omega=0.7, p=P)
    result = monodromy(_zero_wave(), params, N, steps_per_period=1024)
    assert isinstance(result, MonodromyResult)
    assert result.matrix.shape == (2 * N, 2 * N)
    assert result.period == pytest.approx(2.0 * math.pi / 0.7)
    np.testing.assert_allclose(np.abs(result.multipliers), 1.0, atol=1e-8)
    np.testing.assert_allclose(result.multipliers.real, math.cos(result.period), atol=1e-8)
    assert result.stable
    assert result.verdict.kind == "stable"


def test_liouville_damped_uncoupled():
    params = ModelParams(omega=0.5, gamma=0.1, p=P)
    result = monodromy(_zero_wave(), params, N, steps_per_period=4096)
    expected = math.exp(-0.1 * 4.0 * math.pi * N)
    assert np.linalg.det(result.matrix) == pytest.approx(expected, rel=1e-6)
    assert liouville_residual(result, params, build_mass(N, 0.0)) < 1e-8


def test_liouville_damped_coupled():
    params = ModelParams(omega=0.5, gamma=0.05, lam=0.1, p=P)
    result = monodromy(_zero_wave(), params, N, steps_per_period=4096)
    assert liouville_residual(result, params, build_mass(N, 0.1)) < 1e-8


def test_liouville_conservative_wave(unperturbed_wave, base_params):
    sol, _ = unperturbed_wave
    result = monodromy(sol, base_params, N, steps_per_period=4096, check_resolution=False)
    assert liouville_residual(result, base_params, build_mass(N, 0.0)) < 1e-8


def test_multipliers_are_closed_under_conjugation(unperturbed_wave, base_params):
    sol, _ = unperturbed_wave
    multipliers = monodromy(sol, base_params, N, steps_per_period=1024, check_resolution=False).multipliers
    for chi in multipliers:
        assert np.min(np.abs(multipliers - np.conj(chi))) < 1e-8


def test_incompatible_lattice_is_rejected(unperturbed_wave, base_params):
    sol, _ = unperturbed_wave
    with pytest.raises(IncompatibleLatticeError):
        monodromy(sol, base_params.replace(p=0.5), N, steps_per_period=64)


@pytest.mark.parametrize(
    "multipliers, kind, stable",
    [
        ([1.0, 0.5j, -0.5j], "stable", True),
        ([1.0 + 1e-7, 0.9], "stable", True),
        ([2.0, 0.5], "real-positive", False),
        ([-2.0, -0.5], "period-doubling", False),
        ([1.5 + 1.0j, 1.5 - 1.0j], "complex", False),
    ],
)
def test_classify(multipliers, kind, stable):
    verdict = classify(np.array(multipliers, dtype=complex))
    assert verdict.kind == kind
    assert verdict.stable is stable
    assert verdict.max_modulus == pytest.approx(np.max(np.abs(multipliers)))
    assert verdict.as_dict()["type"] == kind


def test_coupling_spreads_the_multiplier_band():
    uncoupled = monodromy(_zero_wave(), ModelParams(omega=0.5, p=P), N, steps_per_period=1024).multipliers
    coupled = monodromy(_zero_wave(), ModelParams(omega=0.5, lam=0.1, p=P), N, steps_per_period=1024).multipliers
    assert np.ptp(uncoupled.real) < 1e-8
    assert np.ptp(coupled.real) > 0.1
    np.testing.assert_allclose(np.abs(coupled), 1.0, atol=1e-8)


def test_rk4_is_fourth_order(unperturbed_wave, base_params):
    sol, _ = unperturbed_wave
    M1, M2, M3 = (
        monodromy(sol, base_params, N, steps_per_period=s, check_resolution=False).matrix for s in (256, 512, 1024)
    )
    ratio = np.linalg.norm(M1 - M2) / np.linalg.norm(M2 - M3)
    assert 12.0 < ratio < 20.0


def test_resolution_check_runs_by_default(unperturbed_wave, base_params):
    sol, _ = unperturbed_wave
    with pytest.raises(ResolutionError, match="increase steps_per_period"):
        monodromy(sol, base_params, N, steps_per_period=8)
    coarse = monodromy(sol, base_params, N, steps_per_period=8, check_resolution=False)
    assert coarse.steps == 8


def test_under_resolved_sweep_is_rejected():
    params = ModelParams(omega=0.5, gamma=0.05, lam=0.1, p=P)
    with pytest.raises(ResolutionError):
        multiplier_sweep(FourierSolution.zeros(16, 2.0 * math.pi), params, "delta", [0.005], N=N, steps_per_period=8)


@pytest.fixture(scope="module")
def damped_branch():
    params = ModelParams(omega=0.5, gamma=0.05, lam=0.1, p=P)
    return continue_branch(
        FourierSolution.zeros(16, 2.0 * math.pi),
        params,
        "delta",
        (0.0, 8.0 / 1024.0),
        step=1.0,
        param_scale=1.0 / 1024.0,
    )


def test_stability_along_branch(damped_branch):
    branch = stability_along_branch(damped_branch, N=N, steps_per_period=512, threads=2)
    assert [pt.stable for pt in branch.points] == [True] * len(branch)
    assert stability_segments(branch) == [(0.0, 8.0 / 1024.0, True)]


def test_stability_errors_leave_points_unclassified(damped_branch, caplog):
    params = damped_branch.params.replace(p=0.5)
    branch = stability_along_branch(damped_branch, params=params, N=N, steps_per_period=64)
    assert all(pt.stable is None for pt in branch.points)
    assert "Stability evaluation failed" in caplog.text
    assert stability_segments(branch) == [(0.0, 8.0 / 1024.0, None)]


def test_under_resolved_branch_points_stay_unclassified(damped_branch, caplog):
    branch = stability_along_branch(damped_branch, N=N, steps_per_period=8)
    assert all(pt.stable is None for pt in branch.points)
    assert "increase steps_per_period" in caplog.text


def test_stability_segments_split_on_change(damped_branch):
    flags = [True, True, False, False, True, True, True, True, True]
    for pt, flag in zip(damped_branch.points, flags):
        pt.stable = flag
    segments = stability_segments(damped_branch)
    assert [s[2] for s in segments] == [True, False, True]
    assert segments[1] == (2.0 / 1024.0, 3.0 / 1024.0, False)


def test_multiplier_sweep():
    params = ModelParams(omega=0.5, gamma=0.05, lam=0.1, p=P)
    sweep = multiplier_sweep(FourierSolution.zeros(16, 2.0 * math.pi), params, "delta", [0.0, 0.005, 0.01], N=N, steps_per_period=512, threads=2)
    assert [value for value, _, _ in sweep] == [0.0, 0.005, 0.01]
    norms = [solution_norm(sol) for _, sol, _ in sweep]
    assert norms[0] == 0.0 and norms[0] < norms[1] < norms[2]
    assert all(result.stable for _, _, result in sweep)
    with pytest.raises(ValueError):
        multiplier_sweep(FourierSolution.zeros(16, 2.0 * math.pi), params, "omega", [1.0])


def test_drive_destabilizes_by_period_doubling():
    deltas = np.linspace(0.02, 0.4, 20)
    seed = linear_response_guess(TONGUE.replace(Delta=deltas[0]), J=16)
    onset = first_instability(seed, TONGUE, deltas, N=N, steps_per_period=512)
    assert onset is not None
    assert 0.12 <= onset.Delta <= 0.24
    assert onset.verdict.kind == "period-doubling"
    dominant = onset.multipliers[np.argmax(np.abs(onset.multipliers))]
    assert dominant.real < -1.0


def test_drive_below_tongue_stays_stable():
    deltas = [0.02, 0.04, 0.06]
    seed = linear_response_guess(TONGUE.replace(Delta=deltas[0]), J=16)
    assert first_instability(seed, TONGUE, deltas, N=N, steps_per_period=512) is None


def test_loss_restabilizes_the_driven_wave():
    params = TONGUE.replace(Delta=0.3)
    start = newton_solve(linear_response_guess(params, J=16), params)
    change = locate_stability_change(start, params, np.linspace(0.0, 0.3, 13), N=N, steps_per_period=512)
    assert change is not None
    assert change.stable_low is False
    assert change.stable_high is True
    assert change.width <= 1e-3
    assert 0.03 < change.gamma_low < 0.15


@pytest.mark.slow
def test_unperturbed_wave_period_doubles(period_doubling_onset):
    onset = period_doubling_onset
    assert onset is not None
    assert onset.Delta == pytest.approx(1e-3)
    assert onset.verdict.kind == "period-doubling"
    assert onset.verdict.max_modulus > 1.01
    dominant = onset.multipliers[np.argmax(np.abs(onset.multipliers))]
    assert dominant.real < -1.0
    assert abs(dominant.imag) < 1e-3


@pytest.mark.slow
def test_loss_restabilizes_the_strongly_driven_wave():
    params = ModelParams(omega=0.5, gamma=1.0, lam=0.1, p=P)
    deltas = np.linspace(0.025, 0.5, 20)
    sol = linear_response_guess(params.replace(Delta=deltas[0]), J=24)
    for delta in deltas:
        sol = newton_solve(sol, params.replace(Delta=delta))

    driven = params.replace(Delta=0.5)
    change = locate_stability_change(sol, driven, np.linspace(1.0, 0.3, 29), N=N, steps_per_period=1024)
    assert change is not None
    # the walk runs down in gamma: stable under strong loss, unstable past the flip
    assert change.stable_low is True
    assert change.stable_high is False
    assert change.gamma_high < change.gamma_low
    assert change.width <= 1e-3
