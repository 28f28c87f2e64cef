"""
autoprocess.py

Module Overview
---------------
Batch front door of the toolkit. A run is described by an INI configuration
(see ``metadata/config.ini`` for every section and key) and executed by one of
the subcommands

    solve      one travelling wave and its residual report
    branch     continuation in gamma or Delta with stability flags
    floquet    multiplier cloud of one wave, optionally along a sweep
    melnikov   Melnikov curve, simple zeros and damping threshold
    simulate   direct lattice integration seeded with the wave
    verify     acceptance suite with PASS/FAIL lines

Each run writes its artifacts and a ``manifest.json`` into one output
directory. On a toolkit error the partial artifacts are kept next to a
``FAILED`` marker and the process exits with the error code.

Entry points
------------
``cli(argv)`` parses command-line flags (flags mirror config keys and override
the file); ``main()`` asks for a config file name and runs the subcommand named
in its ``[Run]`` section.
"""

import argparse
import configparser
import dataclasses
import logging
import math
import os
import sys
import time
import traceback
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version

import numpy as np
import pandas as pd
from scipy.integrate import quad

import pymetawave.utils.plotgen as plotgen
import pymetawave.utils.writeout as wr
from pymetawave.utils.elliptic import complete_E, complete_K, jacobi
from pymetawave.utils.errors import (
    ConfigError,
    ErrorCode,
    MetawaveError,
    ResolutionError,
    StepUnderflowError,
    bcolors,
)
from pymetawave.utils.floquet import (
    build_mass,
    first_instability,
    liouville_residual,
    locate_stability_change,
    monodromy,
    multiplier_sweep,
    stability_along_branch,
)
from pymetawave.utils.lattice import (
    growth_rate,
    perturb,
    return_error,
    seed_from_wave,
    simulate,
    wave_deviation,
)
from pymetawave.utils.melnikov import (
    DriveSpec,
    SubharmonicIndex,
    damping_threshold_homoclinic,
    damping_threshold_periodic,
    homoclinic_components,
    homoclinic_curve,
    melnikov_homoclinic_closed,
    persistence_predicted,
    subharmonic_curve,
    subharmonic_discrepancy,
)
from pymetawave.utils.orbits import homoclinic_profile, homoclinic_second_derivative, orbit_for_period
from pymetawave.utils.wavesolver import (
    FourierSolution,
    ModelParams,
    continue_branch,
    evaluate,
    frame_frequency,
    linear_response_guess,
    newton_solve,
    residual_at,
    seed_from_orbit,
    solution_norm,
    translate,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("solve", "branch", "floquet", "melnikov", "simulate", "verify")

DEFAULT_SWEEPS = {"delta": [0.01, 0.05, 0.1], "lambda": [0.05, 0.1]}


def _boolean(parser, section, key):
    return parser.getboolean(section, key)


def _text(parser, section, key):
    return parser.get(section, key).strip()


def _integer(parser, section, key):
    return parser.getint(section, key)


def _real(parser, section, key):
    return parser.getfloat(section, key)


def _optional_real(parser, section, key):
    value = parser.get(section, key).strip()
    return None if value == "" else float(value)


def _real_list(parser, section, key):
    value = parser.get(section, key).strip()
    if value == "":
        return []
    return [float(v) for v in value.split(",")]


# configparser lowercases keys; the second entry is the name used in RunConfig
_SCHEMA = {
    "Run": {"subcommand": ("subcommand", _text)},
    "Model": {
        "beta": ("beta", _real),
        "gamma": ("gamma", _real),
        "lambda": ("lambda", _real),
        "omega": ("omega", _real),
        "p": ("p", _optional_real),
        "delta": ("delta", _real),
    },
    "Discretization": {
        "j": ("J", _integer),
        "n": ("N", _integer),
        "steps_per_period": ("steps_per_period", _integer),
        "n_samples": ("n_samples", _integer),
    },
    "Seed": {
        "kind": ("kind", _text),
        "harmonic": ("harmonic", _integer),
        "shift": ("shift", _real),
    },
    "Solver": {"tol": ("tol", _real), "max_iter": ("max_iter", _integer)},
    "Continuation": {
        "parameter": ("parameter", _text),
        "start": ("start", _real),
        "end": ("end", _real),
        "step": ("step", _real),
        "param_scale": ("param_scale", _real),
        "max_steps": ("max_steps", _integer),
        "stability": ("stability", _boolean),
    },
    "Melnikov": {
        "mode": ("mode", _text),
        "grid_size": ("grid_size", _integer),
        "compare_closed_form": ("compare_closed_form", _boolean),
    },
    "Floquet": {
        "tolerance": ("tolerance", _real),
        "check_resolution": ("check_resolution", _boolean),
        "sweep": ("sweep", _text),
        "values": ("values", _real_list),
    },
    "Simulation": {
        "periods": ("periods", _real),
        "sample_every": ("sample_every", _integer),
        "perturbation": ("perturbation", _real),
        "seed": ("seed", _integer),
        "blowup_threshold": ("blowup_threshold", _real),
    },
    "Output": {
        "directory": ("directory", _text),
        "format": ("format", _text),
        "plots": ("plots", _boolean),
    },
}

_CHOICES = {
    ("Run", "subcommand"): SUBCOMMANDS,
    ("Seed", "kind"): ("orbit", "linear", "zero"),
    ("Continuation", "parameter"): ("gamma", "delta"),
    ("Melnikov", "mode"): ("homoclinic", "subharmonic"),
    ("Floquet", "sweep"): ("none", "delta", "lambda"),
    ("Output", "format"): ("csv", "netcdf"),
}

# (section, key, lower bound, strict)
_BOUNDS = (
    ("Discretization", "J", 2, False),
    ("Discretization", "N", 3, False),
    ("Discretization", "steps_per_period", 1, False),
    ("Discretization", "n_samples", 64, False),
    ("Seed", "harmonic", 1, False),
    ("Solver", "tol", 0.0, True),
    ("Solver", "max_iter", 1, False),
    ("Continuation", "step", 0.0, True),
    ("Continuation", "param_scale", 0.0, True),
    ("Continuation", "max_steps", 1, False),
    ("Melnikov", "grid_size", 32, False),
    ("Floquet", "tolerance", 0.0, True),
    ("Simulation", "periods", 0.0, False),
    ("Simulation", "sample_every", 1, False),
    ("Simulation", "perturbation", 0.0, False),
    ("Simulation", "blowup_threshold", 0.0, True),
)


@dataclass
class RunConfig:
    """
    Validated run configuration.

    ``model`` carries the resolved drive wavenumber (an empty ``p`` becomes
    2 pi u / N). The remaining attributes are plain dictionaries keyed as in
    the INI sections, with ``J`` and ``N`` spelled in upper case.
    """

    model: ModelParams
    discretization: dict
    seed: dict
    solver: dict
    continuation: dict
    melnikov: dict
    floquet: dict
    simulation: dict
    output: dict
    subcommand: str = "solve"

    def section(self, name):
        if name == "Run":
            return {"subcommand": self.subcommand}
        if name == "Model":
            return self.model.as_dict()
        return getattr(self, name.lower())

    def as_dict(self):
        return {name: dict(self.section(name)) for name in _SCHEMA}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _default_config_path():
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), "metadata", "config.ini")


def _read_source(source):
    # Check if source is a file-like object or a file path
    if hasattr(source, "read"):
        content = source.read()
        if isinstance(content, bytes):
            content = content.decode("utf-8")
        return content
    with open(source, "r", encoding="utf-8") as file:
        return file.read()


def _parse_string(content, origin):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(content, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"Unable to parse {origin}: {exc}") from exc
    return parser


def _check_known(parser, origin):
    if parser.defaults():
        raise ConfigError(f"{origin}: keys in [DEFAULT] are not supported.")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}].")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key '{key}' in section [{section}].")


def _typed(parser):
    values = {}
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (name, getter) in keys.items():
            try:
                values[section][name] = getter(parser, section, key)
            except ValueError as exc:
                raise ConfigError(f"Invalid value for '{key}' in section [{section}]: {exc}") from exc
    return values


def _validate(values):
    for (section, key), allowed in _CHOICES.items():
        value = values[section][key]
        if value not in allowed:
            raise ConfigError(
                f"'{key}' in section [{section}] must be one of {', '.join(allowed)}; got '{value}'."
            )
    for section, key, bound, strict in _BOUNDS:
        value = values[section][key]
        if (strict and not value > bound) or (not strict and not value >= bound):
            relation = ">" if strict else ">="
            raise ConfigError(f"'{key}' in section [{section}] must satisfy {key} {relation} {bound}; got {value!r}.")
    if values["Discretization"]["n_samples"] < 2 * values["Discretization"]["J"]:
        raise ConfigError("n_samples must satisfy n_samples >= 2 J for the orbit seed.")


def _build(values):
    _validate(values)
    model = values["Model"]
    p = model["p"]
    if p is None:
        p = 2.0 * math.pi * values["Seed"]["harmonic"] / values["Discretization"]["N"]
    try:
        params = ModelParams(
            beta=model["beta"],
            gamma=model["gamma"],
            lam=model["lambda"],
            omega=model["omega"],
            p=p,
            Delta=model["delta"],
        )
    except ValueError as exc:
        raise ConfigError(f"Invalid [Model] section: {exc}") from exc
    return RunConfig(
        model=params,
        discretization=values["Discretization"],
        seed=values["Seed"],
        solver=values["Solver"],
        continuation=values["Continuation"],
        melnikov=values["Melnikov"],
        floquet=values["Floquet"],
        simulation=values["Simulation"],
        output=values["Output"],
        subcommand=values["Run"]["subcommand"],
    )


def _format_value(value):
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(source=None, overrides=None):
    """
    Read and validate a run configuration.

    Parameters
    ----------
    source : str or file-like, optional
        Path or readable object (text or bytes). Missing sections and keys
        take the packaged defaults; ``None`` returns the defaults.
    overrides : dict, optional
        {(section, key): value} applied on top of the file, e.g. from
        command-line flags. Keys use the INI spelling.

    Returns
    -------
    RunConfig

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, values that cannot be
        converted, and violated parameter constraints.
    """
    parser = _parse_string(_read_source(_default_config_path()), "<defaults>")
    if source is not None:
        origin = source if isinstance(source, str) else getattr(source, "name", "<config>")
        user = _parse_string(_read_source(source), str(origin))
        _check_known(user, origin)
        for section in user.sections():
            for key, value in user.items(section):
                parser.set(section, key, value)
    if overrides:
        for (section, key), value in overrides.items():
            key = key.lower()
            if section not in _SCHEMA or key not in _SCHEMA[section]:
                raise ConfigError(f"Unknown override '{key}' in section [{section}].")
            parser.set(section, key, _format_value(value))
    return _build(_typed(parser))


def default_config():
    return parse_config()


def write_config(config, path):
    """Write a complete INI file; parsing it again gives an equal RunConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    for section in _SCHEMA:
        parser.add_section(section)
        values = config.section(section)
        for key, (name, _) in _SCHEMA[section].items():
            parser.set(section, key, _format_value(values[name]))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        parser.write(f)
    return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _seed_solution(config, params):
    """Starting guess of the configured kind and the orbit it came from, if any."""
    J = config.discretization["J"]
    u = config.seed["harmonic"]
    shift = config.seed["shift"]
    kind = config.seed["kind"]
    if kind == "orbit":
        orbit = orbit_for_period(2.0 * math.pi * u / params.omega, params.beta, config.discretization["n_samples"])
        return seed_from_orbit(orbit, J, u, shift), orbit
    if kind == "linear":
        sol = linear_response_guess(params, J, u)
        return (translate(sol, shift) if shift else sol), None
    return FourierSolution.zeros(J, 2.0 * math.pi * u), None


def _solve_wave(config, params=None):
    params = config.model if params is None else params
    guess, orbit = _seed_solution(config, params)
    sol, report = newton_solve(
        guess, params, tol=config.solver["tol"], max_iter=config.solver["max_iter"], full_output=True
    )
    return sol, report, orbit


def _profile_frame(sol, n_points):
    z = -0.5 * sol.L + sol.L * np.arange(n_points) / n_points
    return pd.DataFrame({"z": z, "U": evaluate(sol, z), "Uprime": evaluate(sol, z, derivative=1)})


def _orbit_error(sol, orbit, u):
    frame = frame_frequency(orbit, u) * orbit.z
    return float(np.max(np.abs(evaluate(sol, frame) - orbit.samples)))


def _run_solve(config, out, artifacts, threads):
    params = config.model
    sol, report, orbit = _solve_wave(config)
    off_grid = np.linspace(-0.5 * sol.L, 0.5 * sol.L, 4 * sol.J + 1)
    summary = {
        "residual": report.residual,
        "iterations": report.iterations,
        "even": report.even,
        "norm": solution_norm(sol),
        "off_grid_residual": float(np.max(np.abs(residual_at(sol, params, off_grid)))),
    }
    artifacts.append(wr.write_solution(sol, params, os.path.join(out, "solution.json")))
    artifacts.append(wr.write_csv(_profile_frame(sol, 4 * sol.J), os.path.join(out, "profile.csv")))
    if orbit is not None:
        artifacts.append(wr.write_orbit(orbit, os.path.join(out, "orbit.csv")))
        if params.Delta == 0 and params.gamma == 0 and params.lam == 0:
            summary["orbit_error"] = _orbit_error(sol, orbit, config.seed["harmonic"])
    artifacts.append(wr.write_json(summary, os.path.join(out, "report.json")))
    if config.output["plots"]:
        path = os.path.join(out, "profile.png")
        plotgen.plot_profile(sol, outfile=path)
        artifacts.append(path)
    print(f"Residual: {report.residual:.3e} after {report.iterations} iterations.")


def _run_branch(config, out, artifacts, threads):
    cont = config.continuation
    name = cont["parameter"]
    params = config.model.with_parameter(name, cont["start"])
    sol, _, _ = _solve_wave(config, params)
    print("Continuation started. Please wait ...")
    branch = continue_branch(
        sol,
        params,
        parameter_name=name,
        param_range=(cont["start"], cont["end"]),
        step=cont["step"],
        param_scale=cont["param_scale"],
        max_steps=cont["max_steps"],
        tol=config.solver["tol"],
        max_iter=config.solver["max_iter"],
    )
    if cont["stability"]:
        stability_along_branch(
            branch,
            N=config.discretization["N"],
            steps_per_period=config.discretization["steps_per_period"],
            tol=config.floquet["tolerance"],
            threads=threads,
            check_resolution=config.floquet["check_resolution"],
        )
    artifacts.extend(wr.write_branch(branch, os.path.join(out, "branch.csv"), os.path.join(out, "branch.json")))
    if config.output["plots"]:
        path = os.path.join(out, "branch.png")
        plotgen.plot_branch(branch, outfile=path)
        artifacts.append(path)
    if branch.status == "step-underflow":
        raise StepUnderflowError(f"Continuation stopped after {len(branch)} points: step underflow.")
    print(f"Branch continuation complete. {len(branch)} points, {len(branch.folds)} folds ({branch.status}).")


def _run_floquet(config, out, artifacts, threads):
    params = config.model
    disc = config.discretization
    sol, _, _ = _solve_wave(config)
    coupling = build_mass(disc["N"], params.lam)
    result = monodromy(
        sol,
        params,
        N=disc["N"],
        steps_per_period=disc["steps_per_period"],
        tol=config.floquet["tolerance"],
        check_resolution=config.floquet["check_resolution"],
        coupling=coupling,
    )
    artifacts.append(
        wr.write_multipliers(
            result.multipliers,
            os.path.join(out, "multipliers.csv"),
            verdict=result.verdict,
            verdict_path=os.path.join(out, "verdict.json"),
        )
    )
    artifacts.append(os.path.join(out, "verdict.json"))
    print(f"Liouville residual: {liouville_residual(result, params, coupling):.3e}")
    if config.output["plots"]:
        path = os.path.join(out, "multipliers.png")
        plotgen.plot_multipliers(result.multipliers, outfile=path)
        artifacts.append(path)

    sweep = config.floquet["sweep"]
    if sweep != "none":
        values = config.floquet["values"] or DEFAULT_SWEEPS[sweep]
        rows = []
        for i, (value, _, res) in enumerate(
            multiplier_sweep(
                sol,
                params,
                sweep,
                values,
                N=disc["N"],
                steps_per_period=disc["steps_per_period"],
                threads=threads,
                check_resolution=config.floquet["check_resolution"],
            )
        ):
            path = os.path.join(out, f"multipliers_{sweep}_{i:02d}.csv")
            artifacts.append(wr.write_multipliers(res.multipliers, path))
            rows.append({"value": value, **res.verdict.as_dict()})
        artifacts.append(wr.write_csv(pd.DataFrame(rows), os.path.join(out, f"sweep_{sweep}.csv")))
    verdict = "stable" if result.stable else f"unstable ({result.verdict.kind})"
    print(f"Floquet analysis complete: max|chi| = {result.max_modulus:.9f}, {verdict}.")


def _run_melnikov(config, out, artifacts, threads):
    params = config.model
    mel = config.melnikov
    drive = DriveSpec(params.Delta)
    csv_path = os.path.join(out, "melnikov.csv")
    json_path = os.path.join(out, "melnikov.json")
    if mel["mode"] == "homoclinic":
        curve = homoclinic_curve(params.beta, params.omega, params.gamma, drive, grid_size=mel["grid_size"])
        threshold = damping_threshold_homoclinic(params.beta, params.omega, params.Delta)
        extra = {"mode": "homoclinic", "omega": params.omega, "delta": params.Delta}
    else:
        u = config.seed["harmonic"]
        orbit = orbit_for_period(2.0 * math.pi * u / params.omega, params.beta, config.discretization["n_samples"])
        artifacts.append(wr.write_orbit(orbit, os.path.join(out, "orbit.csv")))
        idx = SubharmonicIndex.for_orbit(orbit, u)
        curve = subharmonic_curve(orbit, idx, params.gamma, drive, grid_size=mel["grid_size"])
        threshold = damping_threshold_periodic(orbit, idx, drive) if params.Delta > 0 else None
        extra = {"mode": "subharmonic", "u": u, "period": orbit.period, "delta": params.Delta}
        if mel["compare_closed_form"]:
            phases = 2.0 * math.pi * np.arange(8) / 8
            table = subharmonic_discrepancy(orbit, idx, params.gamma, drive, phases)
            artifacts.append(wr.write_csv(table, os.path.join(out, "closed_form_discrepancy.csv")))
    if threshold is not None:
        extra["below_threshold"] = persistence_predicted(params.gamma, threshold)
    artifacts.extend(wr.write_melnikov(curve, csv_path, json_path, threshold=threshold, gamma=params.gamma, extra=extra))
    print(f"Melnikov analysis complete: {curve.n_zeros} simple zeros, threshold {threshold!r}.")


def _run_simulate(config, out, artifacts, threads):
    params = config.model
    disc = config.discretization
    simcfg = config.simulation
    sol, _, _ = _solve_wave(config)
    state = perturb(seed_from_wave(sol, params, disc["N"]), simcfg["perturbation"], simcfg["seed"])
    period = sol.L / params.omega
    print("Lattice simulation started. Please wait ...")
    spacetime = simulate(
        state,
        params,
        simcfg["periods"] * period,
        sample_every=simcfg["sample_every"],
        wave=sol,
        steps_per_period=disc["steps_per_period"],
        blowup_threshold=simcfg["blowup_threshold"],
    )
    if config.output["format"] == "netcdf":
        path = os.path.join(out, "spacetime.nc")
        wr.spacetime_nc(spacetime, params, path, attributes={"seed": simcfg["seed"]})
        artifacts.append(path)
    else:
        artifacts.extend(
            wr.write_spacetime(spacetime, params, os.path.join(out, "spacetime.csv"), os.path.join(out, "spacetime.json"))
        )

    summary = {
        "blowup": spacetime.blowup is not None,
        "max_deviation": float(np.max(wave_deviation(spacetime, sol, params))),
        "growth_rate": None,
        "return_error": None,
    }
    try:
        summary["growth_rate"] = growth_rate(spacetime, sol, params)
    except ResolutionError as exc:
        logger.info("Growth rate not available: %s", exc)
    per_period, remainder = divmod(disc["steps_per_period"], simcfg["sample_every"])
    if remainder == 0 and spacetime.blowup is None:
        try:
            summary["return_error"] = return_error(spacetime, per_period)
        except ResolutionError as exc:
            logger.info("Return error not available: %s", exc)
    artifacts.append(wr.write_json(summary, os.path.join(out, "simulation.json")))
    if config.output["plots"]:
        path = os.path.join(out, "spacetime.png")
        plotgen.plot_spacetime(spacetime, outfile=path)
        artifacts.append(path)
    if spacetime.blowup is not None:
        print(f"Blow-up detected at t = {spacetime.blowup[0]:.6g}, site {spacetime.blowup[1]}.")
    print("Lattice simulation complete.")


def _check(rows, name, value, threshold, passed=None):
    if passed is None:
        passed = bool(value < threshold)
    rows.append({"check": name, "value": float(value), "threshold": float(threshold), "passed": bool(passed)})


MODULUS_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


def _mirror_mismatch(branch):
    # re-solve at -gamma from the branch point nearest the mirror image and
    # compare norms; regular points away from the folds only
    regular = [pt for pt in branch.points if not pt.fold]
    if not branch.folds or len(regular) < 3:
        return math.inf
    hi = max(abs(f) for f in branch.folds)
    gammas = np.array([pt.param for pt in regular])
    norms = np.array([pt.norm for pt in regular])
    g_scale, n_scale = np.ptp(gammas), np.ptp(norms)
    worst, checked = 0.0, 0
    for pt in regular:
        if not 0.1 * hi < abs(pt.param) < 0.7 * hi:
            continue
        target = -pt.param
        distance = np.hypot((gammas - target) / g_scale, (norms - pt.norm) / n_scale)
        distance[gammas * target <= 0.0] = np.inf
        nearest = regular[int(np.argmin(distance))]
        mirrored = newton_solve(nearest.solution, branch.params.replace(gamma=target))
        worst = max(worst, abs(solution_norm(mirrored) - pt.norm))
        checked += 1
    return worst if checked >= 4 else math.inf


def _elliptic_checks():
    worst = 0.0
    for k in MODULUS_GRID:
        K_ref, _ = quad(lambda t: 1.0 / math.sqrt(1.0 - (k * math.sin(t)) ** 2), 0.0, 0.5 * math.pi, epsabs=0, epsrel=1e-13, limit=200)
        E_ref, _ = quad(lambda t: math.sqrt(1.0 - (k * math.sin(t)) ** 2), 0.0, 0.5 * math.pi, epsabs=0, epsrel=1e-13, limit=200)
        worst = max(worst, abs(complete_K(k) / K_ref - 1.0), abs(complete_E(k) / E_ref - 1.0))
    identities = 0.0
    rng = np.random.default_rng(7)
    for k in rng.uniform(0.0, 0.999, size=10):
        t = jacobi(rng.uniform(-30.0, 30.0, size=100), k)
        identities = max(
            identities,
            float(np.max(np.abs(t.sn**2 + t.cn**2 - 1.0))),
            float(np.max(np.abs(t.dn**2 + (k * t.sn) ** 2 - 1.0))),
        )
    return [("elliptic_quadrature_grid", worst, 1e-10, None), ("jacobi_identities", identities, 1e-10, None)]


def _period_doubling_checks(sol, params, seed):
    onset = first_instability(
        sol, params, np.linspace(1e-4, 2e-3, 20), N=20, steps_per_period=1024, check_resolution=False
    )
    if onset is None:
        return [("period_doubling", math.inf, 1e-3, False), ("unstable_growth_rate", math.inf, 0.2, False)]
    dominant = onset.multipliers[int(np.argmax(np.abs(onset.multipliers)))]
    doubling = onset.verdict.kind == "period-doubling" and dominant.real < -1.0 and abs(dominant.imag) < 1e-3

    # the onset wave is simulated until it leaves the lattice
    wave = onset.solution
    at = params.replace(Delta=onset.Delta)
    period = wave.L / at.omega
    state = perturb(seed_from_wave(wave, at, 20), 1e-8, seed)
    field = simulate(state, at, 200.0 * period, sample_every=64, steps_per_period=1024, wave=wave)
    mismatch = abs(growth_rate(field, wave, at, window=(1e-5, 1e-2)) * period / math.log(onset.verdict.max_modulus) - 1.0)
    return [
        ("period_doubling", abs(dominant.imag), 1e-3, doubling),
        ("unstable_growth_rate", mismatch, 0.2, field.blowup is not None and mismatch < 0.2),
    ]


def _gamma_loop_checks(sol, params):
    weak = params.replace(Delta=7e-4, lam=1e-4)
    loop = continue_branch(newton_solve(sol, weak), weak, "gamma", (0.0, 0.01), step=0.05, param_scale=1e-3)
    folds = sorted(loop.folds)
    closed = loop.status == "closed-loop" and len(folds) == 2 and folds[0] < 0.0 < folds[1]
    ratio = folds[-1] / damping_threshold_homoclinic(1.0, 0.5, 7e-4) if folds else math.inf
    return [
        ("gamma_loop_folds", len(folds), 2, closed),
        ("gamma_fold_threshold_ratio", ratio, 2.0, 0.5 <= ratio <= 2.0),
        ("gamma_loop_mirror_norms", _mirror_mismatch(loop), 1e-8, None),
    ]


def _linear_response_checks():
    worst = 0.0
    norms = []
    for Delta in (0.0025, 0.005, 0.01):
        driven = ModelParams(beta=1.0, lam=0.1, omega=0.5, p=2.0 * math.pi / 20, Delta=Delta)
        guess = linear_response_guess(driven, 50, 1)
        norms.append(solution_norm(newton_solve(guess, driven, tol=1e-10)))
        worst = max(worst, abs(norms[-1] / solution_norm(guess) - 1.0))
    scaling = max(abs(0.5 * norms[1] / norms[0] - 1.0), abs(0.5 * norms[2] / norms[1] - 1.0))
    return [("linear_response", worst, 0.05, None), ("linear_scaling", scaling, 0.01, None)]


def _stable_dynamics_checks(seed):
    params = ModelParams(beta=1.0, gamma=0.05, lam=0.1, omega=0.5, p=2.0 * math.pi / 20, Delta=0.05)
    wave = newton_solve(linear_response_guess(params, 16, 1), params)
    stable = monodromy(wave, params, N=20, steps_per_period=1024).stable
    state = perturb(seed_from_wave(wave, params, 20), 1e-3, seed)
    field = simulate(state, params, 10.0 * wave.L / params.omega, sample_every=64, steps_per_period=1024, wave=wave)
    error = return_error(field, 16)
    return [("stable_return_error", error, 1e-3, stable and field.blowup is None and error < 1e-3)]


def _loss_stabilization_checks():
    strong = ModelParams(beta=1.0, gamma=1.0, lam=0.1, omega=0.5, p=2.0 * math.pi / 20)
    deltas = np.linspace(0.025, 0.5, 20)
    wave = linear_response_guess(strong.replace(Delta=deltas[0]), 24, 1)
    for Delta in deltas:
        wave = newton_solve(wave, strong.replace(Delta=Delta))
    change = locate_stability_change(
        wave, strong.replace(Delta=0.5), np.linspace(1.0, 0.3, 29), N=20, steps_per_period=1024
    )
    if change is None:
        return [("loss_stabilization", math.inf, 1e-3, False)]
    flipped = change.stable_low and not change.stable_high and change.width <= 1e-3
    return [("loss_stabilization", change.width, 1e-3, flipped)]


def verify(config=None):
    """
    Acceptance suite.

    Closed-form and quadrature cross-checks run first; the continuation,
    Floquet sweeps and lattice simulations follow. A check whose computation
    raises a toolkit error is reported as failed.

    Returns
    -------
    pandas.DataFrame
        Columns check, value, threshold, passed.
    """
    config = default_config() if config is None else config
    seed = config.simulation["seed"]
    rows = []

    # Homoclinic Melnikov: closed form against quadrature on a 5 x 5 x 5 grid
    worst = 0.0
    drive = DriveSpec(1.0)
    for omega in np.linspace(0.5, 2.0, 5):
        I, Cc, Cs = homoclinic_components(1.0, omega)
        for gamma in np.linspace(0.0, 1.0, 5):
            for a in 2.0 * math.pi * np.arange(5) / 5:
                numeric = -gamma * I + Cc * math.cos(a) - Cs * math.sin(a)
                closed = melnikov_homoclinic_closed(1.0, omega, gamma, drive, a)
                scale = gamma * I + math.hypot(Cc, Cs)
                worst = max(worst, abs(closed - numeric) / scale)
    _check(rows, "homoclinic_two_path", worst, 1e-8)

    # Zero count on either side of the homoclinic damping threshold
    failures = 0
    for omega in (0.5, 1.0, 2.0):
        for Delta in (1.0, 7e-4):
            threshold = damping_threshold_homoclinic(1.0, omega, Delta)
            below = homoclinic_curve(1.0, omega, 0.9 * threshold, DriveSpec(Delta), closed=True)
            above = homoclinic_curve(1.0, omega, 1.1 * threshold, DriveSpec(Delta), closed=True)
            failures += int(below.n_zeros != 2) + int(above.n_zeros != 0)
    _check(rows, "threshold_sharpness", failures, 0, passed=failures == 0)

    z = np.linspace(-40.0, 40.0, 2001)
    gamma_z, _ = homoclinic_profile(1.0, z)
    ode = homoclinic_second_derivative(1.0, z) + gamma_z - gamma_z**2
    _check(rows, "homoclinic_ode_residual", np.max(np.abs(ode)), 1e-12)
    damping, _ = quad(lambda s: homoclinic_profile(1.0, s)[1] ** 2, -80.0, 80.0, epsabs=1e-15, epsrel=1e-13, limit=400)
    _check(rows, "homoclinic_damping_integral", abs(damping / 1.2 - 1.0), 1e-10)

    # Unperturbed wave, Tbar = 4 pi
    params = ModelParams(beta=1.0, omega=0.5, p=2.0 * math.pi / 20)
    orbit = orbit_for_period(4.0 * math.pi, 1.0, 1024)
    sol, report = newton_solve(seed_from_orbit(orbit, 50, 1), params, tol=1e-10, full_output=True)
    _check(rows, "unperturbed_residual", report.residual, 1e-10, passed=report.residual <= 1e-10)
    _check(rows, "unperturbed_orbit_match", _orbit_error(sol, orbit, 1), 1e-6)

    # Abel-Liouville on the wave and on a damped trivial wave
    coupling = build_mass(20, 0.0)
    # the neutral pair of the unforced wave is a Jordan block, so only the matrix is checked here
    result = monodromy(sol, params, N=20, coupling=coupling, check_resolution=False)
    _check(rows, "liouville_conservative", liouville_residual(result, params, coupling), 1e-8)
    damped = ModelParams(beta=1.0, gamma=0.05, lam=0.1, omega=0.5, p=2.0 * math.pi / 20)
    damped_coupling = build_mass(20, 0.1)
    trivial = FourierSolution.zeros(50, 2.0 * math.pi)
    damped_result = monodromy(trivial, damped, N=20, coupling=damped_coupling)
    _check(rows, "liouville_damped", liouville_residual(damped_result, damped, damped_coupling), 1e-6)
    baseline = monodromy(trivial, params, N=20, coupling=coupling)
    _check(rows, "unit_circle_baseline", np.max(np.abs(np.abs(baseline.multipliers) - 1.0)), 1e-6)

    # Legendre relation at k = 0.6
    k = 0.6
    kc = math.sqrt(1.0 - k * k)
    K, E, Kc, Ec = complete_K(k), complete_E(k), complete_K(kc), complete_E(kc)
    _check(rows, "legendre_relation", abs(E * Kc + Ec * K - K * Kc - 0.5 * math.pi), 1e-10)

    slow_checks = [
        (_elliptic_checks, (), [("elliptic_quadrature_grid", 1e-10), ("jacobi_identities", 1e-10)]),
        (_linear_response_checks, (), [("linear_response", 0.05), ("linear_scaling", 0.01)]),
        (_period_doubling_checks, (sol, params, seed), [("period_doubling", 1e-3), ("unstable_growth_rate", 0.2)]),
        (
            _gamma_loop_checks,
            (sol, params),
            [("gamma_loop_folds", 2), ("gamma_fold_threshold_ratio", 2.0), ("gamma_loop_mirror_norms", 1e-8)],
        ),
        (_stable_dynamics_checks, (seed,), [("stable_return_error", 1e-3)]),
        (_loss_stabilization_checks, (), [("loss_stabilization", 1e-3)]),
    ]
    for compute, args, expected in slow_checks:
        try:
            results = compute(*args)
        except MetawaveError as exc:
            logger.warning("%s aborted: %s", compute.__name__.strip("_"), exc)
            results = [(name, math.inf, threshold, False) for name, threshold in expected]
        for name, value, threshold, passed in results:
            _check(rows, name, value, threshold, passed)

    table = pd.DataFrame(rows, columns=["check", "value", "threshold", "passed"])
    for row in table.itertuples():
        mark = f"{bcolors.OKGREEN}PASS{bcolors.ENDC}" if row.passed else f"{bcolors.FAIL}FAIL{bcolors.ENDC}"
        print(f"{mark}  {row.check:<28s} {row.value:.3e}  (threshold {row.threshold:.1e})")
    return table


def _run_verify(config, out, artifacts, threads):
    table = verify(config)
    artifacts.append(wr.write_csv(table, os.path.join(out, "verify.csv")))
    return 0 if bool(table["passed"].all()) else 1


_RUNNERS = {
    "solve": _run_solve,
    "branch": _run_branch,
    "floquet": _run_floquet,
    "melnikov": _run_melnikov,
    "simulate": _run_simulate,
    "verify": _run_verify,
}


def _package_version():
    try:
        return version("pymetawave")
    except PackageNotFoundError:
        return None


def _finalize(out, subcommand, config, seed, start, artifacts):
    wr.write_manifest(
        out,
        subcommand,
        config.as_dict(),
        seed,
        time.perf_counter() - start,
        [a for a in artifacts if os.path.exists(a)],
        version=_package_version(),
    )


def run(subcommand, config=None, out=None, seed=None, threads=1):
    """
    Execute one subcommand and write its artifacts.

    Parameters
    ----------
    subcommand : str
        One of solve, branch, floquet, melnikov, simulate, verify.
    config : RunConfig, optional
        Defaults to the packaged configuration.
    out : str, optional
        Output directory; defaults to ``[Output] directory``.
    seed : int, optional
        Random seed of the perturbation protocol; overrides ``[Simulation] seed``.
    threads : int, optional
        Worker threads for stability evaluations and sweeps.

    Returns
    -------
    int
        Exit status: 0 on success, the ErrorCode number on a toolkit error,
        1 when a verify check fails and 99 on unexpected errors.
    """
    config = default_config() if config is None else config
    if subcommand not in _RUNNERS:
        print(f"{bcolors.FAIL}{ErrorCode.CONFIG_ERROR.message} Unknown subcommand '{subcommand}'.{bcolors.ENDC}")
        return ErrorCode.CONFIG_ERROR.code
    if seed is not None:
        config = config.replace(simulation={**config.simulation, "seed": int(seed)})
    out = config.output["directory"] if out is None else out
    os.makedirs(out, exist_ok=True)
    marker = os.path.join(out, "FAILED")
    if os.path.exists(marker):
        os.remove(marker)

    artifacts = []
    start = time.perf_counter()
    seed = config.simulation["seed"]
    try:
        status = _RUNNERS[subcommand](config, out, artifacts, threads) or 0
    except MetawaveError as exc:
        code = exc.error_code
        print(f"{bcolors.FAIL}{code.message}{bcolors.ENDC} {exc}")
        with open(marker, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{code.code}\n{exc}\n")
        _finalize(out, subcommand, config, seed, start, artifacts)
        return code.code
    except Exception:
        print("Error: Unable to process the run.")
        traceback.print_exc()
        with open(marker, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{ErrorCode.UNKNOWN_ERROR.code}\n{ErrorCode.UNKNOWN_ERROR.message}\n")
        _finalize(out, subcommand, config, seed, start, artifacts)
        return ErrorCode.UNKNOWN_ERROR.code
    _finalize(out, subcommand, config, seed, start, artifacts)
    return status


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

# flag -> (section, key, type)
_FLAGS = {
    "--beta": ("Model", "beta", float),
    "--gamma": ("Model", "gamma", float),
    "--lambda": ("Model", "lambda", float),
    "--omega": ("Model", "omega", float),
    "--p": ("Model", "p", float),
    "--delta": ("Model", "delta", float),
    "--J": ("Discretization", "J", int),
    "--N": ("Discretization", "N", int),
    "--steps-per-period": ("Discretization", "steps_per_period", int),
    "--n-samples": ("Discretization", "n_samples", int),
    "--seed-kind": ("Seed", "kind", str),
    "--harmonic": ("Seed", "harmonic", int),
    "--shift": ("Seed", "shift", float),
    "--tol": ("Solver", "tol", float),
    "--max-iter": ("Solver", "max_iter", int),
    "--param": ("Continuation", "parameter", str),
    "--start": ("Continuation", "start", float),
    "--end": ("Continuation", "end", float),
    "--step": ("Continuation", "step", float),
    "--param-scale": ("Continuation", "param_scale", float),
    "--max-steps": ("Continuation", "max_steps", int),
    "--grid-size": ("Melnikov", "grid_size", int),
    "--tolerance": ("Floquet", "tolerance", float),
    "--sweep": ("Floquet", "sweep", str),
    "--values": ("Floquet", "values", str),
    "--periods": ("Simulation", "periods", float),
    "--sample-every": ("Simulation", "sample_every", int),
    "--perturbation": ("Simulation", "perturbation", float),
    "--blowup-threshold": ("Simulation", "blowup_threshold", float),
    "--format": ("Output", "format", str),
}

_SWITCHES = {
    "--stability": ("Continuation", "stability"),
    "--compare-closed-form": ("Melnikov", "compare_closed_form"),
    "--check-resolution": ("Floquet", "check_resolution"),
    "--plots": ("Output", "plots"),
}


def _dest(flag):
    return "cfg_" + flag.lstrip("-").replace("-", "_")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="run-metawave",
        description="Travelling waves, Melnikov analysis and Floquet stability of driven magnetic metamaterial lattices.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="INI configuration file; flags override its values")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed of the perturbation protocol")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for stability sweeps")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--homoclinic", dest="mode", action="store_const", const="homoclinic")
    mode.add_argument("--subharmonic", dest="mode", action="store_const", const="subharmonic")
    for flag, (section, key, kind) in _FLAGS.items():
        parser.add_argument(flag, dest=_dest(flag), type=kind, help=f"[{section}] {key}")
    for flag, (section, key) in _SWITCHES.items():
        parser.add_argument(flag, dest=_dest(flag), action=argparse.BooleanOptionalAction, help=f"[{section}] {key}")
    return parser


def _overrides(args):
    overrides = {}
    for flag, (section, key, _) in _FLAGS.items():
        value = getattr(args, _dest(flag))
        if value is not None:
            overrides[(section, key)] = value
    for flag, (section, key) in _SWITCHES.items():
        value = getattr(args, _dest(flag))
        if value is not None:
            overrides[(section, key)] = value
    if args.mode is not None:
        overrides[("Melnikov", "mode")] = args.mode
    if args.out is not None:
        overrides[("Output", "directory")] = args.out
    return overrides


def cli(argv=None):
    """Parse command-line arguments, run the subcommand and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = parse_config(args.config, _overrides(args))
    except (ConfigError, OSError) as exc:
        code = ErrorCode.CONFIG_ERROR
        print(f"{bcolors.FAIL}{code.message}{bcolors.ENDC} {exc}")
        return code.code
    return run(args.subcommand, config, seed=args.seed, threads=args.threads)


def autoprocess(config_file, out=None):
    """Run the subcommand named in the ``[Run]`` section of a config file."""
    config = parse_config(config_file)
    print(f"Configuration loaded. Running '{config.subcommand}' ...")
    return run(config.subcommand, config, out=out)


def main():
    # Get the config file
    try:
        filepath = input("Enter config file name: ")
        if os.path.exists(filepath):
            sys.exit(autoprocess(filepath))
        else:
            print("File not found!")
    except MetawaveError as exc:
        print(f"{bcolors.FAIL}{exc.error_code.message}{bcolors.ENDC} {exc}")
        sys.exit(exc.error_code.code)
    except Exception:
        print("Error: Unable to process the data.")
        traceback.print_exc()
