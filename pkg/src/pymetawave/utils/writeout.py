"""
writeout.py

Module Overview
---------------
Writers and readers for every artifact the toolkit emits: orbits, Fourier
solutions, bifurcation branches, Floquet multipliers, Melnikov curves and
space-time fields, plus the per-run manifest.

CSV files are written through pandas with 17 significant digits and LF line
endings and read back with round-trip float parsing, so values survive a
write/read cycle bit for bit. JSON keeps insertion order and encodes
non-finite numbers as null. Space-time fields can also be written to NetCDF.
"""

import hashlib
import json
import math
import os
import time

import netCDF4 as nc4
import numpy as np
import pandas as pd

from pymetawave.utils.lattice import SpaceTimeField
from pymetawave.utils.wavesolver import (
    BifurcationBranch,
    BranchPoint,
    FourierSolution,
    ModelParams,
    branch_table,
)

FLOAT_FORMAT = "%.17g"


def _plain(value):
    # numpy scalars/arrays -> builtins, non-finite floats -> None
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_plain(obj), f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(df, path):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_csv(path, **kwargs):
    return pd.read_csv(path, float_precision="round_trip", **kwargs)


def params_from_dict(values):
    return ModelParams(
        beta=values["beta"],
        gamma=values["gamma"],
        lam=values["lambda"],
        omega=values["omega"],
        p=values["p"],
        Delta=values["delta"],
    )


def write_orbit(orbit, path):
    """CSV with columns z, U, Uprime preceded by '# key=value' metadata lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# beta={orbit.beta!r}\n")
        f.write(f"# c0={orbit.level.c0!r}\n")
        f.write(f"# gap={orbit.level.gap!r}\n")
        f.write(f"# period={orbit.period!r}\n")
        pd.DataFrame({"z": orbit.z, "U": orbit.samples, "Uprime": orbit.derivative}).to_csv(
            f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
    return path


def read_orbit(path):
    """
    Returns
    -------
    tuple
        (metadata dict of floats, DataFrame with z, U, Uprime).
    """
    metadata = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, value = line[1:].strip().split("=", 1)
            metadata[key] = float(value)
    return metadata, read_csv(path, comment="#")


def solution_record(sol, params=None):
    record = {"L": sol.L, "A": sol.A, "B": sol.B}
    if params is not None:
        record["params"] = params.as_dict()
    return record


def write_solution(sol, params, path):
    """JSON record {L, A, B, params}."""
    return write_json(solution_record(sol, params), path)


def read_solution(path):
    record = read_json(path)
    sol = FourierSolution(record["L"], np.array(record["A"]), np.array(record["B"]))
    params = params_from_dict(record["params"]) if "params" in record else None
    return sol, params


def write_branch(branch, csv_path, json_path):
    """CSV param, norm, stable, fold_flag plus JSON with every coefficient vector."""
    write_csv(branch_table(branch), csv_path)
    write_json(
        {
            "parameter": branch.parameter_name,
            "status": branch.status,
            "folds": branch.folds,
            "params": branch.params.as_dict(),
            "points": [
                {
                    "param": pt.param,
                    "norm": pt.norm,
                    "stable": pt.stable,
                    "fold": pt.fold,
                    **solution_record(pt.solution),
                }
                for pt in branch.points
            ],
        },
        json_path,
    )
    return csv_path, json_path


def read_branch(json_path):
    record = read_json(json_path)
    branch = BifurcationBranch(
        parameter_name=record["parameter"],
        params=params_from_dict(record["params"]),
        folds=list(record["folds"]),
        status=record["status"],
    )
    for pt in record["points"]:
        sol = FourierSolution(pt["L"], np.array(pt["A"]), np.array(pt["B"]))
        branch.points.append(
            BranchPoint(param=pt["param"], solution=sol, norm=pt["norm"], stable=pt["stable"], fold=pt["fold"])
        )
    return branch


def write_multipliers(multipliers, path, verdict=None, verdict_path=None):
    """CSV re, im, modulus; optional JSON verdict {max_modulus, stable, type}."""
    multipliers = np.asarray(multipliers)
    write_csv(
        pd.DataFrame({"re": multipliers.real, "im": multipliers.imag, "modulus": np.abs(multipliers)}),
        path,
    )
    if verdict is not None and verdict_path is not None:
        write_json(verdict.as_dict(), verdict_path)
    return path


def read_multipliers(path):
    df = read_csv(path)
    return df["re"].to_numpy() + 1j * df["im"].to_numpy()


def write_melnikov(curve, csv_path, json_path, threshold=None, gamma=None, extra=None):
    """CSV (a, M) plus JSON {zeros, threshold, persistence_predicted}."""
    write_csv(curve.to_frame(), csv_path)
    summary = {
        "zeros": [{"a0": a0, "slope_sign": sign} for a0, sign in curve.zeros],
        "threshold": threshold,
        "gamma": gamma,
        "persistence_predicted": curve.n_zeros > 0,
    }
    if extra:
        summary.update(extra)
    write_json(summary, json_path)
    return csv_path, json_path


def read_melnikov(csv_path, json_path):
    return read_csv(csv_path), read_json(json_path)


def write_spacetime(spacetime, params, csv_path, json_path):
    """CSV matrix (rows time, columns t, q0 .. q{N-1}) plus JSON {params, dt, blowup}."""
    columns = {"t": spacetime.times}
    for n in range(spacetime.N):
        columns[f"q{n}"] = spacetime.frames[:, n]
    write_csv(pd.DataFrame(columns), csv_path)
    write_json(
        {
            "params": params.as_dict(),
            "dt": spacetime.dt,
            "blowup": None if spacetime.blowup is None else {"time": spacetime.blowup[0], "site": spacetime.blowup[1]},
        },
        json_path,
    )
    return csv_path, json_path


def read_spacetime(csv_path, json_path):
    df = read_csv(csv_path)
    meta = read_json(json_path)
    blowup = meta["blowup"]
    return SpaceTimeField(
        times=df["t"].to_numpy(),
        frames=df.drop(columns="t").to_numpy(),
        dt=meta["dt"],
        blowup=None if blowup is None else (blowup["time"], blowup["site"]),
    )


def spacetime_nc(spacetime, params, outfile, attributes=None):
    """
    Write a space-time field to NetCDF.

    Dimensions ``time`` and ``site``; variable ``q(time, site)``; the model
    parameters, dt and blow-up information as global attributes.
    """
    ncfile = nc4.Dataset(outfile, mode="w", format="NETCDF4")
    ncfile.createDimension("time", len(spacetime.times))
    ncfile.createDimension("site", spacetime.N)

    t = ncfile.createVariable("time", np.float64, ("time",))
    t.long_name = "time"
    t.axis = "T"
    site = ncfile.createVariable("site", "i4", ("site",))
    site.long_name = "lattice site index"
    q = ncfile.createVariable("q", np.float64, ("time", "site"))
    q.long_name = "normalized charge"

    t[:] = spacetime.times
    site[:] = np.arange(spacetime.N)
    q[:, :] = spacetime.frames

    ncfile.history = "Created " + time.ctime(time.time())
    for key, value in params.as_dict().items():
        setattr(ncfile, key, float(value))
    ncfile.dt = float(spacetime.dt)
    ncfile.blowup = int(spacetime.blowup is not None)
    if spacetime.blowup is not None:
        ncfile.blowup_time = float(spacetime.blowup[0])
        ncfile.blowup_site = int(spacetime.blowup[1])
    if attributes:
        for key, value in attributes.items():
            setattr(ncfile, key, str(value))
    ncfile.close()
    return outfile


def read_spacetime_nc(path):
    with nc4.Dataset(path, mode="r") as ncfile:
        blowup = None
        if int(ncfile.blowup):
            blowup = (float(ncfile.blowup_time), int(ncfile.blowup_site))
        return SpaceTimeField(
            times=np.array(ncfile.variables["time"][:], dtype=float),
            frames=np.array(ncfile.variables["q"][:, :], dtype=float),
            dt=float(ncfile.dt),
            blowup=blowup,
        )


def git_blob_hash(path):
    """SHA-1 of b'blob <size>\\0' + content, as git computes object ids."""
    with open(path, "rb") as f:
        content = f.read()
    digest = hashlib.sha1()
    digest.update(b"blob %d\0" % len(content))
    digest.update(content)
    return digest.hexdigest()


def write_manifest(out_dir, subcommand, config, seed, wall_time, artifacts, version=None):
    """
    manifest.json listing inputs and a content hash for every artifact.

    ``artifacts`` are paths; they are stored relative to ``out_dir``.
    """
    entries = []
    for path in artifacts:
        entries.append({"path": os.path.relpath(path, out_dir), "sha1": git_blob_hash(path)})
    manifest = {
        "subcommand": subcommand,
        "version": version,
        "seed": seed,
        "wall_time": wall_time,
        "config": config,
        "artifacts": entries,
    }
    return write_json(manifest, os.path.join(out_dir, "manifest.json"))
