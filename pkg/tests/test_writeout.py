import json
import math

import numpy as np
import pandas as pd
import pytest

import pymetawave.utils.writeout as wr
from pymetawave.utils.floquet import classify
from pymetawave.utils.lattice import SpaceTimeField
from pymetawave.utils.melnikov import DriveSpec, homoclinic_curve
from pymetawave.utils.wavesolver import (
    BifurcationBranch,
    BranchPoint,
    FourierSolution,
    ModelParams,
)


@pytest.fixture
def params():
    return ModelParams(beta=1.0, gamma=0.01, lam=0.1, omega=0.5, p=2.0 * math.pi / 20, Delta=0.05)


@pytest.fixture
def solution():
    return FourierSolution(2.0 * math.pi, [0.1, 1.0 / 3.0, 2e-17], [0.0, math.pi, 0.0])


def test_json_encodes_numpy_and_non_finite(tmp_path):
    path = tmp_path / "values.json"
    wr.write_json({"a": np.float64(1.5), "b": np.array([1, 2]), "c": math.nan, "d": np.bool_(True), "e": -math.inf}, path)
    assert wr.read_json(path) == {"a": 1.5, "b": [1, 2], "c": None, "d": True, "e": None}
    assert path.read_bytes().endswith(b"}\n")


def test_csv_keeps_full_precision(tmp_path):
    values = np.array([1.0 / 3.0, math.pi * 1e-20, 2.0**0.5, -1e300])
    path = tmp_path / "values.csv"
    wr.write_csv(pd.DataFrame({"x": values}), path)
    np.testing.assert_array_equal(wr.read_csv(path)["x"].to_numpy(), values)
    assert b"\r\n" not in path.read_bytes()


def test_orbit_round_trip(tmp_path, orbit_4pi):
    path = tmp_path / "orbit.csv"
    wr.write_orbit(orbit_4pi, path)
    metadata, table = wr.read_orbit(path)
    assert metadata["period"] == orbit_4pi.period
    assert metadata["c0"] == orbit_4pi.level.c0
    assert metadata["beta"] == 1.0
    assert list(table.columns) == ["z", "U", "Uprime"]
    np.testing.assert_array_equal(table["U"].to_numpy(), orbit_4pi.samples)


def test_solution_round_trip(tmp_path, solution, params):
    path = tmp_path / "solution.json"
    wr.write_solution(solution, params, path)
    restored, restored_params = wr.read_solution(path)
    np.testing.assert_array_equal(restored.A, solution.A)
    np.testing.assert_array_equal(restored.B, solution.B)
    assert restored.L == solution.L
    assert restored_params == params
    assert set(json.loads(path.read_text())) == {"L", "A", "B", "params"}


def test_branch_round_trip(tmp_path, solution, params):
    branch = BifurcationBranch(parameter_name="gamma", params=params, folds=[0.0125], status="closed-loop")
    branch.points.append(BranchPoint(param=0.0, solution=solution, norm=1.25, stable=True))
    branch.points.append(BranchPoint(param=0.0125, solution=solution, norm=1.5, stable=None, fold=True))
    csv_path, json_path = wr.write_branch(branch, tmp_path / "branch.csv", tmp_path / "branch.json")

    table = wr.read_csv(csv_path)
    assert list(table.columns) == ["param", "norm", "stable", "fold_flag"]
    assert table["fold_flag"].tolist() == [False, True]

    restored = wr.read_branch(json_path)
    assert restored.status == "closed-loop"
    assert restored.folds == [0.0125]
    assert [pt.stable for pt in restored.points] == [True, None]
    assert [pt.fold for pt in restored.points] == [False, True]
    np.testing.assert_array_equal(restored.points[1].solution.B, solution.B)
    assert restored.params == params


def test_multipliers_round_trip(tmp_path):
    multipliers = np.array([1.0 + 0.0j, -1.2 + 0.0j, 0.3 + 0.4j, 0.3 - 0.4j])
    path = tmp_path / "multipliers.csv"
    verdict_path = tmp_path / "verdict.json"
    wr.write_multipliers(multipliers, path, classify(multipliers), verdict_path)
    np.testing.assert_array_equal(wr.read_multipliers(path), multipliers)
    assert wr.read_csv(path)["modulus"].tolist() == pytest.approx([1.0, 1.2, 0.5, 0.5])
    verdict = wr.read_json(verdict_path)
    assert verdict["stable"] is False
    assert verdict["type"] == "period-doubling"
    assert verdict["max_modulus"] == pytest.approx(1.2)


def test_melnikov_summary(tmp_path):
    curve = homoclinic_curve(1.0, 1.0, 0.0, DriveSpec(1.0), grid_size=64, closed=True)
    csv_path, json_path = wr.write_melnikov(
        curve, tmp_path / "melnikov.csv", tmp_path / "melnikov.json", threshold=2.0, gamma=0.0, extra={"mode": "homoclinic"}
    )
    table, summary = wr.read_melnikov(csv_path, json_path)
    assert list(table.columns) == ["a", "M"]
    assert len(table) == 64
    assert summary["persistence_predicted"] is True
    assert len(summary["zeros"]) == 2
    assert summary["mode"] == "homoclinic"
    assert summary["threshold"] == 2.0


def _field(blowup=None):
    times = np.array([0.0, 0.5, 1.0])
    frames = np.arange(12, dtype=float).reshape(3, 4) / 7.0
    return SpaceTimeField(times=times, frames=frames, dt=0.25, blowup=blowup)


@pytest.mark.parametrize("blowup", [None, (1.0, 2)])
def test_spacetime_csv_round_trip(tmp_path, params, blowup):
    csv_path, json_path = wr.write_spacetime(_field(blowup), params, tmp_path / "st.csv", tmp_path / "st.json")
    restored = wr.read_spacetime(csv_path, json_path)
    np.testing.assert_array_equal(restored.frames, _field().frames)
    np.testing.assert_array_equal(restored.times, _field().times)
    assert restored.dt == 0.25
    assert restored.blowup == blowup
    assert list(wr.read_csv(csv_path).columns) == ["t", "q0", "q1", "q2", "q3"]


@pytest.mark.parametrize("blowup", [None, (1.0, 2)])
def test_spacetime_netcdf_round_trip(tmp_path, params, blowup):
    path = wr.spacetime_nc(_field(blowup), params, str(tmp_path / "st.nc"), attributes={"subcommand": "simulate"})
    restored = wr.read_spacetime_nc(path)
    np.testing.assert_array_equal(restored.frames, _field().frames)
    assert restored.dt == 0.25
    assert restored.blowup == blowup


def test_git_blob_hash(tmp_path):
    empty = tmp_path / "empty"
    empty.write_bytes(b"")
    hello = tmp_path / "hello"
    hello.write_bytes(b"hello\n")
    assert wr.git_blob_hash(empty) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
    assert wr.git_blob_hash(hello) == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_manifest(tmp_path):
    artifact = tmp_path / "a.txt"
    artifact.write_bytes(b"hello\n")
    path = wr.write_manifest(str(tmp_path), "solve", {"Model": {"beta": 1.0}}, 7, 0.5, [str(artifact)], version="1.0")
    manifest = wr.read_json(path)
    assert manifest["subcommand"] == "solve"
    assert manifest["seed"] == 7
    assert manifest["version"] == "1.0"
    assert manifest["config"] == {"Model": {"beta": 1.0}}
    assert manifest["artifacts"] == [{"path": "a.txt", "sha1": "ce013625030ba8dba906f756967f9e9ca394464a"}]
