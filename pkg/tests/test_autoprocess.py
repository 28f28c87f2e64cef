import importlib
import io
import math
import os

import pytest

import pymetawave.utils.writeout as wr
from pymetawave.utils.autoprocess import (
    autoprocess,
    cli,
    default_config,
    main,
    parse_config,
    run,
    write_config,
)
from pymetawave.utils.errors import ConfigError

# The package-level star import exports the ``autoprocess`` function, which
# shadows the submodule attribute; fetch the module itself.
ap = importlib.import_module("pymetawave.utils.autoprocess")


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults():
    config = default_config()
    assert config.subcommand == "solve"
    assert config.discretization["J"] == 50
    assert config.discretization["N"] == 20
    assert config.model.p == pytest.approx(2.0 * math.pi / 20)
    assert config.model.omega == 0.5
    assert config.floquet["values"] == []
    assert config.continuation["stability"] is True
    assert config.floquet["check_resolution"] is True


def test_empty_file_gives_defaults(tmp_path):
    assert parse_config(_write(tmp_path, "")) == default_config()


def test_partial_file_keeps_other_defaults(tmp_path):
    config = parse_config(_write(tmp_path, "[Model]\ngamma = 0.02\ndelta = 0.01\n\n[Discretization]\nN = 10\n"))
    assert config.model.gamma == 0.02
    assert config.model.Delta == 0.01
    assert config.model.p == pytest.approx(2.0 * math.pi / 10)
    assert config.discretization["J"] == 50


def test_bytes_source():
    config = parse_config(io.BytesIO(b"[Run]\nsubcommand = melnikov\n"))
    assert config.subcommand == "melnikov"


def test_overrides():
    config = parse_config(overrides={("Model", "gamma"): 0.01, ("Floquet", "values"): [0.1, 0.2], ("Seed", "harmonic"): 2})
    assert config.model.gamma == 0.01
    assert config.floquet["values"] == [0.1, 0.2]
    assert config.model.p == pytest.approx(4.0 * math.pi / 20)
    with pytest.raises(ConfigError):
        parse_config(overrides={("Model", "mass"): 1.0})


@pytest.mark.parametrize(
    "text",
    [
        "[Model]\nlambda = 0.6\n",
        "[Model]\nbeta = 0\n",
        "[Model]\nbeta = abc\n",
        "[Model\nbeta = 1\n",
        "[Plot]\ncolor = red\n",
        "[Model]\nmass = 1.0\n",
        "[DEFAULT]\nbeta = 1.0\n",
        "[Seed]\nkind = spline\n",
        "[Discretization]\nJ = 1\n",
        "[Discretization]\nn_samples = 64\n",
        "[Solver]\ntol = 0\n",
        "[Run]\nsubcommand = plot\n",
    ],
)
def test_invalid_configuration(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, text))


def test_missing_file_is_reported_by_cli(tmp_path, capsys):
    assert cli(["solve", "--config", str(tmp_path / "missing.ini")]) == 10
    assert "Invalid configuration" in capsys.readouterr().out


def test_write_config_round_trip(tmp_path):
    config = parse_config(
        overrides={("Model", "gamma"): 0.015, ("Floquet", "values"): [0.05, 0.1], ("Output", "plots"): True}
    )
    path = write_config(config, tmp_path / "written.ini")
    assert parse_config(str(path)) == config


def _melnikov_args(out):
    return ["melnikov", "--homoclinic", "--beta", "1", "--omega", "1", "--gamma", "0", "--delta", "1", "--out", str(out)]


def test_cli_melnikov_homoclinic(tmp_path):
    assert cli(_melnikov_args(tmp_path)) == 0
    summary = wr.read_json(tmp_path / "melnikov.json")
    assert summary["threshold"] == pytest.approx(5.0 * math.pi / math.sinh(math.pi))
    assert summary["persistence_predicted"] is True
    assert len(summary["zeros"]) == 2
    assert not (tmp_path / "FAILED").exists()


def test_manifest_lists_artifact_hashes(tmp_path):
    assert cli(_melnikov_args(tmp_path)) == 0
    manifest = wr.read_json(tmp_path / "manifest.json")
    assert manifest["subcommand"] == "melnikov"
    assert manifest["config"]["Model"]["delta"] == 1.0
    paths = {entry["path"] for entry in manifest["artifacts"]}
    assert paths == {"melnikov.csv", "melnikov.json"}
    for entry in manifest["artifacts"]:
        assert entry["sha1"] == wr.git_blob_hash(tmp_path / entry["path"])


def test_runs_are_deterministic(tmp_path):
    args = ["melnikov", "--subharmonic", "--delta", "0.01", "--gamma", "0.001", "--compare-closed-form"]
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli(args + ["--out", str(first)]) == 0
    assert cli(args + ["--out", str(second)]) == 0
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    assert "closed_form_discrepancy.csv" in names
    for name in names:
        if name == "manifest.json":
            continue
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_cli_solve(tmp_path, capsys):
    assert cli(["solve", "--out", str(tmp_path)]) == 0
    report = wr.read_json(tmp_path / "report.json")
    assert report["residual"] < 1e-10
    assert report["even"] is True
    assert report["orbit_error"] < 1e-6
    sol, params = wr.read_solution(tmp_path / "solution.json")
    assert sol.J == 50
    assert params.omega == 0.5
    assert (tmp_path / "profile.csv").exists()
    assert "Residual" in capsys.readouterr().out


def test_cli_branch(tmp_path):
    args = [
        "branch", "--seed-kind", "zero", "--J", "16", "--gamma", "0.05", "--lambda", "0.1",
        "--param", "delta", "--start", "0", "--end", "0.001953125", "--step", "1", "--param-scale", "0.0009765625",
        "--no-stability", "--out", str(tmp_path),
    ]  # fmt: skip
    assert cli(args) == 0
    branch = wr.read_branch(tmp_path / "branch.json")
    assert branch.status == "complete"
    assert [pt.param for pt in branch.points] == pytest.approx([0.0, 1.0 / 1024.0, 2.0 / 1024.0])
    assert len(wr.read_csv(tmp_path / "branch.csv")) == 3


def test_cli_floquet_failure_leaves_marker(tmp_path, capsys):
    assert cli(["floquet", "--p", "0.5", "--out", str(tmp_path)]) == 7
    marker = (tmp_path / "FAILED").read_text().splitlines()
    assert marker[0] == "7"
    assert (tmp_path / "manifest.json").exists()
    assert "Lattice incompatible" in capsys.readouterr().out

    # a successful rerun in the same directory removes the marker
    assert cli(_melnikov_args(tmp_path)) == 0
    assert not (tmp_path / "FAILED").exists()


def test_unexpected_error_still_writes_manifest(tmp_path, monkeypatch, capsys):
    def broken(config, out, artifacts, threads):
        artifacts.append(wr.write_json({"partial": True}, tmp_path / "partial.json"))
        raise RuntimeError("boom")

    monkeypatch.setitem(ap._RUNNERS, "solve", broken)
    assert run("solve", out=str(tmp_path)) == 99
    assert (tmp_path / "FAILED").read_text().splitlines()[0] == "99"
    manifest = wr.read_json(tmp_path / "manifest.json")
    assert manifest["subcommand"] == "solve"
    assert [entry["path"] for entry in manifest["artifacts"]] == ["partial.json"]
    assert "Unable to process the run" in capsys.readouterr().out


@pytest.mark.parametrize("fmt, name", [("csv", "spacetime.csv"), ("netcdf", "spacetime.nc")])
def test_cli_simulate(tmp_path, fmt, name):
    args = ["simulate", "--periods", "1", "--steps-per-period", "1024", "--sample-every", "64", "--format", fmt]
    assert cli(args + ["--out", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / name).exists()
    summary = wr.read_json(tmp_path / "simulation.json")
    assert summary["blowup"] is False
    assert summary["return_error"] < 1e-5
    assert wr.read_json(tmp_path / "manifest.json")["seed"] == 3


def test_run_rejects_unknown_subcommand(tmp_path):
    assert run("plot", out=str(tmp_path)) == 10


def test_autoprocess_uses_run_section(tmp_path):
    path = _write(tmp_path, "[Run]\nsubcommand = melnikov\n\n[Model]\ndelta = 0.5\n")
    out = tmp_path / "out"
    assert autoprocess(path, out=str(out)) == 0
    assert (out / "melnikov.json").exists()


def test_main_reports_missing_file(monkeypatch, capsys, tmp_path):
    monkeypatch.setattr("builtins.input", lambda prompt: str(tmp_path / "missing.ini"))
    main()
    assert "File not found!" in capsys.readouterr().out


def test_main_exits_with_run_status(monkeypatch, tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, f"[Run]\nsubcommand = melnikov\n\n[Model]\ndelta = 0.5\n\n[Output]\ndirectory = {out}\n")
    monkeypatch.setattr("builtins.input", lambda prompt: path)
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 0
    assert (out / "melnikov.csv").exists()


@pytest.mark.slow
def test_verify_passes(tmp_path):
    assert cli(["verify", "--out", str(tmp_path)]) == 0
    table = wr.read_csv(tmp_path / "verify.csv")
    assert table["passed"].all()
    assert len(table) == 21
    for name in ("period_doubling", "unstable_growth_rate", "gamma_loop_mirror_norms", "loss_stabilization"):
        assert name in set(table["check"])
