"""End-to-end tests of the command-line entry point and its exit codes."""

import json

import pytest

from thermalsim import InvariantViolation
from thermalsim.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main

TINY = ["--set", "j_values=0.1", "--set", "quadrature_nodes=11"]


def run_tiny(tmp_path, *extra):
    return main(["fixpoint_sweep_j", *TINY, "--out", str(tmp_path / "run"), *extra])


def test_successful_run_writes_csv_and_manifest(tmp_path, capsys):
    assert run_tiny(tmp_path) == EXIT_OK
    out = tmp_path / "run"
    assert (out / "manifest.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "fixpoint_sweep_j"
    assert manifest["config"]["j_values"] == [0.1]
    for name, rows in manifest["files"].items():
        csv_path = out / name
        assert csv_path.exists()
        assert len(csv_path.read_text().splitlines()) == rows + 1  # header
    stdout = capsys.readouterr().out
    assert "fixpoint_sweep_j: wrote" in stdout


def test_unknown_experiment_is_config_error(tmp_path, capsys):
    assert main(["nonsense", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "unknown experiment" in capsys.readouterr().err


def test_unknown_override_key_is_config_error(tmp_path, capsys):
    code = main(["validate", "--set", "betta=1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "unknown config key" in capsys.readouterr().err


def test_malformed_override_is_config_error(tmp_path):
    assert main(["validate", "--set", "beta", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file_is_config_error(tmp_path, capsys):
    code = main(
        ["validate", "--config", str(tmp_path / "no.cfg"), "--out", str(tmp_path)]
    )
    assert code == EXIT_CONFIG
    assert "cannot read config file" in capsys.readouterr().err


def test_config_file_plus_override_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("j_values = 0.3\nquadrature_nodes = 11\n")
    out = tmp_path / "run"
    code = main(
        [
            "fixpoint_sweep_j",
            "--config",
            str(cfg),
            "--set",
            "j_values=0.1",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["j_values"] == [0.1]
    assert manifest["config"]["quadrature_nodes"] == 11


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    import thermalsim.cli as cli_module

    def explode(config, out_dir):
        raise InvariantViolation("synthetic failure")

    monkeypatch.setattr(cli_module, "run_experiment", explode)
    code = main(["validate", "--out", str(tmp_path)])
    assert code == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_refuses_to_overwrite_without_force(tmp_path, capsys):
    assert run_tiny(tmp_path) == EXIT_OK
    assert run_tiny(tmp_path) == EXIT_IO
    assert "--force" in capsys.readouterr().err
    assert run_tiny(tmp_path, "--force") == EXIT_OK


def test_seed_flag_lands_in_manifest(tmp_path):
    assert run_tiny(tmp_path, "--seed", "99") == EXIT_OK
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 99


def test_reruns_byte_identical(tmp_path):
    """Same seed, same config: every CSV byte-for-byte equal, manifest equal
    apart from the timestamp and wall-clock entries."""
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    argv = ["trajectories", "--set", "j_values=0.25", "--set", "n_traj=5",
            "--set", "n_steps=40", "--set", "record_stride=10"]
    assert main(argv + ["--out", str(out_a)]) == EXIT_OK
    assert main(argv + ["--out", str(out_b)]) == EXIT_OK
    manifest_a = json.loads((out_a / "manifest.json").read_text())
    manifest_b = json.loads((out_b / "manifest.json").read_text())
    for name in manifest_a["files"]:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    for volatile in ("timestamp", "wall_seconds"):
        manifest_a.pop(volatile)
        manifest_b.pop(volatile)
    assert manifest_a == manifest_b
