import json

import numpy as np
import pytest

from fprom import (
    CoefficientModel,
    Grid,
    RomArtifact,
    TransformSpec,
    drift_diffusion_density,
    gaussian_density,
    load_artifact,
    read_density_csv,
    save_artifact,
    write_density_csv,
)
from fprom._version import __version__
from fprom.cli import main
from fprom.pipeline import ENV_OUTPUT_DIR


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Keep default outputs away from the repository checkout."""
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """Simulation config, simulated ensemble, and run configs on disk."""
    root = tmp_path_factory.mktemp("cli_inputs")
    sim = {
        "drift": {"kind": "constant", "params": [1.0]},
        "noise": {"kind": "constant", "params": [1.0]},
        "n_trajectories": 400,
        "dt": 0.01,
        "horizon": 1.0,
        "stride": 25,
        "x0": {"kind": "normal", "params": [0.0, 0.3]},
        "seed": 11,
    }
    (root / "sim.json").write_text(json.dumps(sim))
    code = main(
        [
            "simulate",
            "--config",
            str(root / "sim.json"),
            "--output",
            str(root / "ensemble.csv"),
        ]
    )
    assert code == 0
    run = {
        "input": {"mode": "ensemble", "path": "ensemble.csv"},
        "grid": {"x_min": -5.0, "x_max": 6.0, "n_points": 129},
        "split": {"train_end": 0.5},
        "solver": {"dt": 0.05},
        "method": "moment_regression",
        "optimizer": "nelder_mead",
        "budget": 60,
        "seed": 3,
    }
    (root / "run.json").write_text(json.dumps(run))
    return root


class TestVersionAndParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip() == f"fprom {__version__}"

    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestSimulate:
    def test_writes_default_name_in_output_dir(self, cli_workspace, tmp_path, capsys):
        out = tmp_path / "sims"
        code = main(
            [
                "simulate",
                "--config",
                str(cli_workspace / "sim.json"),
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "ensemble.csv").exists()
        assert "wrote" in capsys.readouterr().out

    def test_seed_override_changes_samples(self, cli_workspace, tmp_path):
        base = cli_workspace / "ensemble.csv"
        args = ["simulate", "--config", str(cli_workspace / "sim.json")]
        assert main(args + ["--output", str(tmp_path / "same.csv")]) == 0
        assert main(args + ["--output", str(tmp_path / "other.csv"), "--seed", "99"]) == 0
        same = (tmp_path / "same.csv").read_bytes()
        assert same == base.read_bytes()
        assert same != (tmp_path / "other.csv").read_bytes()

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        path = tmp_path / "sim.json"
        path.write_text('{"drift": 1, "volatility": 2}')
        assert main(["simulate", "--config", str(path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2
        assert "error:" in capsys.readouterr().err


class TestEstimate:
    def test_writes_report(self, cli_workspace, tmp_path, capsys):
        out = tmp_path / "est"
        code = main(
            [
                "estimate",
                "--config",
                str(cli_workspace / "run.json"),
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        report = (out / "estimate_report.txt").read_text()
        assert "drift_poly=" in report
        assert "n_training_times=3" in report
        assert "drift_poly=" in capsys.readouterr().out

    def test_rejects_density_inputs(self, tmp_path, capsys):
        grid = Grid(-8.0, 8.0, 129)
        write_density_csv(gaussian_density(grid, 0.0, 1.0, 1.0), tmp_path / "d0.csv")
        write_density_csv(gaussian_density(grid, 0.0, 2.0, 2.0), tmp_path / "d1.csv")
        (tmp_path / "manifest.csv").write_text("1.0,d0.csv\n2.0,d1.csv\n")
        raw = {
            "input": {"mode": "densities", "path": "manifest.csv"},
            "grid": {"x_min": -8.0, "x_max": 8.0, "n_points": 129},
            "split": {"train_end": 1.0},
            "solver": {"dt": 0.05},
        }
        (tmp_path / "run.json").write_text(json.dumps(raw))
        assert main(["estimate", "--config", str(tmp_path / "run.json")]) == 4
        assert "ensemble" in capsys.readouterr().err


class TestTrainAndCalibrate:
    def test_train_writes_artifact(self, cli_workspace, tmp_path, capsys):
        out = tmp_path / "trained"
        code = main(
            [
                "train",
                "--config",
                str(cli_workspace / "run.json"),
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        artifact = load_artifact(out / "artifact.json")
        assert artifact.method == "moment_regression"
        assert (out / "run_report.txt").exists()
        stdout = capsys.readouterr().out
        assert "artifact written to" in stdout
        assert "loss=" in stdout

    def test_calibrate_alias_forces_loss_minimization(
        self, cli_workspace, tmp_path
    ):
        out = tmp_path / "calibrated"
        code = main(
            [
                "calibrate",
                "--config",
                str(cli_workspace / "run.json"),
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        artifact = load_artifact(out / "artifact.json")
        assert artifact.method == "loss_minimization"
        assert "n_evaluations=" in (out / "run_report.txt").read_text()

    def test_unknown_config_key_exits_2(self, cli_workspace, tmp_path, capsys):
        raw = json.loads((cli_workspace / "run.json").read_text())
        raw["mystery"] = 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        assert main(["train", "--config", str(path)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_off_axis_train_end_exits_4(self, cli_workspace, tmp_path, capsys):
        raw = json.loads((cli_workspace / "run.json").read_text())
        raw["split"] = {"train_end": 0.4}
        raw["input"]["path"] = str(cli_workspace / "ensemble.csv")
        path = tmp_path / "off.json"
        path.write_text(json.dumps(raw))
        assert main(["train", "--config", str(path)]) == 4
        assert "time axis" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(cli_workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained_cli")
    code = main(
        ["train", "--config", str(cli_workspace / "run.json"), "--output-dir", str(out)]
    )
    assert code == 0
    return out / "artifact.json"


class TestPredictAndValidate:
    def test_predict_writes_densities(self, trained, tmp_path, capsys):
        out = tmp_path / "pred"
        code = main(
            [
                "predict",
                "--artifact",
                str(trained),
                "--horizon",
                "1.0",
                "--times",
                "0.75,1.0",
                "--dt",
                "0.05",
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "predicted_manifest.csv").exists()
        assert (out / "predicted_0001.csv").exists()
        field = read_density_csv(out / "predicted_0000.csv", time_stamp=0.75)
        assert field.mass == pytest.approx(1.0, abs=1e-9)
        assert "wrote 2 densities" in capsys.readouterr().out

    def test_predict_horizon_inside_training_exits_4(self, trained, capsys):
        code = main(
            [
                "predict",
                "--artifact",
                str(trained),
                "--horizon",
                "0.5",
                "--times",
                "0.5",
                "--dt",
                "0.05",
            ]
        )
        assert code == 4
        assert "beyond" in capsys.readouterr().err

    def test_predict_missing_artifact_exits_2(self, tmp_path, capsys):
        code = main(
            [
                "predict",
                "--artifact",
                str(tmp_path / "nope.json"),
                "--horizon",
                "1.0",
                "--times",
                "1.0",
                "--dt",
                "0.05",
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_predict_divergence_exits_3(self, tmp_path, capsys):
        grid = Grid(-6.0, 6.0, 129)
        artifact = RomArtifact(
            grid=grid,
            model=CoefficientModel(drift_poly=(1.0,), diff_poly=(0.0,)),
            transform=TransformSpec("identity"),
            initial_density=gaussian_density(grid, 0.0, 1.0, 1.0),
            train_window=(0.5, 1.0),
            method="loss_minimization",
            loss=0.0,
            seed=0,
        )
        save_artifact(artifact, tmp_path / "artifact.json")
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(
                [
                    "predict",
                    "--artifact",
                    str(tmp_path / "artifact.json"),
                    "--horizon",
                    "1e80",
                    "--times",
                    "1e80",
                    "--dt",
                    "1e80",
                    "--integrator",
                    "explicit_rk4",
                ]
            )
        assert code == 3
        assert "diverged" in capsys.readouterr().err

    def test_validate_writes_metrics(self, trained, cli_workspace, tmp_path, capsys):
        out = tmp_path / "metrics"
        code = main(
            [
                "validate",
                "--artifact",
                str(trained),
                "--config",
                str(cli_workspace / "run.json"),
                "--output-dir",
                str(out),
            ]
        )
        assert code == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == "time,kl,l1"
        assert lines[-1].startswith("final,")
        stdout = capsys.readouterr().out
        assert "metrics written to" in stdout
        assert "final t=" in stdout


class TestOracle:
    def test_f3_matches_direct_evaluation(self, tmp_path):
        out = tmp_path / "f3.csv"
        code = main(
            [
                "oracle",
                "--kind",
                "f3",
                "--time",
                "2.0",
                "--mu",
                "1.0",
                "--diffusion",
                "0.5",
                "--x-min",
                "-10.0",
                "--x-max",
                "20.0",
                "--n-points",
                "129",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        direct = tmp_path / "direct.csv"
        write_density_csv(
            drift_diffusion_density(Grid(-10.0, 20.0, 129), 2.0, 1.0, 0.5), direct
        )
        assert out.read_bytes() == direct.read_bytes()

    def test_f1_default_name(self, tmp_path, capsys):
        code = main(
            [
                "oracle",
                "--kind",
                "f1",
                "--time",
                "1.0",
                "--diffusion",
                "0.5",
                "--x-min",
                "-8.0",
                "--x-max",
                "8.0",
                "--n-points",
                "65",
                "--output-dir",
                str(tmp_path / "oracles"),
            ]
        )
        assert code == 0
        assert (tmp_path / "oracles" / "oracle_f1.csv").exists()
        assert "wrote" in capsys.readouterr().out

    def test_f2_missing_parameter_exits_4(self, capsys):
        code = main(
            [
                "oracle",
                "--kind",
                "f2",
                "--time",
                "1.0",
                "--mu",
                "0.5",
                "--x-min",
                "-8.0",
                "--x-max",
                "8.0",
                "--n-points",
                "65",
            ]
        )
        assert code == 4
        assert "sigma2" in capsys.readouterr().err
