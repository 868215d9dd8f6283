import numpy as np
import orjson
import pandas as pd
import pytest
import yaml

from pdirichlet_ritz.backend.config import ConfigManager, load_run_config, preset_path, read_config_file
from pdirichlet_ritz.backend.constants import (
    EXIT_CODE_CONFIG_ERROR,
    EXIT_CODE_NUMERIC_FAILURE,
    EXIT_CODE_OK,
)
from pdirichlet_ritz.backend.exceptions import ConfigError, TrainingDivergedError
from pdirichlet_ritz.backend.startup import main, report_runs, run_experiment


DESK_OVERRIDES = {
    "quadrature.interior.axes": [[-1.0, 1.0, 50]],
    "evaluation.spatial.axes": [[-1.0, 1.0, 50]],
    "schedule.steps": 20,
    "schedule.checkpoint_every": 10,
    "evaluation.gradient_check_coordinates": 3,
}


@pytest.fixture(scope="module", autouse=True)
def setup_config():
    """加载 test 环境配置。"""
    ConfigManager.init_config("test")
    yield


def manifest_of(run_dir):
    return orjson.loads((run_dir / "manifest.json").read_bytes())


def write_config(path, data):
    path.write_text(yaml.safe_dump(data, allow_unicode=True), encoding="utf-8")
    return path


def diverging_config():
    """f = 1/x 在中点 x = 0 处无穷大"""
    return {
        "experiment": "vexp",
        "problem": {"variant": "fixed_p", "p": 2.0, "rhs": "1/x"},
        "arch": {"hidden_widths": [4], "activation": "gelu"},
        "quadrature": {"interior": {"kind": "tensor", "axes": [[-1.0, 1.0, 3]]}},
        "schedule": {"steps": 2},
    }


class TestTrainingRun:
    def test_desk_run_artifacts(self, tmp_path):
        manifest = run_experiment(load_run_config(preset_path("vexp_p2_desk"), DESK_OVERRIDES), tmp_path)
        assert manifest["status"] == "ok"
        assert manifest_of(tmp_path)["status"] == "ok"
        for name in ("loss.csv", "checkpoints.csv", "checkpoints", "errors.csv", "errors.json", "slices.csv", "metrics.prom"):
            assert name in manifest["artifacts"]
            assert (tmp_path / name).exists()
        assert (tmp_path / "checkpoints" / "step_0000010.bin").is_file()
        assert (tmp_path / "checkpoints" / "step_0000020.json").is_file()

        summary = manifest["summary"]
        assert summary["steps"] == 20
        assert np.isfinite(summary["final_loss"])
        assert np.isfinite(summary["gradient_check_max_rel"])
        assert isinstance(summary["cea_holds"], bool)
        assert summary["lp_rel"] is not None
        assert manifest["param_count"] == 865

        loss = pd.read_csv(tmp_path / "loss.csv")
        assert list(loss.columns) == ["step", "phase", "loss"]
        assert len(loss) == 20
        audit = pd.read_csv(tmp_path / "checkpoints.csv")
        assert audit["step"].tolist() == [10, 20]
        slices = pd.read_csv(tmp_path / "slices.csv")
        assert list(slices.columns) == ["x", "u_theta", "u_ref", "du_theta_x", "du_ref_x", "abs_error", "grad_error"]
        assert len(slices) == 50

    def test_same_config_same_losses(self, tmp_path):
        """同一配置两次运行，loss.csv 与 digest 一致"""
        run = load_run_config(preset_path("vexp_p2_desk"), {**DESK_OVERRIDES, "schedule.steps": 5})
        first = run_experiment(run, tmp_path / "a")
        second = run_experiment(run, tmp_path / "b")
        assert first["config_digest"] == second["config_digest"]
        assert (tmp_path / "a" / "loss.csv").read_bytes() == (tmp_path / "b" / "loss.csv").read_bytes()

    def test_zero_steps_with_parameters(self, tmp_path):
        overrides = {
            "quadrature.interior.axes": [[0.0, 6.0, 4], [-1.0, 1.0, 20]],
            "schedule.steps": 0,
            "evaluation.slices": [[2.0], [3.0]],
        }
        manifest = run_experiment(load_run_config(preset_path("vrhs"), overrides), tmp_path)
        assert manifest["status"] == "ok"
        assert manifest["summary"]["steps"] == 0
        assert manifest["summary"]["final_loss"] == manifest["summary"]["initial_loss"]
        slices = pd.read_csv(tmp_path / "slices.csv")
        assert len(slices) == 40
        assert sorted(slices["p"].unique().tolist()) == [2.0, 3.0]
        assert len(pd.read_csv(tmp_path / "errors.csv")) == 2

    def test_divergence_is_recorded(self, tmp_path):
        run = load_run_config(write_config(tmp_path / "diverging.yaml", diverging_config()))
        with pytest.raises(TrainingDivergedError):
            run_experiment(run, tmp_path / "out")
        manifest = manifest_of(tmp_path / "out")
        assert manifest["status"] == "numeric_failure"
        assert "error" in manifest

    def test_inconsistent_config(self, tmp_path):
        data = diverging_config()
        data["problem"]["rhs"] = "1 + y"
        run = load_run_config(write_config(tmp_path / "bad_rhs.yaml", data))
        with pytest.raises(ConfigError):
            run_experiment(run, tmp_path / "out")
        assert manifest_of(tmp_path / "out")["status"] == "config_error"


class TestStudies:
    def test_sandwich(self, tmp_path):
        """p = 2 时能量差恰为 ½ρ_F²"""
        overrides = {"study.p_values": [2.0], "study.n_points": 1000, "study.n_perturbations": 10}
        manifest = run_experiment(load_run_config(preset_path("sandwich"), overrides), tmp_path)
        summary = manifest["summary"]
        assert summary["min_ratio"] == pytest.approx(0.5, abs=1e-3)
        assert summary["max_ratio"] == pytest.approx(0.5, abs=1e-3)
        assert summary["within_envelope"] is True
        assert len(pd.read_csv(tmp_path / "sandwich.csv")) == 10

    def test_lemmas(self, tmp_path):
        overrides = {
            "study.p_values": [2.0], "study.dimensions": [1, 2], "study.n_samples": 2000,
            "study.n_points": 200, "study.n_perturbations": 3,
        }
        manifest = run_experiment(load_run_config(preset_path("lemmas"), overrides), tmp_path)
        summary = manifest["summary"]
        assert summary["min_ratio"] == pytest.approx(0.5, rel=1e-10)
        assert summary["max_ratio"] == pytest.approx(1.0, rel=1e-10)
        assert summary["within_envelope"] is True
        assert len(pd.read_csv(tmp_path / "lemmas.csv")) == 6
        assert len(pd.read_csv(tmp_path / "relations.csv")) == 3

    def test_penalty_rate(self, tmp_path):
        overrides = {"study.p_values": [2.0], "study.lambdas": [1.0, 10.0, 100.0], "study.mesh_sizes": [100]}
        manifest = run_experiment(load_run_config(preset_path("penalty_rate"), overrides), tmp_path)
        assert manifest["summary"]["monotone"] is True
        assert manifest["summary"]["max_slope"] == pytest.approx(-2.0, abs=1e-3)
        table = pd.read_csv(tmp_path / "penalty_rate.csv")
        np.testing.assert_allclose(table["boundary_norm"], [2.0, 0.02, 2e-4], rtol=1e-3)

    def test_fd_oracle(self, tmp_path):
        overrides = {"study.p_values": [2.0], "study.mesh_sizes": [50, 100, 200]}
        manifest = run_experiment(load_run_config(preset_path("fd_oracle"), overrides), tmp_path)
        assert manifest["summary"]["min_order"] >= 1.9
        assert manifest["summary"]["finest_max_error"] <= 1e-4
        assert "fd_solution.csv" in manifest["artifacts"]


class TestReport:
    def test_report_merges_manifests(self, tmp_path):
        overrides = {"study.p_values": [2.0], "study.mesh_sizes": [50, 100]}
        for seed in (0, 1):
            run = load_run_config(preset_path("fd_oracle"), {**overrides, "seeds.init": seed})
            run_experiment(run, tmp_path / f"run{seed}")
        (tmp_path / "empty").mkdir()
        frame = report_runs([tmp_path / "run0", tmp_path / "run1", tmp_path / "empty"], tmp_path / "report.csv")
        assert len(frame) == 2
        assert frame["seed_init"].tolist() == [0, 1]
        assert set(frame["status"]) == {"ok"}
        assert "min_order" in frame.columns
        assert len(pd.read_csv(tmp_path / "report.csv")) == 2


class TestMain:
    def test_ok(self, tmp_path):
        code = main(["--env", "test", "run", str(preset_path("fd_oracle")), "--out", str(tmp_path / "run"), "--seed", "4"])
        assert code == EXIT_CODE_OK
        manifest = manifest_of(tmp_path / "run")
        assert manifest["seeds"] == {"init": 4, "quadrature": 4}

    def test_rerun_from_manifest(self, tmp_path):
        assert main(["--env", "test", "run", str(preset_path("fd_oracle")), "--out", str(tmp_path / "a")]) == EXIT_CODE_OK
        assert main(["--env", "test", "run", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == EXIT_CODE_OK
        assert manifest_of(tmp_path / "a")["config_digest"] != ""
        assert read_config_file(tmp_path / "b" / "manifest.json")["output_dir"] == str(tmp_path / "b")

    def test_config_error(self, tmp_path):
        data = diverging_config()
        data["schedule"]["steps"] = -1
        code = main(["--env", "test", "run", str(write_config(tmp_path / "bad.yaml", data))])
        assert code == EXIT_CODE_CONFIG_ERROR

    def test_missing_config_file(self, tmp_path):
        assert main(["--env", "test", "run", str(tmp_path / "absent.yaml")]) == EXIT_CODE_CONFIG_ERROR

    def test_argument_rejected_during_the_run(self, tmp_path):
        """vexp 在 𝓹 = 1 处无定义，运行到参考解时才报错"""
        data = read_config_file(preset_path("fd_oracle"))
        data["study"].update({"p_values": [2.0], "mesh_sizes": [20], "reference": {"family": "vexp", "parameter": 1.0}})
        path = write_config(tmp_path / "vexp_at_one.yaml", data)
        code = main(["--env", "test", "run", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_CODE_CONFIG_ERROR
        manifest = manifest_of(tmp_path / "out")
        assert manifest["status"] == "config_error"
        assert "error" in manifest

    def test_numeric_failure(self, tmp_path):
        path = write_config(tmp_path / "diverging.yaml", diverging_config())
        code = main(["--env", "test", "run", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_CODE_NUMERIC_FAILURE
        assert manifest_of(tmp_path / "out")["status"] == "numeric_failure"

    def test_report(self, tmp_path):
        main(["--env", "test", "run", str(preset_path("fd_oracle")), "--out", str(tmp_path / "run")])
        code = main(["--env", "test", "report", str(tmp_path / "run"), "--out", str(tmp_path / "report.csv")])
        assert code == EXIT_CODE_OK
        frame = pd.read_csv(tmp_path / "report.csv")
        assert list(frame.columns[:3]) == ["run_dir", "experiment", "config_digest"]
        assert frame["experiment"].tolist() == ["fd_oracle"]
