import orjson
import pytest
import yaml

from pdirichlet_ritz.backend.config import (
    ConfigManager,
    baseline_constant,
    load_baselines,
    load_run_config,
    preset_path,
    read_config_file,
    validate_run_config,
)
from pdirichlet_ritz.backend.exceptions import ConfigError
from pdirichlet_ritz.backend.utils.config_validation_handler import format_validation_errors, render_errors


PRESETS = [
    "vrhs", "vexp", "vdom", "mixed7d", "mixed7d_smoke", "vrhs_desk", "vdom_desk", "vexp_p2_desk",
    "sandwich", "lemmas", "penalty_rate", "fd_oracle",
]


@pytest.fixture(scope="module", autouse=True)
def setup_config():
    """加载 test 环境配置。"""
    ConfigManager.init_config("test")
    yield


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data, allow_unicode=True), encoding="utf-8")
    return path


class TestConfigManager:
    def test_test_environment(self):
        config = ConfigManager.get_instance()
        assert config.get("newton.tol") == 1e-10
        assert config.get("training.log_every") == 100
        assert config.get("runs.output_root") is None

    def test_missing_key_default(self):
        assert ConfigManager.get_instance().get("no.such.key", 7) == 7
        assert ConfigManager.get_instance().get("no.such.key") is None

    def test_unknown_environment(self):
        with pytest.raises(ValueError):
            ConfigManager._get_config_path_by_env("staging")

    def test_singleton(self):
        assert ConfigManager() is ConfigManager.get_instance()


class TestRunConfigFiles:
    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_validate(self, name):
        run = load_run_config(preset_path(name))
        assert run.experiment

    def test_preset_name_with_suffix(self):
        assert preset_path("vexp.yaml") == preset_path("vexp")

    def test_unknown_preset(self):
        with pytest.raises(FileNotFoundError):
            preset_path("no_such_preset")

    def test_overrides_are_applied_before_validation(self):
        run = load_run_config(preset_path("vexp_p2_desk"), {"seeds.init": 3, "schedule.steps": 0, "seeds.quadrature": None})
        assert run.seeds.init == 3
        assert run.schedule.steps == 0

    def test_override_is_validated(self):
        with pytest.raises(ConfigError) as excinfo:
            load_run_config(preset_path("vexp_p2_desk"), {"schedule.steps": -1})
        assert any("steps" in e["field"] for e in excinfo.value.errors)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(tmp_path / "absent.yaml")

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("problem: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_not_a_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(write_yaml(tmp_path / "list.yaml", [1, 2, 3]))

    def test_manifest_config_echo(self, tmp_path):
        """manifest.json 中的 config 回显可直接重跑"""
        config = read_config_file(preset_path("vexp_p2_desk"))
        path = tmp_path / "manifest.json"
        path.write_bytes(orjson.dumps({"status": "ok", "config": config}))
        assert load_run_config(path) == load_run_config(preset_path("vexp_p2_desk"))

    def test_unknown_field_is_rejected(self, tmp_path):
        data = read_config_file(preset_path("vexp_p2_desk"))
        data["schedule"]["stepz"] = 10
        with pytest.raises(ConfigError) as excinfo:
            load_run_config(write_yaml(tmp_path / "typo.yaml", data))
        assert excinfo.value.errors

    def test_config_error_is_a_value_error(self):
        with pytest.raises(ValueError):
            validate_run_config({"experiment": "x"})


class TestValidationErrors:
    def test_format(self):
        errors = format_validation_errors([{"loc": ("schedule", "steps"), "msg": "bad", "type": "int", "input": -1}])
        assert errors == [
            {"field": "schedule → steps", "message": "bad", "type": "int", "input_type": "int", "input_preview": "-1"}
        ]

    def test_root_and_long_input(self):
        errors = format_validation_errors([{"loc": (), "msg": "bad", "type": "t", "input": "a" * 300}])
        assert errors[0]["field"] == "<root>"
        assert errors[0]["input_preview"] == "a" * 200 + "..."

    def test_render(self):
        errors = format_validation_errors([{"loc": ("a",), "msg": "m", "type": "t", "input": 1}])
        assert render_errors(errors) == "  a: m (input_type=int, input=1)"


class TestBaselines:
    def test_shipped_baselines(self):
        baselines = load_baselines()
        assert baseline_constant(baselines, "sandwich", 2.0) == 2.0
        assert baseline_constant(baselines, "sandwich", 3.0) == 3.3
        assert baseline_constant(baselines, "lemmas", 4.0) == 4.5
        assert baseline_constant(baselines, "lemmas", 5.0) == 10.0
        assert baseline_constant(baselines, "cea", 4.0) == 20.0

    @pytest.mark.parametrize("key", [2, 2.0, "2.0", "2"])
    def test_key_forms(self, key):
        assert baseline_constant({"s": {key: 5}}, "s", 2.0) == 5.0

    def test_default(self):
        assert baseline_constant({"s": {"default": 3}}, "s", 7.0) == 3.0
        assert baseline_constant({}, "s", 7.0, default=1.5) == 1.5
        assert baseline_constant({}, "s", 7.0) is None
