import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError

from pdirichlet_ritz.backend.constants import APP_ENVS, BASELINES_PATH, ENV_KEY_IN_OSENV, PRESET_PATH
from pdirichlet_ritz.backend.exceptions import ConfigError
from pdirichlet_ritz.backend.models import RunConfig
from pdirichlet_ritz.backend.utils.config_validation_handler import format_validation_errors, render_errors


logger = logging.getLogger(__name__)


class ConfigManager:
    _instance = None
    _initialized = False
    _config = None

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
        return cls._instance

    def __init__(self, config_data: Dict[str, Any] = None):
        if not self._initialized:
            self._config = config_data or {}
            self._initialized = True

    @classmethod
    def get_instance(cls) -> 'ConfigManager':
        """获取单例实例"""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    @classmethod
    def init_config(cls, env: str = None):
        instance = cls.get_instance()
        instance.from_yaml_file(cls._get_config_path_by_env(env))
        return instance

    @classmethod
    def from_yaml_file(cls, file_path: Union[str, Path]) -> 'ConfigManager':
        """从YAML文件加载配置并初始化单例"""
        config_data = cls._load_yaml_config(file_path)
        instance = cls.get_instance()
        instance._config = config_data or {}
        instance._initialized = True
        return instance

    @staticmethod
    def _load_yaml_config(file_path: Union[str, Path]) -> Dict[str, Any]:
        """加载 YAML 配置文件"""
        path = Path(file_path) if isinstance(file_path, str) else file_path
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")

        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)

    @staticmethod
    def _get_config_path_by_env(env: str) -> Path:
        """根据环境获取配置文件路径"""
        if env is None:
            env = os.environ.get(ENV_KEY_IN_OSENV, "dev")
        if env not in APP_ENVS:
            raise ValueError(f"Env value must in {list(APP_ENVS)}, current env value is {env}")
        return Path(__file__).parent.parent / "config" / f"config_{env}.yaml"

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        """获取配置值，支持字典和列表的嵌套访问"""
        keys = key.lower().split(".")
        value = self._config

        try:
            for k in keys:
                if isinstance(value, list):
                    # 如果是列表，尝试将 k 转换为整数索引
                    index = int(k)
                    value = value[index]
                else:
                    value = value[k]
            return value
        except (KeyError, TypeError, ValueError, IndexError):
            return default


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------
def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """YAML 或 JSON 实验配置；manifest.json 则取其中的 config 回显"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(data).__name__}")
    if "config" in data and "experiment" not in data:
        data = data["config"]
    return data


def validate_run_config(data: Dict[str, Any], source: str = "<memory>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        errors = format_validation_errors(e.errors())
        logger.error(f"Invalid run config {source}:\n{render_errors(errors)}")
        raise ConfigError(f"Invalid run config {source}: {len(errors)} error(s)\n{render_errors(errors)}", errors) from e


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """读取并校验实验配置，``overrides`` 是点分路径到值的映射，在校验前写入

    用法::

        run = load_run_config("config/presets/vexp_p2_desk.yaml", {"seeds.init": 3, "output_dir": "/tmp/r"})
    """
    data = copy.deepcopy(read_config_file(path))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[leaf] = value
    return validate_run_config(data, str(path))


def preset_path(name: str) -> Path:
    """presets/ 下的配置文件，``name`` 可带可不带 .yaml"""
    path = Path(PRESET_PATH) / (name if name.endswith((".yaml", ".yml", ".json")) else f"{name}.yaml")
    if not path.is_file():
        raise FileNotFoundError(f"No preset named {name} under {PRESET_PATH}")
    return path


def load_baselines(path: Union[str, Path] = BASELINES_PATH) -> Dict[str, Any]:
    """回归基线（sandwich/lemma 包络常数 C(p) 等）"""
    return ConfigManager._load_yaml_config(path) or {}


def baseline_constant(baselines: Dict[str, Any], section: str, p: float, default: Optional[float] = None) -> Optional[float]:
    """``baselines[section][p]``，键可以是 2、2.0 或 "2.0"，都没有时取 section 的 ``default``"""
    table = baselines.get(section) or {}
    for key, value in table.items():
        try:
            if float(key) == float(p):
                return float(value)
        except (TypeError, ValueError):
            continue
    return float(table["default"]) if "default" in table else default
