import os

from pdirichlet_ritz import APP_PATH, get_root_path


ENV_KEY_IN_OSENV = "APP_ENV"
APP_ENVS = ("dev", "test", "prod")

root_path = get_root_path() or ""
CONFIG_PATH = os.path.join(root_path, "config")
PRESET_PATH = os.path.join(CONFIG_PATH, "presets")
BASELINES_PATH = os.path.join(PRESET_PATH, "baselines.yaml")

DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LOG_PATH = os.path.join(APP_PATH, "logs")
LOG_PATH_APP = os.path.join(LOG_PATH, "pdirichlet_ritz.log")
LOG_PATH_METRICS = os.path.join(LOG_PATH, "metrics.log")
LOG_FORMAT = (
    "%(asctime)s | %(levelname)-8s | pid=%(process)d | tid=%(thread)d | %(name)s.%(funcName)s:%(lineno)d | %(message)s"
)
LOG_FORMAT_METRICS = "%(message)s"
LOG_REMAIN_DAYS = 99
LOG_LEVEL_DEBUG = "debug"
LOG_LEVEL_INFO = "info"
LOG_LEVEL_ERROR = "error"

RUNS_PATH = os.path.join(APP_PATH, "runs")

EXIT_CODE_OK = 0
EXIT_CODE_CONFIG_ERROR = 2
EXIT_CODE_NUMERIC_FAILURE = 3

# 运行产物文件名
MANIFEST_FILE = "manifest.json"
LOSS_FILE = "loss.csv"
ERRORS_FILE = "errors.csv"
ERRORS_AGGREGATE_FILE = "errors.json"
SLICES_FILE = "slices.csv"
CHECKPOINT_AUDIT_FILE = "checkpoints.csv"
CHECKPOINT_DIR = "checkpoints"
METRICS_TEXTFILE = "metrics.prom"

CSV_FLOAT_FORMAT = "%.17g"
CSV_LINE_TERMINATOR = "\n"

CHECKPOINT_LAYOUT_VERSION = 1

# numerics
FD_GRADIENT_EPSILON = 1e-10
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
ARMIJO_C = 1e-4
GAUSS_LEGENDRE_ORDER = 32
ADAM_LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
