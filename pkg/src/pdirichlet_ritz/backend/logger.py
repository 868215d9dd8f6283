import logging
import os
import sys

from concurrent_log_handler import ConcurrentTimedRotatingFileHandler

from pdirichlet_ritz.backend.constants import (
    DATE_FORMAT,
    LOG_FORMAT,
    LOG_FORMAT_METRICS,
    LOG_PATH,
    LOG_PATH_APP,
    LOG_PATH_METRICS,
    LOG_REMAIN_DAYS,
)


METRICS_LOGGER = "metrics"


def _rotating_handler(path, formatter, log_level, backup_count):
    # 文件 handler（按天滚动）
    handler = ConcurrentTimedRotatingFileHandler(
        filename=path, when="midnight", interval=1, backupCount=backup_count, encoding="utf-8"
    )
    handler.suffix = "%Y-%m-%d"
    handler.setFormatter(formatter)
    handler.setLevel(log_level)
    return handler


def setup_logging(
    log_level,
    log_dir=LOG_PATH,
    log_format=LOG_FORMAT,
    date_format=DATE_FORMAT,
    backup_count=LOG_REMAIN_DAYS,
    log_path=None,
    metrics_path=None,
):
    """包 logger 输出到控制台和 pdirichlet_ritz.log，metrics logger 只写 metrics.log"""
    os.makedirs(log_dir, exist_ok=True)
    log_level = log_level.upper() if isinstance(log_level, str) else log_level
    log_path = log_path or os.path.join(log_dir, os.path.basename(LOG_PATH_APP))
    metrics_path = metrics_path or os.path.join(log_dir, os.path.basename(LOG_PATH_METRICS))

    formatter = logging.Formatter(log_format, date_format)
    # 控制台 handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(log_level)
    # 业务 logger
    buzi_logger = logging.getLogger("pdirichlet_ritz")
    buzi_logger.setLevel(log_level)
    buzi_logger.handlers.clear()
    buzi_logger.addHandler(console_handler)
    buzi_logger.addHandler(_rotating_handler(log_path, formatter, log_level, backup_count))
    # 训练指标 logger，每行一条原始记录
    metrics_logger = logging.getLogger(METRICS_LOGGER)
    metrics_logger.setLevel(logging.INFO)
    metrics_logger.propagate = False
    metrics_logger.handlers.clear()
    metrics_logger.addHandler(
        _rotating_handler(metrics_path, logging.Formatter(LOG_FORMAT_METRICS), logging.INFO, backup_count)
    )
    return buzi_logger
