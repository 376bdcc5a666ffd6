# src/utils/logger.py
import logging
import os
import platform
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import scipy


class RunLogger:
    def __init__(self, log_dir: str = "logs/cli_runs", prefix: str = "run"):
        self.log_dir = Path(log_dir)

        # 创建日志文件名（使用时间戳，含微秒保证唯一）
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        self.log_file_path = self.log_dir / f"{prefix}_{timestamp}.log"
        self.log_file_path.parent.mkdir(parents=True, exist_ok=True)

        # 不向根 logger 传播，避免控制台重复输出
        self.logger = logging.getLogger(f"RunLogger_{prefix}_{timestamp}")
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        if not self.logger.handlers:
            file_handler = logging.FileHandler(self.log_file_path, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)

            console_handler = logging.StreamHandler(sys.stdout)
            console_handler.setLevel(logging.INFO)

            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            file_handler.setFormatter(formatter)
            console_handler.setFormatter(formatter)

            self.logger.addHandler(file_handler)
            self.logger.addHandler(console_handler)

        self.logger.info(f"Logger initialized. Log file: {self.log_file_path.resolve()}")

    def log_environment(self):
        """记录环境信息"""
        self.logger.info("=== 环境信息 ===")
        self.logger.info(f"当前工作目录: {os.getcwd()}")
        self.logger.info(f"Python版本: {sys.version.split()[0]}")
        self.logger.info(f"numpy {np.__version__}, scipy {scipy.__version__}")
        self.logger.info(f"操作系统: {platform.platform()}")

    def log_command(self, name: str, args: dict):
        """记录命令及其参数"""
        self.logger.info(f"=== 命令: {name} ===")
        for key, value in sorted(args.items()):
            self.logger.debug(f"  {key} = {value!r}")

    def log_model(self, model):
        """记录模型文件摘要"""
        self.logger.info(f"模型: n={model.n}, hbar={model.hbar}, beta={model.beta}, regime={model.regime}")
        self.logger.debug(f"模型内容: {model.model_dump_json()}")

    def log_verdict(self, name: str, passed: bool, residual: float):
        """记录一项审计结论及其残差"""
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}: residual {residual:.3e}"
        if passed:
            self.logger.info(line)
        else:
            self.logger.warning(line)

    def log_output(self, path):
        """记录输出文件位置"""
        self.logger.info(f"输出已写入: {Path(path).resolve()}")

    def log_error(self, error: str, exc_info: bool = False):
        """记录错误信息"""
        self.logger.error(f"ERROR: {error}", exc_info=exc_info)

    def log_warning(self, warning: str, exc_info: bool = False):
        """记录警告信息"""
        self.logger.warning(f"WARNING: {warning}", exc_info=exc_info)

    def log_debug(self, message: str):
        self.logger.debug(message)

    def log_info(self, message: str):
        self.logger.info(message)

    def close(self):
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)
