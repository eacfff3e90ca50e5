import datetime
import logging
import os
import time
from rich import print
from pathlib import Path

LOGGER = logging.getLogger()
LOGS_ENV_VAR = "SPECLAB_LOGS_DIR"
SECONDS_PER_DAY = 86400


def logs_dir() -> Path:
    """SPECLAB_LOGS_DIR when set, otherwise logs/ at the repository root."""

    override = os.environ.get(LOGS_ENV_VAR)
    return Path(override) if override else Path(__file__).resolve().parents[2] / "logs"


class CustomFormatter(logging.Formatter):
    """Console formatter: rich markup per level and a capitalised first letter."""

    LEVEL_STYLES = {
        logging.DEBUG: "[grey]",
        logging.INFO: "[steel_blue]",
        logging.WARNING: "[orange3 bold]",
        logging.ERROR: "[red3 bold]",
        logging.CRITICAL: "[deep_pink2 bold]",
    }

    def format(self, record):
        if isinstance(record.msg, str) and record.msg:
            record.msg = record.msg[0].upper() + record.msg[1:]
        style = self.LEVEL_STYLES.get(record.levelno, "")
        return logging.Formatter(style + '%(message)s').format(record)


class LoggingConfigs(object):

    @staticmethod
    def logging_configs(util_name: str, console_level: int = logging.INFO) -> dict:
        """dictConfig for one experiment script: a dated debug log file plus a rich console handler.

        Args:
            util_name (str): Name of the experiment script, used for the log file name.
            console_level (int): Lowest level shown on the console.

        """

        directory = logs_dir()
        directory.mkdir(parents=True, exist_ok=True)
        log_file = directory / f"{util_name}-{datetime.date.today()}.log"

        return {
            'version': 1,
            'disable_existing_loggers': False,
            'formatters': {
                'file': {'format': '%(asctime)s %(levelname)-8s %(name)s: %(message)s'},
                'console': {'()': 'lib.helpers.logs.CustomFormatter'},
            },
            'handlers': {
                'file': {'class': 'logging.FileHandler', 'formatter': 'file', 'level': logging.DEBUG,
                         'filename': str(log_file), 'encoding': 'utf-8'},
                'console': {'class': 'rich.logging.RichHandler', 'formatter': 'console', 'level': console_level,
                            'show_path': False, 'omit_repeated_times': False, 'markup': True,
                            'rich_tracebacks': True},
            },
            'root': {'handlers': ['file', 'console'], 'level': logging.NOTSET},
        }


class LogHelper(object):

    @staticmethod
    def banner():
        font = f"""

            ███████╗██████╗ ███████╗ ██████╗    ██╗      █████╗ ██████╗
            ██╔════╝██╔══██╗██╔════╝██╔════╝    ██║     ██╔══██╗██╔══██╗
            ███████╗██████╔╝█████╗  ██║         ██║     ███████║██████╔╝
            ╚════██║██╔═══╝ ██╔══╝  ██║         ██║     ██╔══██║██╔══██╗
            ███████║██║     ███████╗╚██████╗    ███████╗██║  ██║██████╔╝
            ╚══════╝╚═╝     ╚══════╝ ╚═════╝    ╚══════╝╚═╝  ╚═╝╚═════╝

        """
        print(f"[dodger_blue2]{font}")

    @staticmethod
    def split_message(message: str, level: int = logging.INFO):
        """Log a rendered table one non-empty line at a time."""

        for line in filter(None, message.splitlines()):
            LOGGER.log(level, line)


class LogRotater(object):

    @staticmethod
    def rotate_logs(retention_period: int) -> int:
        """Delete *.log files older than retention_period days; returns how many were removed."""

        directory = logs_dir()
        if not directory.is_dir():
            return 0
        cutoff = time.time() - retention_period * SECONDS_PER_DAY
        removed = 0
        for log in directory.glob('*.log'):
            if log.is_file() and log.stat().st_mtime < cutoff:
                log.unlink()
                removed += 1
        return removed
