import logging
import os
from datetime import datetime
from typing import Iterable

from quasilocal.tools.constants import LOG_DIR, LOGGER_CASE_FILE_PATTERN, LOGGER_SESSION_FILE_PATTERN

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def setup_logging(name: str, debug: bool = False, file_pattern: str = LOGGER_SESSION_FILE_PATTERN,
                  case_name: str = '', console_output: bool = True, log_dir: str | None = None,
                  handlers: Iterable[logging.Handler] = ()) -> logging.Logger:
    """Attach a timestamped log file (and optionally the console) to a named logger.

    Args:
        name (str): Logger name, usually LOGGER_MAIN or an acceptance case name
        debug (bool): DEBUG level when set, INFO otherwise
        file_pattern (str): File name pattern with {timestamp} and {case_name} fields
        case_name (str): Value substituted for {case_name}
        console_output (bool): Also log to stderr
        log_dir (str): Directory for log files, created on demand
        handlers: Additional handlers sharing the same formatter

    Returns:
        logging.Logger: The configured logger
    """
    level = logging.DEBUG if debug else logging.INFO
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # one set of handlers per logger, even when set up again in the same process
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    log_dir = log_dir or LOG_DIR
    os.makedirs(log_dir, exist_ok=True)
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    file_name = os.path.join(log_dir, file_pattern.format(timestamp=timestamp, case_name=case_name))

    formatter = logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT)
    attached = [logging.FileHandler(file_name)]
    if console_output:
        attached.append(logging.StreamHandler())
    attached.extend(handlers)

    for handler in attached:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    return logger


def case_logger(case_name: str, debug: bool = False, log_dir: str | None = None) -> logging.Logger:
    """File-only logger for one acceptance case."""
    return setup_logging(case_name, debug=debug, file_pattern=LOGGER_CASE_FILE_PATTERN,
                         case_name=case_name, console_output=False, log_dir=log_dir)
