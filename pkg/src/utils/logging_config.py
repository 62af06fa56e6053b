"""
Centralized logging configuration for signflow
Provides console output, rotating log files and the append-only training log
"""

import logging
import logging.handlers
from datetime import datetime
from pathlib import Path

TRAINING_FIELDS = ("epoch", "l_d", "l_ecl", "l_nce", "total", "wall_time")


class TrainingFilter(logging.Filter):
    """Filter to add the training flag to log records"""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "training"):
            record.training = False
        return True


class ColoredFormatter(logging.Formatter):
    """Custom formatter with colors and emojis for console output"""

    COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[35m",
        "RESET": "\033[0m",
    }

    EMOJI = {"DEBUG": "🔍", "INFO": "✅", "WARNING": "⚠️", "ERROR": "❌", "CRITICAL": "🚨", "TRAINING": "📈"}

    def format(self, record: logging.LogRecord) -> str:
        is_training = getattr(record, "training", False)
        emoji = self.EMOJI["TRAINING"] if is_training else self.EMOJI.get(record.levelname, "")

        color = self.COLORS.get(record.levelname, "")
        colored_level = f"{color}{record.levelname}{self.COLORS['RESET']}"

        formatted = super().format(record)
        if emoji:
            formatted = formatted.replace(record.levelname, colored_level, 1)
            parts = formatted.split("]", 1)
            if len(parts) == 2:
                formatted = parts[0] + "]" + f" {emoji}" + parts[1]

        return formatted


class TrainingLineFormatter(logging.Formatter):
    """One tab-delimited line per epoch, fields in TRAINING_FIELDS order"""

    def format(self, record: logging.LogRecord) -> str:
        values = []
        for name in TRAINING_FIELDS:
            value = getattr(record, name, "")
            values.append(f"{value:.6g}" if isinstance(value, float) else str(value))
        return "\t".join(values)


def setup_logging(
    app_name: str = "signflow",
    log_level: str = "INFO",
    log_dir: Path | None = None,
    enable_console: bool = True,
    enable_file: bool = True,
) -> logging.Logger:
    """
    Setup centralized logging configuration

    Args:
        app_name: Application name for logger
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for log files (default: logs/)
        enable_console: Enable console output
        enable_file: Enable file output

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(app_name)
    logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()
    logger.addFilter(TrainingFilter())

    if enable_console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.DEBUG)
        console_handler.setFormatter(ColoredFormatter(fmt="%(levelname)s [%(name)s] %(message)s"))
        logger.addHandler(console_handler)

    if enable_file:
        if log_dir is None:
            log_dir = Path(__file__).parent.parent.parent / "logs"

        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        file_formatter = logging.Formatter(
            fmt="%(asctime)s - %(levelname)s - [%(name)s] %(funcName)s:%(lineno)d - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

        file_handler = logging.handlers.RotatingFileHandler(
            log_dir / f"{app_name}.log",
            maxBytes=10 * 1024 * 1024,  # 10 MB
            backupCount=5,
            encoding="utf-8",
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(file_formatter)
        logger.addHandler(file_handler)

        error_handler = logging.handlers.RotatingFileHandler(
            log_dir / f"{app_name}_error.log",
            maxBytes=10 * 1024 * 1024,  # 10 MB
            backupCount=5,
            encoding="utf-8",
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(file_formatter)
        logger.addHandler(error_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a child logger with the application prefix

    Args:
        name: Logger name (usually module name)

    Returns:
        Logger instance
    """
    return logging.getLogger(f"signflow.{name}")


def attach_training_log(logger: logging.Logger, path: Path) -> logging.Handler:
    """
    Route training records of `logger` to an append-only delimited file

    Args:
        logger: Logger that emits `log_training_event` records
        path: Target file, created with a header line when new

    Returns:
        The attached handler (remove and close it when the run ends)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not path.exists() or path.stat().st_size == 0:
        path.write_text("\t".join(TRAINING_FIELDS) + "\n", encoding="utf-8")

    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setLevel(logging.INFO)
    handler.addFilter(lambda record: getattr(record, "training", False))
    handler.setFormatter(TrainingLineFormatter())
    logger.addHandler(handler)
    if logger.level == logging.NOTSET or logger.level > logging.INFO:
        logger.setLevel(logging.INFO)
    return handler


def log_training_event(logger: logging.Logger, message: str, level: int = logging.INFO, **fields):
    """
    Log one training epoch

    Args:
        logger: Logger instance
        message: Log message
        level: Log level
        **fields: epoch, l_d, l_ecl, l_nce, total, wall_time
    """
    extra = {"training": True}
    extra.update(fields)

    if fields:
        context = ", ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items())
        message = f"{message} | {context}"

    logger.log(level, message, extra=extra)


class PerformanceLogger:
    """Context manager for performance logging"""

    def __init__(self, logger: logging.Logger, operation: str, threshold_ms: float = 1000):
        self.logger = logger
        self.operation = operation
        self.threshold_ms = threshold_ms
        self.start_time = None
        self.duration_ms = 0.0

    def __enter__(self):
        self.start_time = datetime.now()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.start_time:
            self.duration_ms = (datetime.now() - self.start_time).total_seconds() * 1000

            if self.duration_ms > self.threshold_ms:
                self.logger.warning(
                    f"⚡ Performance: {self.operation} took {self.duration_ms:.2f}ms (threshold: {self.threshold_ms}ms)"
                )
            else:
                self.logger.debug(f"⚡ Performance: {self.operation} completed in {self.duration_ms:.2f}ms")


_root_logger = None


def init_cli_logging(config, enable_file: bool = True) -> logging.Logger:
    """Initialize logging for a command-line run"""
    global _root_logger

    log_dir = Path(config.log_dir) if config.log_dir else None
    _root_logger = setup_logging(
        app_name="signflow", log_level=config.log_level, log_dir=log_dir, enable_file=enable_file and log_dir is not None
    )
    _root_logger.debug(f"Logging initialized (level: {config.log_level})")

    return _root_logger
