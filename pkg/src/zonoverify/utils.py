"""Shared utility functions."""
import logging
from pathlib import Path

import numpy as np

from .constants import DEFAULT_LOG_FILE
from .errors import ParseError


# Configure logging
def setup_logging(log_file: str | None = DEFAULT_LOG_FILE, level: int = logging.INFO) -> None:
    """Configure logging to a file (if given) and the console."""
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        handlers.insert(0, logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


def format_float(value: float) -> str:
    """Shortest decimal string that reads back to the same float ("2" for 2.0)."""
    return np.format_float_positional(float(value), unique=True, trim="-")


def read_text(path: Path) -> str:
    """Read a UTF-8 text file; undecodable bytes raise ParseError at the file."""
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 (byte {exc.start})", location=str(path)) from None
