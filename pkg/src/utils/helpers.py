"""
Utility functions and helpers for the ion-trap simulator.

Provides logging setup, directory handling, and the CSV/JSON writers every
experiment uses for its outputs.
"""

import csv
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from rich.logging import RichHandler


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Path] = None,
    use_rich: bool = True,
) -> logging.Logger:
    """
    Configure logging for the application.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
        log_file: Optional file path for logging.
        use_rich: Whether to use Rich formatting for console output.

    Returns:
        Configured logger instance.
    """
    logger = logging.getLogger()
    logger.setLevel(getattr(logging, level.upper()))

    logger.handlers.clear()

    console_handler: logging.Handler
    if use_rich:
        console_handler = RichHandler(
            rich_tracebacks=True,
            tracebacks_show_locals=False,
        )
        console_handler.setFormatter(logging.Formatter("%(message)s"))
    else:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )

    logger.addHandler(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        logger.addHandler(file_handler)

    return logger


def ensure_directory(path: Path) -> Path:
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        path: Directory path.

    Returns:
        Path object.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def format_file_size(size_bytes: int) -> str:
    """Format file size in human-readable format."""
    if size_bytes < 1024:
        return f"{size_bytes} B"
    elif size_bytes < 1024 * 1024:
        return f"{size_bytes / 1024:.1f} KB"
    else:
        return f"{size_bytes / (1024 * 1024):.1f} MB"


def format_duration(seconds: float) -> str:
    """
    Format duration in human-readable format.

    Args:
        seconds: Duration in seconds.

    Returns:
        Formatted duration string.
    """
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    elif seconds < 60:
        return f"{seconds:.1f}s"
    else:
        minutes = int(seconds // 60)
        secs = int(seconds % 60)
        return f"{minutes}m {secs}s"


def get_timestamp(format: str = "%Y-%m-%dT%H:%M:%SZ") -> str:
    """Current UTC timestamp string."""
    return datetime.now(timezone.utc).strftime(format)


def format_value(value: Any) -> str:
    """Render one CSV cell; floats use a fixed significant-digit format."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    return format(float(value), ".12g")


def write_csv(
    file_path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    units: Mapping[str, str],
    comments: Optional[Mapping[str, str]] = None,
) -> Path:
    """
    Write a table with a ``# units:`` comment line and a header row.

    Args:
        file_path: Output path; parent directories are created.
        columns: Column names, in order.
        rows: Row values, one sequence per row.
        units: Unit label per column (``1`` for dimensionless).
        comments: Extra ``# key: value`` lines written after the units line.

    Returns:
        The written path.
    """
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    units_line = ", ".join(f"{c}={units.get(c, '1')}" for c in columns)

    with open(file_path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# units: {units_line}\n")
        for key, value in (comments or {}).items():
            f.write(f"# {key}: {value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return file_path


def read_csv_table(file_path: Path) -> tuple[list[str], dict[str, str], list[list[str]]]:
    """
    Read a table written by :func:`write_csv`.

    Args:
        file_path: Input path.

    Returns:
        (columns, comment lines as a dict, data rows as strings).
    """
    comments: dict[str, str] = {}
    data_lines: list[str] = []
    with open(file_path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                comments[key.strip()] = value.strip()
            elif line.strip():
                data_lines.append(line)

    reader = csv.reader(data_lines)
    try:
        columns = [c.strip() for c in next(reader)]
    except StopIteration:
        return [], comments, []
    return columns, comments, [[c.strip() for c in row] for row in reader]


def write_json_file(data: Any, file_path: Path, indent: int = 2):
    """
    Write data to JSON file.

    Args:
        data: Data to write.
        file_path: Output file path.
        indent: JSON indentation.
    """
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)

    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, default=str)


def read_json_file(file_path: Path) -> Any:
    """Read data from JSON file."""
    with open(file_path, "r", encoding="utf-8") as f:
        return json.load(f)


def digest(text: str) -> str:
    """SHA-256 hex digest of a text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
