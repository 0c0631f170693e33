import logging
import math
from typing import List

from rich.logging import RichHandler

from exceptions import SpecParseError

def setup_logging(level: str = "WARNING") -> None:
    """Route library logging through rich"""
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )

def parse_int_list(text: str) -> List[int]:
    """Parse a comma separated list of integers ("50,100,200")"""
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise SpecParseError(f"Expected a comma separated list of integers, got {text!r}")

def parse_float_list(text: str) -> List[float]:
    """Parse a comma separated list of floats"""
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise SpecParseError(f"Expected a comma separated list of numbers, got {text!r}")

def format_duration(seconds: float) -> str:
    """Format seconds to human readable format"""
    if seconds < 60:
        return f"{seconds:.3g}s"
    elif seconds < 3600:
        minutes = int(seconds // 60)
        return f"{minutes}m {seconds % 60:.0f}s"
    else:
        hours = int(seconds // 3600)
        minutes = int((seconds % 3600) // 60)
        return f"{hours}h {minutes}m"

def format_probability(value: float) -> str:
    """Probabilities near zero read better in scientific notation"""
    if value != 0.0 and value < 1e-3:
        return f"{value:.3e}"
    return f"{value:.4f}"

def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves going up (142.5 -> 143)"""
    return int(math.floor(value + 0.5))
