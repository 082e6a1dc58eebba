"""Command-line package wrappers."""

from .config import RunConfig
from .core import configure_logging, main
from .parsers import ValueParser, build_parser
from .visualization import ChartService

__all__ = [
	"RunConfig",
	"configure_logging",
	"main",
	"ValueParser",
	"build_parser",
	"ChartService",
]
