"""Grid, trace and report persistence."""

from .file_store import (
	TRACE_HEADER,
	default_out_dir,
	ensure_dir,
	load_grid,
	load_report,
	load_trace_csv,
	save_grid_csv,
	save_grid_json,
	save_report,
	save_trace_csv,
)

__all__ = [
	"TRACE_HEADER",
	"default_out_dir",
	"ensure_dir",
	"load_grid",
	"load_report",
	"load_trace_csv",
	"save_grid_csv",
	"save_grid_json",
	"save_report",
	"save_trace_csv",
]
