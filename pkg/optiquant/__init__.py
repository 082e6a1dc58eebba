"""Optimal quantizer grids: batch Lloyd, splitting ladders, radius bounds and Hessian stability."""

__version__ = "0.1.0"
