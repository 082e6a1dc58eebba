"""Trace and grid charts (PNG)."""

import io
from typing import Any, Mapping, Optional, Sequence

import matplotlib

matplotlib.use('Agg')  # Non-interactive backend
import matplotlib.pyplot as plt
import numpy as np

_COLORS = ['#45B7D1', '#E74C3C', '#27AE60', '#8E44AD']


def _save(fig) -> io.BytesIO:
	"""Save figure to a BytesIO buffer and close it."""
	buf = io.BytesIO()
	fig.savefig(buf, format='png', dpi=150, bbox_inches='tight',
				facecolor='white', edgecolor='none')
	buf.seek(0)
	plt.close(fig)
	return buf


class ChartService:
	"""Creates charts for Lloyd traces and grids."""

	@staticmethod
	def trace_chart(rows: Sequence[Mapping[str, Any]], title: str) -> Optional[io.BytesIO]:
		if not rows:
			return None

		plt.style.use('seaborn-v0_8-whitegrid')
		fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 8), sharex=True)

		k = [row['k'] for row in rows]
		energy = np.array([row['energy'] for row in rows])
		grad = np.array([row['grad_norm'] for row in rows])
		gap = np.array([row['gap'] for row in rows])

		# energy above its last value, so convergence shows on a log axis
		excess = energy - energy.min()
		ax1.semilogy(k, np.where(excess > 0, excess, np.nan), color=_COLORS[0], linewidth=2,
					 label='energy - min')
		ax1.semilogy(k, np.where(gap > 0, gap, np.nan), color=_COLORS[1], linestyle='--', label='energy gap')
		ax1.set_ylabel('distortion', fontsize=12, fontweight='bold')
		ax1.legend(fontsize=10)

		ax2.semilogy(k, np.where(grad > 0, grad, np.nan), color=_COLORS[2], linewidth=2)
		ax2.set_xlabel('iteration k', fontsize=12, fontweight='bold')
		ax2.set_ylabel('|grad G|', fontsize=12, fontweight='bold')

		ax1.set_title(title, fontsize=15, fontweight='bold', pad=12)
		plt.tight_layout()
		return _save(fig)

	@staticmethod
	def grid_chart(points: np.ndarray, title: str, masses: Optional[Sequence[float]] = None) -> Optional[io.BytesIO]:
		pts = np.asarray(points, dtype=float)
		if pts.size == 0 or pts.shape[1] > 2:
			return None

		plt.style.use('seaborn-v0_8-whitegrid')
		fig, ax = plt.subplots(figsize=(7, 7 if pts.shape[1] == 2 else 3))

		sizes = 40.0 if masses is None else 40.0 + 400.0 * np.asarray(masses) / max(max(masses), 1e-300)
		if pts.shape[1] == 1:
			ax.scatter(pts[:, 0], np.zeros(len(pts)), s=sizes, color=_COLORS[3], zorder=3)
			ax.set_yticks([])
		else:
			ax.scatter(pts[:, 0], pts[:, 1], s=sizes, color=_COLORS[3], zorder=3)
			ax.set_aspect('equal', adjustable='datalim')

		ax.set_title(title, fontsize=15, fontweight='bold', pad=12)
		plt.tight_layout()
		return _save(fig)


__all__ = ["ChartService"]
