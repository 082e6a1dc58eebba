import json
import math
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np

from optiquant.measure import exponential, gauss1d, gaussian, stream, uniform, uniform01
from optiquant.voronoi import Backend, Grid


PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


def phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def Phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def random_cases(count: int, seed: int = 0):
    """(dist, grid) pairs with N <= 8 for the exact 1D backend."""
    rng = stream(seed, "cases")
    laws = [uniform01(), gauss1d(), exponential(1.0)]
    ranges = [(0.0, 1.0), (-2.5, 2.5), (0.0, 4.0)]
    made = 0
    while made < count:
        k = int(rng.integers(len(laws)))
        N = int(rng.integers(1, 9))
        lo, hi = ranges[k]
        points = rng.uniform(lo, hi, size=N)
        if N > 1 and np.min(np.diff(np.sort(points))) < 0.01:
            continue
        made += 1
        yield laws[k], Grid(points)


# ============== Shared Distributions ==============


@pytest.fixture
def unif():
    return uniform01()


@pytest.fixture
def normal():
    return gauss1d()


@pytest.fixture
def unif2d():
    return uniform([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def normal2d():
    return gaussian([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def exact():
    return Backend.exact1d()


# ============== CLI Helpers ==============


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def run_cli(out_dir, monkeypatch):
    """Run ``main`` with ``--out`` pointed at a temp directory.

    Returns ``(exit_code, summary_or_error_dict)``.
    """
    from optiquant.cli import main

    monkeypatch.setenv("LOG_FILE", "")

    def _run(*args, out=None):
        target = Path(out) if out is not None else out_dir
        code = main([*map(str, args), "--out", str(target)])
        name = "summary.json" if code == 0 else "error.json"
        path = target / name
        payload = json.loads(path.read_text(encoding="utf-8")) if path.exists() else None
        return code, payload

    return _run
