"""Shared fixtures.

The full simulation grid (27 cells at 2000 replicates) is expensive, so it
is computed once per session and shared by the FDR-control and
MDR-dominance acceptance tests.
"""

import time

import numpy as np
import pytest

from poweralloc import run_table
from poweralloc.sim import ScenarioConfig, run_cell

GRID_SEED = 20260809
GRID_QSTAR = 0.1
GRID_REPS = 2000


@pytest.fixture(scope="session")
def paper_grid():
    """All 27 (M, p, nu) cells at q*=0.1, 2000 replicates, plus wall time."""
    start = time.perf_counter()
    cells = run_table(
        Ms=(20, 50, 100),
        ps=(0.1, 0.2, 0.4),
        nus=(1.0, 2.0, 4.0),
        qstar=GRID_QSTAR,
        reps=GRID_REPS,
        seed=GRID_SEED,
        procedures=("fdr-opt", "bh"),
    )
    elapsed = time.perf_counter() - start
    return cells, elapsed


@pytest.fixture(scope="session")
def null_grid():
    """Global-null cells (p = 0) for the FDR band check."""
    return [
        run_cell(
            ScenarioConfig(M=M, p=0.0, nu=2.0, qstar=GRID_QSTAR, reps=GRID_REPS,
                           seed=GRID_SEED, procedures=("fdr-opt",))
        )
        for M in (20, 50)
    ]


def random_gammas(rng: np.random.Generator, size: int, lo: float = 0.1, hi: float = 10.0):
    return rng.uniform(lo, hi, size)
