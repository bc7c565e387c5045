import math
from functools import lru_cache

import pytest

from fel.grid import PeriodicGrid
from fel.zoo import clifford, fourier_perturb, rotational_conformal, rotational_grid, twisted_figure_eight

SQRT2 = math.sqrt(2.0)


@lru_cache(maxsize=None)
def rotational(R=SQRT2, r=1.0, n=64):
    return rotational_conformal(R, r, rotational_grid(R, r, n))


@lru_cache(maxsize=None)
def clifford_torus(n=64):
    return clifford(PeriodicGrid(n, n))


@lru_cache(maxsize=None)
def figure_eight(n=64):
    return twisted_figure_eight(PeriodicGrid(n, n))


@lru_cache(maxsize=None)
def descent_run(seed=0, n=64):
    """The descent experiment: perturbed rotational torus, amplitude 0.05."""
    from fel.variation import minimize

    start = fourier_perturb(rotational(SQRT2, 1.0, n), seed, 0.05)
    return start, minimize(start)


@pytest.fixture(scope="session")
def descent():
    return descent_run()
