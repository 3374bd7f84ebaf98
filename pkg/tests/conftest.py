from __future__ import annotations

import numpy as np
import pytest

from bipho.analysis import calibrate_grid
from bipho.spectral import SpectralAmplitude, double_gaussian, make_grid

# double-Gaussian fit of the measured σ=0 trace
B = 708.71
MU = 0.0275
SIGMA_P = 0.022


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(16, 0.12)


@pytest.fixture(scope="session")
def small_spec(small_grid):
    return double_gaussian(B, MU, SIGMA_P, small_grid)


@pytest.fixture(scope="session")
def default_spec():
    return double_gaussian(B, MU, SIGMA_P, make_grid(512, 0.12))


@pytest.fixture(scope="session")
def fine_spec():
    return double_gaussian(B, MU, SIGMA_P, make_grid(2048, 0.25))


@pytest.fixture(scope="session")
def calibrated_grid():
    return calibrate_grid(B, MU, SIGMA_P)


@pytest.fixture(scope="session")
def calibrated_spec(calibrated_grid):
    return double_gaussian(B, MU, SIGMA_P, calibrated_grid)


@pytest.fixture()
def flat_spec():
    def _make(n_pos: int) -> SpectralAmplitude:
        grid = make_grid(n_pos, 0.1)
        return SpectralAmplitude(grid=grid, amp=np.ones(grid.size), label="flat", symmetric=True)

    return _make
