import math

import numpy as np
import pytest

from bipho.correlation import g2_direct
from bipho.errors import InvalidParameterError
from bipho.spectral import (
    SpectralAmplitude,
    double_gaussian,
    fourier_to_time,
    make_grid,
    make_tau_grid,
    parseval_ratio,
    width_to_wavelength,
)

from conftest import B, MU, SIGMA_P


def test_grid_values_are_half_offset():
    grid = make_grid(2, 0.1)
    assert grid.size == 4
    np.testing.assert_allclose(grid.values, [-0.075, -0.025, 0.025, 0.075], rtol=0, atol=1e-15)
    assert 0.0 not in grid.values


def test_grid_spacing_and_mirror():
    grid = make_grid(512, 0.12)
    v = grid.values
    assert grid.size == 1024
    assert np.all(np.diff(v) > 0)
    np.testing.assert_allclose(np.diff(v), grid.bin_width, rtol=1e-9)
    for k in (0, 1, 255, 511, 512, 1023):
        assert grid.mirror(grid.mirror(k)) == k
        assert v[grid.mirror(k)] == -v[k]


@pytest.mark.parametrize("n_pos, omega_max", [(1, 0.1), (0, 0.1), (16, 0.0), (16, -1.0), (16, float("nan"))])
def test_grid_rejects_bad_parameters(n_pos, omega_max):
    with pytest.raises(InvalidParameterError):
        make_grid(n_pos, omega_max)


def test_tau_grid_hits_zero_and_rejects_bad_step():
    tau = make_tau_grid(-250.0, 250.0, 1.0)
    assert tau.size == 501
    assert 0.0 in tau
    assert tau[0] == -250.0 and tau[-1] == 250.0
    with pytest.raises(InvalidParameterError):
        make_tau_grid(-1.0, 1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        make_tau_grid(1.0, -1.0, 0.5)


def test_double_gaussian_normalization(default_spec, calibrated_spec):
    for spec in (default_spec, calibrated_spec):
        assert spec.symmetric
        assert spec.is_symmetric()
        assert g2_direct(spec, 0.0) == pytest.approx(B, rel=1e-12)


def test_double_gaussian_density_shape_is_normalized_too():
    spec = double_gaussian(B, MU, SIGMA_P, make_grid(512, 0.2), shape="density")
    assert g2_direct(spec, 0.0) == pytest.approx(B, rel=1e-12)


def test_double_gaussian_is_bimodal(fine_spec):
    pos = np.abs(fine_spec.positive)
    w = fine_spec.grid.positive_values
    peak_at = w[int(np.argmax(pos))]
    assert abs(peak_at - MU) < 0.005
    assert pos[0] < pos.max()


def test_double_gaussian_mu_zero_peaks_at_centre():
    grid = make_grid(64, 0.12)
    spec = double_gaussian(B, 0.0, SIGMA_P, grid)
    a = np.abs(spec.amp)
    assert set(np.flatnonzero(a == a.max())) <= {grid.n_pos - 1, grid.n_pos}


@pytest.mark.parametrize(
    "kwargs",
    [
        {"B": 0.0},
        {"B": -1.0},
        {"sigma_p": 0.0},
        {"mu": -0.01},
        {"shape": "triangle"},
    ],
)
def test_double_gaussian_rejects_bad_parameters(kwargs):
    args = {"B": B, "mu": MU, "sigma_p": SIGMA_P, "shape": "amplitude"}
    args.update(kwargs)
    with pytest.raises(InvalidParameterError):
        double_gaussian(args["B"], args["mu"], args["sigma_p"], make_grid(16, 0.12), shape=args["shape"])


def test_symmetric_flag_is_checked(small_grid):
    amp = np.arange(small_grid.size, dtype=float)
    with pytest.raises(InvalidParameterError):
        SpectralAmplitude(grid=small_grid, amp=amp, symmetric=True)
    with pytest.raises(InvalidParameterError):
        SpectralAmplitude(grid=small_grid, amp=np.ones(3))


def test_transform_matches_continuum(fine_spec):
    # away from the cos² zeros at (2m+1)π/(2μ)
    tau = np.linspace(0.0, 95.0, 20)
    got = fourier_to_time(fine_spec, tau).intensity
    want = B * np.cos(MU * tau) ** 2 * np.exp(-(SIGMA_P**2) * tau**2)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-3 * B)


def test_real_symmetric_transform_is_real(default_spec):
    amp = fourier_to_time(default_spec, np.linspace(-250, 250, 101)).amp
    assert np.max(np.abs(amp.imag)) <= 1e-10 * np.max(np.abs(amp))


def test_parseval_over_one_period():
    grid = make_grid(64, 0.2)
    spec = double_gaussian(B, MU, SIGMA_P, grid)
    m = 4 * grid.n_pos
    tau = np.arange(m) * (grid.time_period / m)
    assert parseval_ratio(spec, fourier_to_time(spec, tau)) == pytest.approx(1.0, rel=1e-6)


def test_transform_is_linear(small_grid):
    rng = np.random.default_rng(3)
    a1 = rng.normal(size=small_grid.size) + 1j * rng.normal(size=small_grid.size)
    a2 = rng.normal(size=small_grid.size)
    s1 = SpectralAmplitude(grid=small_grid, amp=a1)
    s2 = SpectralAmplitude(grid=small_grid, amp=a2)
    both = SpectralAmplitude(grid=small_grid, amp=2.0 * a1 - 0.5j * a2)
    tau = np.linspace(-100, 100, 41)
    lhs = fourier_to_time(both, tau).amp
    rhs = 2.0 * fourier_to_time(s1, tau).amp - 0.5j * fourier_to_time(s2, tau).amp
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.max(np.abs(rhs)))


def test_refining_the_grid_barely_changes_g2():
    tau = np.linspace(-250, 250, 51)
    coarse = g2_direct(double_gaussian(B, MU, SIGMA_P, make_grid(512, 0.12)), tau)
    fine = g2_direct(double_gaussian(B, MU, SIGMA_P, make_grid(1024, 0.12)), tau)
    assert np.max(np.abs(coarse - fine)) <= 1e-3 * B


def test_width_to_wavelength():
    w = math.hypot(SIGMA_P, MU)
    assert w == pytest.approx(0.03521, abs=1e-5)
    assert round(width_to_wavelength(w), 1) == 21.2
    assert width_to_wavelength(0.0) == 0.0
    assert round(width_to_wavelength(0.01), 1) == 6.0
    with pytest.raises(InvalidParameterError):
        width_to_wavelength(-0.01)
