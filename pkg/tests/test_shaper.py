import math
import time

import numpy as np
import pytest

from bipho.correlation import classical_signal, g2_direct
from bipho.errors import GridMismatchError, InvalidParameterError
from bipho.seeding import PHASE_BLOCK
from bipho.shaper import (
    PhaseRealization,
    TransferFunction,
    compose,
    draw_phase_block,
    ensemble_dephaser,
    identity_mask,
    ma_mask,
    mb_mask,
    pair_phase_correlator,
    pair_profile,
    quadratic_phase,
    random_dephaser,
    shape_spectrum,
)
from bipho.spectral import double_gaussian, make_grid


@pytest.fixture()
def grid():
    return make_grid(16, 0.12)


def test_ma_mask_pair_profile(grid):
    assert np.array_equal(ma_mask(0.0, grid).mask, np.ones(grid.size))
    m = ma_mask(137.0, grid)
    np.testing.assert_allclose(np.abs(m.mask), 1.0, atol=1e-15)
    np.testing.assert_allclose(pair_profile(m), np.exp(1j * grid.positive_values * 137.0), atol=1e-14)


def test_mb_mask_pair_profile(grid):
    m0 = mb_mask(0.0, grid)
    assert np.all(m0.mask[grid.n_pos:] == 0)
    assert np.all(m0.mask[: grid.n_pos] == 1)
    m = mb_mask(42.0, grid)
    assert np.all(np.abs(m.mask) <= 1.0)
    np.testing.assert_allclose(pair_profile(m), np.sin(grid.positive_values * 42.0), atol=1e-15)


def test_dephaser_sigma_zero_is_identity(grid):
    assert np.array_equal(random_dephaser(0.0, 99, grid).mask, identity_mask(grid).mask)


def test_dephaser_is_reproducible(grid):
    a = random_dephaser(1.0, 7, grid)
    b = random_dephaser(1.0, 7, grid)
    c = random_dephaser(1.0, 8, grid)
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, c.mask)
    # unit transmission with zero phase on Ω<0
    assert np.array_equal(a.mask[: grid.n_pos], np.ones(grid.n_pos))


def test_dephaser_pair_profile_is_the_phase(grid):
    real = PhaseRealization.draw(0.7, 11, grid)
    m = random_dephaser(0.7, 11, grid)
    np.testing.assert_allclose(pair_profile(m), np.exp(1j * real.phases), atol=1e-15)


def test_dephaser_rejects_negative_sigma(grid):
    with pytest.raises(InvalidParameterError):
        random_dephaser(-0.1, 0, grid)
    with pytest.raises(InvalidParameterError):
        PhaseRealization.draw(float("nan"), 0, grid)


def test_dephaser_statistics():
    sigma = 1.3
    big = make_grid(1000, 0.12)
    phi = np.concatenate([PhaseRealization.draw(sigma, s, big).phases for s in range(100)])
    assert phi.size == 100_000
    assert abs(np.mean(phi)) <= 5 * sigma / math.sqrt(phi.size)
    assert np.var(phi) == pytest.approx(sigma**2, rel=0.03)


def test_compose(grid):
    m = random_dephaser(1.0, 3, grid)
    assert np.array_equal(compose(m, identity_mask(grid)).mask, m.mask)
    back = compose(ma_mask(80.0, grid), ma_mask(-80.0, grid))
    np.testing.assert_allclose(back.mask, 1.0, atol=1e-14)
    a, b = mb_mask(30.0, grid), ma_mask(10.0, grid)
    np.testing.assert_allclose(np.abs(compose(a, b).mask), np.abs(a.mask) * np.abs(b.mask), atol=1e-15)
    with pytest.raises(GridMismatchError):
        compose(m, identity_mask(make_grid(8, 0.12)))


def test_transfer_function_must_be_passive(grid):
    with pytest.raises(InvalidParameterError):
        TransferFunction(grid=grid, mask=np.full(grid.size, 1.5))
    with pytest.raises(InvalidParameterError):
        TransferFunction(grid=grid, mask=np.ones(3))


def test_pair_profile_is_even(grid):
    m = random_dephaser(2.0, 5, grid)
    n = grid.n_pos
    flipped = TransferFunction(grid=grid, mask=m.mask[::-1])
    np.testing.assert_array_equal(pair_profile(m), pair_profile(flipped))
    assert pair_profile(m).shape == (n,)
    with pytest.raises(GridMismatchError):
        pair_profile(m, make_grid(8, 0.12))


def test_quadratic_phase_pair_profile(grid):
    m = quadratic_phase(500.0, grid)
    np.testing.assert_allclose(pair_profile(m), np.exp(1j * 500.0 * grid.positive_values**2), atol=1e-13)


def test_correlator_same_abs_omega_is_exactly_one(grid):
    k = grid.n_pos + 3
    for sigma in (0.5, 1.0, 2.0):
        assert pair_phase_correlator(sigma, grid, k, grid.mirror(k), 500, 1) == 1.0
        assert pair_phase_correlator(sigma, grid, k, k, 500, 1) == 1.0


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_correlator_distinct_bins(grid, sigma):
    n = 20_000
    got = pair_phase_correlator(sigma, grid, grid.n_pos, grid.n_pos + 5, n, 0)
    assert abs(got - math.exp(-(sigma**2))) <= 5 / math.sqrt(n)


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_correlator_distinct_bins_full_size(grid, sigma):
    n = 100_000
    got = pair_phase_correlator(sigma, grid, grid.n_pos + 1, grid.n_pos + 9, n, 2)
    assert abs(got - math.exp(-(sigma**2))) <= 5 / math.sqrt(n)


def test_correlator_needs_realizations(grid):
    with pytest.raises(InvalidParameterError):
        pair_phase_correlator(1.0, grid, grid.n_pos, grid.n_pos + 1, 0)


def test_phase_block_rows_do_not_depend_on_chunking(grid):
    whole = draw_phase_block(0.8, 5, 0, 3 * PHASE_BLOCK + 17, grid)
    parts = np.concatenate(
        [
            draw_phase_block(0.8, 5, 0, 100, grid),
            draw_phase_block(0.8, 5, 100, PHASE_BLOCK + 1, grid),
            draw_phase_block(0.8, 5, PHASE_BLOCK + 1, 3 * PHASE_BLOCK + 17, grid),
        ]
    )
    assert whole.shape == (3 * PHASE_BLOCK + 17, grid.n_pos)
    assert np.array_equal(whole, parts)
    for j in (0, 1, PHASE_BLOCK - 1, PHASE_BLOCK, 2 * PHASE_BLOCK + 3):
        assert np.array_equal(PhaseRealization.member(0.8, 5, j, grid).phases, whole[j])


def test_phase_block_scales_with_sigma_and_seed(grid):
    unit = draw_phase_block(1.0, 3, 0, 50, grid)
    assert np.array_equal(draw_phase_block(2.5, 3, 0, 50, grid), 2.5 * unit)
    assert np.all(draw_phase_block(0.0, 3, 0, 50, grid) == 0)
    assert not np.array_equal(draw_phase_block(1.0, 4, 0, 50, grid), unit)
    assert draw_phase_block(1.0, 3, 7, 7, grid).shape == (0, grid.n_pos)


def test_phase_block_rejects_bad_arguments(grid):
    with pytest.raises(InvalidParameterError):
        draw_phase_block(-1.0, 0, 0, 10, grid)
    with pytest.raises(InvalidParameterError):
        draw_phase_block(1.0, 0, 10, 5, grid)


def test_ensemble_dephaser_uses_member_phases(grid):
    phi = draw_phase_block(1.3, 11, 0, 10, grid)
    m = ensemble_dephaser(1.3, 11, 9, grid)
    assert np.all(m.mask[: grid.n_pos] == 1)
    np.testing.assert_allclose(pair_profile(m), np.exp(1j * phi[9]), atol=0)


def test_correlator_matches_member_by_member_sum(grid):
    k, l = grid.n_pos + 2, grid.mirror(grid.n_pos + 6)
    n = PHASE_BLOCK + 40
    acc = 0j
    for j in range(n):
        phi = PhaseRealization.member(1.1, 8, j, grid).full_phases()
        acc += np.exp(1j * ((phi[k] + phi[grid.mirror(k)]) - (phi[l] + phi[grid.mirror(l)])))
    got = pair_phase_correlator(1.1, grid, k, l, n, 8)
    assert abs(got - acc / n) <= 1e-12


@pytest.mark.slow
def test_correlator_full_size_runs_under_ten_seconds(grid):
    t0 = time.perf_counter()
    for sigma in (0.5, 1.0, 2.0):
        got = pair_phase_correlator(sigma, grid, grid.n_pos, grid.n_pos + 1, 100_000, 0)
        assert abs(got - math.exp(-(sigma**2))) <= 5 / math.sqrt(100_000)
    assert time.perf_counter() - t0 < 10.0


def test_shape_spectrum_quadratic_phase(grid):
    spec = double_gaussian(708.71, 0.0275, 0.022, grid)
    chirped = shape_spectrum(spec, quadratic_phase(800.0, grid))
    assert chirped.symmetric and chirped.is_symmetric()
    np.testing.assert_allclose(np.abs(chirped.amp), np.abs(spec.amp), rtol=1e-14)
    np.testing.assert_allclose(chirped.positive, spec.positive * np.exp(1j * 800.0 * grid.positive_values**2))
    # the pair phase spreads the peak; the classically correlated part only sees |Λ|²
    assert g2_direct(chirped, 0.0) < 0.9 * g2_direct(spec, 0.0)
    tau = np.array([0.0, 35.0, 190.0])
    np.testing.assert_allclose(classical_signal(chirped, tau), classical_signal(spec, tau), rtol=1e-12)


def test_shape_spectrum_identity_and_grid_check(grid):
    spec = double_gaussian(708.71, 0.0275, 0.022, grid)
    assert np.array_equal(shape_spectrum(spec, identity_mask(grid)).amp, spec.amp)
    with pytest.raises(GridMismatchError):
        shape_spectrum(spec, identity_mask(make_grid(8, 0.12)))
