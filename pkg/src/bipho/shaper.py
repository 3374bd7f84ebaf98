"""
Pulse-shaper transfer functions.

A mask M(Ω) reaches the biphoton only through the pair product M(Ω)M(−Ω)
(`pair_profile`). The random dephaser puts one Gaussian phase per Ω>0 bin
(one SLM pixel per bin) and unit transmission with zero phase on Ω<0, so its
pair product is e^{iφ(|Ω|)} and the ensemble coherence between two distinct
|Ω| decays as e^{−σ²}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bipho.errors import GridMismatchError, InvalidParameterError
from bipho.seeding import PHASE_BLOCK, derive_seed
from bipho.spectral import FrequencyGrid, SpectralAmplitude

logger = logging.getLogger(__name__)

# passive SLM: |M| may exceed 1 only by rounding
_MODULUS_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class TransferFunction:
    grid: FrequencyGrid
    mask: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        m = np.array(self.mask, dtype=complex, copy=True)
        if m.shape != (self.grid.size,):
            raise InvalidParameterError(f"mask has shape {m.shape}, grid needs ({self.grid.size},)")
        if not np.all(np.isfinite(m)):
            raise InvalidParameterError("mask has NaN/Inf bins")
        if np.any(np.abs(m) > 1.0 + _MODULUS_SLACK):
            raise InvalidParameterError(f"mask {self.label!r} is not passive (|M| > 1)")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True, eq=False)
class PhaseRealization:
    sigma: float
    seed: int
    phases: np.ndarray  # one phase per Ω>0 bin, rad

    @classmethod
    def draw(cls, sigma: float, seed: int, grid: FrequencyGrid) -> "PhaseRealization":
        """φ_k ~ Normal(0, σ²) i.i.d., bit-reproducible from (seed, grid, σ)."""
        if not sigma >= 0:
            raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
        z = np.random.default_rng(int(seed)).standard_normal(grid.n_pos)
        phases = float(sigma) * z
        phases.setflags(write=False)
        return cls(sigma=float(sigma), seed=int(seed), phases=phases)

    @classmethod
    def member(cls, sigma: float, master_seed: int, j: int, grid: FrequencyGrid) -> "PhaseRealization":
        """Realization j of the ensemble seeded by master_seed."""
        phases = draw_phase_block(sigma, master_seed, j, j + 1, grid)[0]
        phases.setflags(write=False)
        return cls(sigma=float(sigma), seed=derive_seed(master_seed, j // PHASE_BLOCK), phases=phases)

    def full_phases(self) -> np.ndarray:
        """Phases over the whole grid: 0 on Ω<0, φ(Ω) on Ω>0."""
        return np.concatenate([np.zeros_like(self.phases), self.phases])


def draw_phase_block(
    sigma: float,
    master_seed: int,
    start: int,
    stop: int,
    grid: FrequencyGrid,
) -> np.ndarray:
    """
    Phases of ensemble members [start, stop) as a (stop - start, n_pos) array.

    Member j is row j % PHASE_BLOCK of default_rng(derive_seed(master_seed,
    j // PHASE_BLOCK)).standard_normal((PHASE_BLOCK, n_pos)), scaled by σ, so
    any split of the index range returns the same rows.
    """
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
    if not 0 <= start <= stop:
        raise InvalidParameterError(f"bad realization range [{start}, {stop})")
    out = np.empty((stop - start, grid.n_pos))
    j = start
    while j < stop:
        block, lo = divmod(j, PHASE_BLOCK)
        hi = min(PHASE_BLOCK, lo + (stop - j))
        z = np.random.default_rng(derive_seed(master_seed, block)).standard_normal((PHASE_BLOCK, grid.n_pos))
        out[j - start : j - start + hi - lo] = z[lo:hi]
        j += hi - lo
    return float(sigma) * out


def _check_same_grid(a: FrequencyGrid, b: FrequencyGrid) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


# ---------------------------
# Masks
# ---------------------------

def identity_mask(grid: FrequencyGrid) -> TransferFunction:
    return TransferFunction(grid=grid, mask=np.ones(grid.size, dtype=complex), label="identity")


def ma_mask(tau: float, grid: FrequencyGrid) -> TransferFunction:
    """e^{−iΩτ/2} on Ω<0 and e^{+iΩτ/2} on Ω>0, i.e. e^{i|Ω|τ/2}."""
    m = np.exp(0.5j * np.abs(grid.values) * float(tau))
    return TransferFunction(grid=grid, mask=m, label=f"M_a(tau={tau:g})")


def mb_mask(tau: float, grid: FrequencyGrid) -> TransferFunction:
    """1 on Ω<0, sin(Ωτ) on Ω>0."""
    m = np.ones(grid.size, dtype=complex)
    m[grid.n_pos:] = np.sin(grid.positive_values * float(tau))
    return TransferFunction(grid=grid, mask=m, label=f"M_b(tau={tau:g})")


def random_dephaser(sigma: float, seed: int, grid: FrequencyGrid) -> TransferFunction:
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
    real = PhaseRealization.draw(sigma, seed, grid)
    m = np.exp(1j * real.full_phases())
    return TransferFunction(grid=grid, mask=m, label=f"dephaser(sigma={sigma:g}, seed={seed})")


def ensemble_dephaser(sigma: float, master_seed: int, j: int, grid: FrequencyGrid) -> TransferFunction:
    """Mask of ensemble member j, the one run_ensemble and ensemble_average use."""
    real = PhaseRealization.member(sigma, master_seed, j, grid)
    m = np.exp(1j * real.full_phases())
    return TransferFunction(grid=grid, mask=m, label=f"dephaser(sigma={sigma:g}, member={j})")


def quadratic_phase(gdd: float, grid: FrequencyGrid) -> TransferFunction:
    """Per-photon phase e^{i·gdd·Ω²/2} (gdd in fs²); the pair picks up e^{i·gdd·Ω²}."""
    m = np.exp(0.5j * float(gdd) * grid.values**2)
    return TransferFunction(grid=grid, mask=m, label=f"quadratic(gdd={gdd:g} fs^2)")


def compose(m1: TransferFunction, m2: TransferFunction) -> TransferFunction:
    _check_same_grid(m1.grid, m2.grid)
    label = f"{m1.label}*{m2.label}" if (m1.label and m2.label) else (m1.label or m2.label)
    return TransferFunction(grid=m1.grid, mask=m1.mask * m2.mask, label=label)


def pair_profile(m: TransferFunction, grid: Optional[FrequencyGrid] = None) -> np.ndarray:
    """M(Ω)M(−Ω) on the Ω>0 bins (increasing Ω)."""
    if grid is not None:
        _check_same_grid(m.grid, grid)
    n = m.grid.n_pos
    return m.mask[n:] * m.mask[n - 1::-1]


def shape_spectrum(spec: SpectralAmplitude, m: TransferFunction) -> SpectralAmplitude:
    """
    Fold a static mask into the spectrum: Λ(Ω) → Λ(Ω)·M(Ω)M(−Ω).

    The pair product is even in Ω, so a symmetric spectrum stays symmetric.
    """
    _check_same_grid(m.grid, spec.grid)
    pp = pair_profile(m)
    n = spec.grid.n_pos
    amp = np.concatenate([spec.amp[:n] * pp[::-1], spec.amp[n:] * pp])
    label = f"{spec.label}*{m.label}" if spec.label else m.label
    return SpectralAmplitude(grid=spec.grid, amp=amp, label=label, symmetric=spec.symmetric)


# ---------------------------
# Ensemble statistics
# ---------------------------

def pair_phase_correlator(
    sigma: float,
    grid: FrequencyGrid,
    k: int,
    l: int,
    n_realizations: int,
    master_seed: int = 0,
) -> complex:
    """
    Monte-Carlo mean of exp{i[φ(Ω)+φ(−Ω)−φ(Ω′)−φ(−Ω′)]} for Ω=Ω_k, Ω′=Ω_l
    (indices into the full grid), over ensemble members 0..n_realizations-1.

    When |Ω_k| = |Ω_l| the exponent is exactly zero for every realization.
    """
    if n_realizations < 1:
        raise InvalidParameterError("n_realizations must be >= 1")
    n = grid.n_pos
    # full-grid index -> column of the positive-bin phases, None on Ω<0 (phase 0)
    cols = [i - n if i >= n else None for i in (k, grid.mirror(k), l, grid.mirror(l))]
    total = 0j
    for start in range(0, n_realizations, PHASE_BLOCK):
        stop = min(start + PHASE_BLOCK, n_realizations)
        phi = draw_phase_block(sigma, master_seed, start, stop, grid)
        zero = np.zeros(stop - start)
        a, b, c, d = (zero if col is None else phi[:, col] for col in cols)
        total += complex(np.sum(np.exp(1j * ((a + b) - (c + d)))))
    value = total / n_realizations
    logger.debug("pair correlator sigma=%g bins=(%d,%d) n=%d -> %s", sigma, k, l, n_realizations, value)
    return value
