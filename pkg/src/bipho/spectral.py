"""
Frequency/time grids and biphoton spectral amplitudes.

Conventions (fixed for the whole package):
  - detuning Ω in rad/fs, delay τ in fs, rates in Hz
  - the grid has 2·n_pos half-offset bins Ω_k = (k − n_pos + ½)·ΔΩ, no Ω=0 bin,
    so bin k and bin 2·n_pos−1−k are exact mirrors
  - time transform: Λ̂(τ) = Σ_k Λ(Ω_k)·e^{+iΩ_kτ}·ΔΩ (Riemann sum)

Under that convention Parseval reads Σ|Λ̂(τ)|²Δτ = 2π·Σ|Λ(Ω)|²ΔΩ when τ
covers one period 2π/ΔΩ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Union

import numpy as np

from bipho.errors import InvalidParameterError

# speed of light in nm/fs
C_NM_PER_FS = 299.792458

ArrayLike = Union[float, np.ndarray, list]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------
# Grids
# ---------------------------

@dataclass(frozen=True)
class FrequencyGrid:
    n_pos: int
    omega_max: float

    def __post_init__(self) -> None:
        if isinstance(self.n_pos, bool) or not isinstance(self.n_pos, (int, np.integer)):
            raise InvalidParameterError(f"n_pos must be an integer, got {self.n_pos!r}")
        if self.n_pos < 2:
            raise InvalidParameterError(f"n_pos must be >= 2, got {self.n_pos!r}")
        if not (math.isfinite(self.omega_max) and self.omega_max > 0):
            raise InvalidParameterError(f"omega_max must be > 0 rad/fs, got {self.omega_max!r}")
        object.__setattr__(self, "n_pos", int(self.n_pos))
        object.__setattr__(self, "omega_max", float(self.omega_max))

    @property
    def bin_width(self) -> float:
        return self.omega_max / self.n_pos

    @property
    def size(self) -> int:
        return 2 * self.n_pos

    @cached_property
    def values(self) -> np.ndarray:
        k = np.arange(self.size, dtype=float) - self.n_pos + 0.5
        return _frozen(k * self.bin_width)

    @property
    def positive_values(self) -> np.ndarray:
        return self.values[self.n_pos:]

    @property
    def time_period(self) -> float:
        """|Λ̂(τ)|² repeats every 2π/ΔΩ fs."""
        return 2.0 * math.pi / self.bin_width

    def mirror(self, k: int) -> int:
        """Index of the bin at −Ω_k."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        return self.size - 1 - k


def make_grid(n_pos: int, omega_max: float) -> FrequencyGrid:
    return FrequencyGrid(n_pos=n_pos, omega_max=omega_max)


def make_tau_grid(t_min: float, t_max: float, step: float) -> np.ndarray:
    """
    Inclusive τ grid in fs. When t_min is a multiple of step the samples are
    exact multiples of step (so τ=0 is hit exactly), otherwise t_min + i·step.
    """
    if not (math.isfinite(step) and step > 0):
        raise InvalidParameterError(f"tau step must be > 0 fs, got {step!r}")
    if t_max < t_min:
        raise InvalidParameterError(f"tau max ({t_max}) < tau min ({t_min})")
    n = int(math.floor((t_max - t_min) / step + 1e-9)) + 1
    i0 = round(t_min / step)
    if abs(t_min / step - i0) < 1e-9:
        return step * np.arange(i0, i0 + n, dtype=float)
    return t_min + step * np.arange(n, dtype=float)


# ---------------------------
# Amplitudes
# ---------------------------

@dataclass(frozen=True, eq=False)
class SpectralAmplitude:
    grid: FrequencyGrid
    amp: np.ndarray
    label: str = ""
    symmetric: bool = False

    def __post_init__(self) -> None:
        amp = np.asarray(self.amp, dtype=complex)
        if amp.shape != (self.grid.size,):
            raise InvalidParameterError(
                f"amplitude has shape {amp.shape}, grid needs ({self.grid.size},)"
            )
        if not np.all(np.isfinite(amp)):
            raise InvalidParameterError("spectral amplitude has NaN/Inf bins")
        object.__setattr__(self, "amp", _frozen(amp))
        if self.symmetric and not self.is_symmetric():
            raise InvalidParameterError(f"amplitude {self.label!r} flagged symmetric but is not")

    @property
    def positive(self) -> np.ndarray:
        """Λ on the Ω>0 bins, ordered by increasing Ω."""
        return self.amp[self.grid.n_pos:]

    @property
    def mirrored_positive(self) -> np.ndarray:
        """Λ(−Ω) for the same Ω>0 ordering."""
        return self.amp[self.grid.n_pos - 1::-1]

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        peak = float(np.max(np.abs(self.amp))) if self.amp.size else 0.0
        diff = np.abs(self.amp - self.amp[::-1])
        return bool(np.all(diff <= rtol * peak))

    def scaled(self, factor: complex) -> "SpectralAmplitude":
        return SpectralAmplitude(
            grid=self.grid,
            amp=self.amp * factor,
            label=self.label,
            symmetric=self.symmetric,
        )


@dataclass(frozen=True, eq=False)
class TemporalAmplitude:
    tau: np.ndarray
    amp: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau", _frozen(np.asarray(self.tau, dtype=float)))
        object.__setattr__(self, "amp", _frozen(np.asarray(self.amp, dtype=complex)))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amp) ** 2


def double_gaussian(
    B: float,
    mu: float,
    sigma_p: float,
    grid: FrequencyGrid,
    shape: Literal["amplitude", "density"] = "amplitude",
) -> SpectralAmplitude:
    """
    Two Gaussians of width σ′ centred at ±μ, normalized so that
    G²(0) = |Σ Λ ΔΩ|² = B (Hz).

    shape="amplitude" uses the double Gaussian as Λ itself, giving
    |Λ̂(τ)|² = B cos²(μτ) e^{−σ′²τ²} in the continuum. shape="density" treats it
    as |Λ|² and takes the square root.
    """
    if not sigma_p > 0:
        raise InvalidParameterError(f"sigma_p must be > 0 rad/fs, got {sigma_p!r}")
    if not B > 0:
        raise InvalidParameterError(f"B must be > 0 Hz, got {B!r}")
    if not mu >= 0:
        raise InvalidParameterError(f"mu must be >= 0 rad/fs, got {mu!r}")
    if shape not in ("amplitude", "density"):
        raise InvalidParameterError(f"unknown spectrum shape {shape!r}")

    w = grid.values
    raw = np.exp(-((w - mu) ** 2) / (2 * sigma_p**2)) + np.exp(-((w + mu) ** 2) / (2 * sigma_p**2))
    if shape == "density":
        raw = np.sqrt(raw)
    # exact evenness, independent of rounding in the two exponentials
    raw = 0.5 * (raw + raw[::-1])

    total = float(np.sum(raw)) * grid.bin_width
    if total <= 0 or not math.isfinite(total):
        raise InvalidParameterError("double Gaussian vanishes on this grid (widen omega_max)")
    amp = raw * (math.sqrt(B) / total)
    label = f"double_gaussian(B={B:g} Hz, mu={mu:g}, sigma_p={sigma_p:g}, {shape})"
    return SpectralAmplitude(grid=grid, amp=amp.astype(complex), label=label, symmetric=True)


# ---------------------------
# Transforms / units
# ---------------------------

def _phase_matrix(omega: np.ndarray, tau: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(tau, omega))


def fourier_to_time(spec: SpectralAmplitude, tau: ArrayLike) -> TemporalAmplitude:
    """Λ̂(τ) = Σ_k Λ(Ω_k) e^{iΩ_kτ} ΔΩ at each τ."""
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if not np.all(np.isfinite(t)):
        raise InvalidParameterError("tau grid has NaN/Inf samples")
    amp = _phase_matrix(spec.grid.values, t) @ spec.amp * spec.grid.bin_width
    return TemporalAmplitude(tau=t, amp=amp)


def parseval_ratio(spec: SpectralAmplitude, temporal: TemporalAmplitude) -> float:
    """Σ|Λ̂|²Δτ / (2π Σ|Λ|²ΔΩ); 1 when τ spans one period with ≥ 2·n_pos samples."""
    t = temporal.tau
    if t.size < 2:
        raise InvalidParameterError("need at least two tau samples")
    dtau = float(t[1] - t[0])
    lhs = float(np.sum(temporal.intensity)) * dtau
    rhs = 2 * math.pi * float(np.sum(np.abs(spec.amp) ** 2)) * spec.grid.bin_width
    return lhs / rhs


def width_to_wavelength(width: float, lambda0: float = 1064.0) -> float:
    """Δλ = λ₀²·Δω/(2πc) in nm, for a width in rad/fs around λ₀ (nm)."""
    if width < 0:
        raise InvalidParameterError(f"width must be >= 0 rad/fs, got {width!r}")
    if not lambda0 > 0:
        raise InvalidParameterError(f"lambda0 must be > 0 nm, got {lambda0!r}")
    return lambda0**2 * width / (2 * math.pi * C_NM_PER_FS)
