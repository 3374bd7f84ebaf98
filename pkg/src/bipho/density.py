"""
Brute-force density-matrix oracle on the anticorrelated pair subspace.

Basis vector k is the pair state |Ω_k⟩ᵢ|−Ω_k⟩ₛ for the k-th Ω>0 bin; the
pure state has coefficients c_k ∝ Λ(Ω_k). Masks act as the diagonal
operator D = diag(M(Ω_k)M(−Ω_k)).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from bipho.errors import GridMismatchError, InvalidParameterError
from bipho.shaper import TransferFunction, draw_phase_block, pair_profile
from bipho.spectral import FrequencyGrid, SpectralAmplitude

logger = logging.getLogger(__name__)

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIGEN_FLOOR = -1e-9

# complex elements per chunk when averaging e^{i(φ_k − φ_l)}
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    grid: FrequencyGrid
    mat: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.mat, dtype=complex, copy=True)
        n = self.grid.n_pos
        if m.shape != (n, n):
            raise InvalidParameterError(f"matrix shape {m.shape} != ({n}, {n})")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.mat))


def validate(rho: DensityMatrix) -> None:
    """Raise InvalidParameterError unless ρ is Hermitian, unit-trace and PSD (within tolerance)."""
    m = rho.mat
    herm = float(np.max(np.abs(m - m.conj().T)))
    if herm > HERMITIAN_ATOL:
        raise InvalidParameterError(f"not Hermitian (max |ρ−ρ†| = {herm:.3g})")
    tr = complex(np.trace(m))
    if abs(tr - 1.0) > TRACE_ATOL:
        raise InvalidParameterError(f"trace {tr:.12g} != 1")
    lo = float(np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))
    if lo < EIGEN_FLOOR:
        raise InvalidParameterError(f"negative eigenvalue {lo:.3g}")


def purity(rho: DensityMatrix) -> float:
    return float(np.real(np.trace(rho.mat @ rho.mat)))


def _coefficients(spec: SpectralAmplitude) -> np.ndarray:
    c = np.array(spec.positive, dtype=complex)
    norm = math.sqrt(float(np.sum(np.abs(c) ** 2)))
    if norm == 0.0:
        raise InvalidParameterError("spectral amplitude is zero on every Ω>0 bin")
    return c / norm


# ---------------------------
# Constructors
# ---------------------------

def pure_state(spec: SpectralAmplitude) -> DensityMatrix:
    c = _coefficients(spec)
    return DensityMatrix(grid=spec.grid, mat=np.outer(c, c.conj()))


def classical_state(spec: SpectralAmplitude) -> DensityMatrix:
    """Diagonal ρ⁽c⁾ with p(Ω) = |Λ(Ω)|², same populations as the pure state."""
    c = _coefficients(spec)
    return DensityMatrix(grid=spec.grid, mat=np.diag(np.abs(c) ** 2).astype(complex))


def apply_mask(
    state: Union[DensityMatrix, np.ndarray],
    m: TransferFunction,
) -> Union[DensityMatrix, np.ndarray]:
    """
    D·ψ for a state vector, D·ρ·D† for a density matrix. The result is
    renormalized only when some |M(Ω)M(−Ω)| differs from 1.
    """
    d = pair_profile(m)
    unitary = bool(np.allclose(np.abs(d), 1.0, rtol=0.0, atol=1e-12))

    if isinstance(state, DensityMatrix):
        if state.grid != m.grid:
            raise GridMismatchError(f"mask grid {m.grid} != state grid {state.grid}")
        out = d[:, None] * state.mat * d.conj()[None, :]
        if not unitary:
            tr = float(np.real(np.trace(out)))
            if tr <= 0:
                raise InvalidParameterError("mask annihilates the state (zero trace)")
            out = out / tr
        return DensityMatrix(grid=state.grid, mat=out)

    vec = np.asarray(state, dtype=complex)
    if vec.shape != (m.grid.n_pos,):
        raise GridMismatchError(f"state vector length {vec.shape} != n_pos {m.grid.n_pos}")
    out_v = d * vec
    if not unitary:
        norm = math.sqrt(float(np.sum(np.abs(out_v) ** 2)))
        if norm == 0.0:
            raise InvalidParameterError("mask annihilates the state (zero norm)")
        out_v = out_v / norm
    return out_v


def _coherence_kernel(grid: FrequencyGrid, sigma: float, n: int, master_seed: int) -> np.ndarray:
    """K_kl = (1/n) Σ_j e^{i(φ_jk − φ_jl)}; the diagonal is exactly 1."""
    acc = np.zeros((grid.n_pos, grid.n_pos), dtype=complex)
    chunk = max(1, _CHUNK_ELEMENTS // (grid.n_pos * grid.n_pos))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        phi = draw_phase_block(sigma, master_seed, start, stop, grid)
        acc += np.sum(np.exp(1j * (phi[:, :, None] - phi[:, None, :])), axis=0)
    return acc / n


def ensemble_average(spec: SpectralAmplitude, sigma: float, n: int, master_seed: int = 0) -> DensityMatrix:
    """
    (1/n) Σ_j apply_mask(ρ⁽q⁾, dephaser_j), dephaser_j = ensemble_dephaser(σ, master, j).

    Evaluated as ρ⁽q⁾ ⊙ K with the coherence kernel K, which is the same sum
    written element-wise and keeps the diagonal bit-identical to ρ⁽q⁾.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
    rho_q = pure_state(spec)
    kernel = _coherence_kernel(spec.grid, sigma, n, master_seed)
    np.fill_diagonal(kernel, 1.0)
    logger.debug("ensemble_average sigma=%g n=%d n_pos=%d", sigma, n, spec.grid.n_pos)
    return DensityMatrix(grid=spec.grid, mat=rho_q.mat * kernel)


def fraction_entangled(sigma: float) -> float:
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
    return math.exp(-(sigma**2))


def predicted_mixture(sigma: float, spec: SpectralAmplitude) -> DensityMatrix:
    """e^{−σ²}ρ⁽q⁾ + (1−e^{−σ²})ρ⁽c⁾."""
    f = fraction_entangled(sigma)
    mat = f * pure_state(spec).mat + (1.0 - f) * classical_state(spec).mat
    return DensityMatrix(grid=spec.grid, mat=mat)


def matrix_distance(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """Frobenius norm ‖ρ1 − ρ2‖_F."""
    if rho1.mat.shape != rho2.mat.shape:
        raise GridMismatchError(f"shape mismatch {rho1.mat.shape} vs {rho2.mat.shape}")
    return float(np.linalg.norm(rho1.mat - rho2.mat, ord="fro"))


# ---------------------------
# Measurement
# ---------------------------

def measurement_operator(grid: FrequencyGrid, tau: float) -> np.ndarray:
    """
    E(τ) with S_a − 4·S_b = N_Λ·Tr[ρE(τ)] for symmetric Λ, N_Λ = Σ_{Ω>0}|Λ|².
    E = 4ΔΩ²(a*aᵀ − b bᵀ), a_k = e^{iΩ_kτ}, b_k = sin(Ω_kτ).
    """
    w = grid.positive_values
    a = np.exp(1j * w * tau)
    b = np.sin(w * tau)
    return 4.0 * grid.bin_width**2 * (np.outer(a.conj(), a) - np.outer(b, b))


def expected_signal(rho: DensityMatrix, spec: SpectralAmplitude, tau: float) -> float:
    if rho.grid != spec.grid:
        raise GridMismatchError(f"state grid {rho.grid} != spectrum grid {spec.grid}")
    norm = float(np.sum(np.abs(spec.positive) ** 2))
    return norm * float(np.real(np.trace(rho.mat @ measurement_operator(spec.grid, tau))))
