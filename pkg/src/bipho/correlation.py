"""
Measurable signals.

  g2_direct   G²(τ) = |Σ Λ(Ω) e^{iΩτ} ΔΩ|²
  g2_split    S_a − 4·S_b with S_a from M_a(τ) over the full band and S_b the raw
              M_b(τ) signal over Ω>0; equal to g2_direct for symmetric Λ when no
              dephasing is applied
  trace_scan  ensemble average of g2_split under random dephasers

Masks act through their pair product only, so every signal here is a sum over
the Ω>0 bins with weights w_full = (Λ(Ω)+Λ(−Ω))ΔΩ or w_pos = Λ(Ω)ΔΩ.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Literal, Optional, Union

import numpy as np

from bipho.errors import GridMismatchError, InvalidParameterError, SymmetryError
from bipho.shaper import TransferFunction, compose, ma_mask, mb_mask, pair_profile
from bipho.spectral import SpectralAmplitude, fourier_to_time

TraceKind = Literal["direct", "split", "measured-sim", "expected"]
_KINDS = ("direct", "split", "measured-sim", "expected")


# ---------------------------
# Model
# ---------------------------

@dataclass(frozen=True)
class TraceMeta:
    sigma: float = 0.0
    n_realizations: int = 0
    seed: Optional[int] = None
    kind: TraceKind = "direct"
    clipped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class CorrelationTrace:
    tau: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __post_init__(self) -> None:
        tau = np.array(self.tau, dtype=float, copy=True)
        value = np.array(self.value, dtype=float, copy=True)
        stderr = np.array(self.stderr, dtype=float, copy=True)
        if tau.ndim != 1 or tau.size == 0:
            raise InvalidParameterError("trace needs a non-empty 1-D tau grid")
        if value.shape != tau.shape or stderr.shape != tau.shape:
            raise InvalidParameterError("tau/value/stderr lengths differ")
        if np.any(np.diff(tau) <= 0):
            raise InvalidParameterError("tau must be strictly increasing")
        if not (np.all(np.isfinite(value)) and np.all(np.isfinite(stderr))):
            raise InvalidParameterError("trace has NaN/Inf samples")
        if np.any(stderr < 0):
            raise InvalidParameterError("stderr must be >= 0")
        if self.meta.kind not in _KINDS:
            raise InvalidParameterError(f"unknown trace kind {self.meta.kind!r}")
        if self.meta.kind == "direct" and np.any(value < 0):
            raise InvalidParameterError("direct G2 traces are non-negative")
        for name, arr in (("tau", tau), ("value", value), ("stderr", stderr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def at(self, tau: float) -> float:
        """Sample at an exact grid point."""
        idx = np.flatnonzero(self.tau == tau)
        if idx.size == 0:
            raise InvalidParameterError(f"tau={tau} is not a sample of this trace")
        return float(self.value[idx[0]])


def _as_tau(tau: Union[float, np.ndarray, list]) -> np.ndarray:
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if t.size == 0:
        raise InvalidParameterError("empty tau grid")
    if not np.all(np.isfinite(t)):
        raise InvalidParameterError("tau grid has NaN/Inf samples")
    return t


def _scalar_or_array(t_in: Any, out: np.ndarray) -> Union[float, np.ndarray]:
    return float(out[0]) if np.ndim(t_in) == 0 else out


def _require_symmetric(spec: SpectralAmplitude) -> None:
    if not (spec.symmetric or spec.is_symmetric()):
        raise SymmetryError("the split form needs a symmetric spectrum, Λ(Ω) = Λ(−Ω)")


# ---------------------------
# Deterministic signals
# ---------------------------

def g2_direct(spec: SpectralAmplitude, tau: Union[float, np.ndarray, list]) -> Union[float, np.ndarray]:
    t = _as_tau(tau)
    return _scalar_or_array(tau, fourier_to_time(spec, t).intensity)


def signal_one_realization(
    spec: SpectralAmplitude,
    m_total: TransferFunction,
    band: Literal["full", "positive"] = "full",
) -> float:
    """
    |Σ_Ω Λ(Ω)·M(Ω)M(−Ω)·ΔΩ|² for one fixed total mask (τ enters through m_total).

    band="full" sums over every bin (pairs at +Ω and −Ω both contribute);
    band="positive" sums over Ω>0 only, the raw M_b signal of the split form.
    """
    if m_total.grid != spec.grid:
        raise GridMismatchError(f"mask grid {m_total.grid} != spectrum grid {spec.grid}")
    pp = pair_profile(m_total)
    dw = spec.grid.bin_width
    if band == "full":
        w = (spec.positive + spec.mirrored_positive) * dw
    elif band == "positive":
        w = spec.positive * dw
    else:
        raise InvalidParameterError(f"unknown band {band!r}")
    return float(abs(np.sum(w * pp)) ** 2)


def g2_split(
    spec: SpectralAmplitude,
    tau: float,
    m_random: Optional[TransferFunction] = None,
) -> float:
    """S_a(τ) − 4·S_b(τ) for one (optional) random mask."""
    _require_symmetric(spec)
    grid = spec.grid
    ma = ma_mask(tau, grid)
    mb = mb_mask(tau, grid)
    if m_random is not None:
        ma = compose(m_random, ma)
        mb = compose(m_random, mb)
    s_a = signal_one_realization(spec, ma, band="full")
    s_b = signal_one_realization(spec, mb, band="positive")
    return s_a - 4.0 * s_b


def analytic_sigma0(B: float, mu: float, sigma_p: float, tau: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """S(τ, σ=0) = B cos(μτ) e^{−σ′²τ²/2}, the empirical fit model."""
    t = np.asarray(tau, dtype=float)
    out = B * np.cos(mu * t) * np.exp(-(sigma_p**2) * t**2 / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def classical_signal(spec: SpectralAmplitude, tau: Union[float, np.ndarray, list]) -> Union[float, np.ndarray]:
    """Split signal of the fully dephased (classically correlated) state: 4ΔΩ²Σ_{Ω>0}|Λ|²cos²(Ωτ)."""
    _require_symmetric(spec)
    t = _as_tau(tau)
    dw = spec.grid.bin_width
    p = np.abs(spec.positive) ** 2
    c = np.cos(np.outer(t, spec.grid.positive_values)) ** 2
    return _scalar_or_array(tau, 4.0 * dw**2 * (c @ p))


def direct_trace(spec: SpectralAmplitude, tau: np.ndarray) -> CorrelationTrace:
    t = _as_tau(tau)
    value = fourier_to_time(spec, t).intensity
    return CorrelationTrace(tau=t, value=value, stderr=np.zeros_like(value), meta=TraceMeta(kind="direct"))


def expected_trace(spec: SpectralAmplitude, sigma: float, tau: np.ndarray) -> CorrelationTrace:
    """N→∞ prediction e^{−σ²}G²(τ) + (1−e^{−σ²})·classical_signal(τ)."""
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0 rad, got {sigma!r}")
    t = _as_tau(tau)
    f = math.exp(-(sigma**2))
    value = f * fourier_to_time(spec, t).intensity + (1.0 - f) * classical_signal(spec, t)
    return CorrelationTrace(
        tau=t,
        value=value,
        stderr=np.zeros_like(value),
        meta=TraceMeta(sigma=float(sigma), kind="expected"),
    )


# ---------------------------
# Batched kernel (ensembles)
# ---------------------------

class SplitKernel:
    """
    Precomputed split-signal evaluator for one (Λ, τ grid).

    signals(phases) takes a (R, n_pos) block of dephaser phases and returns the
    (R, n_tau) per-realization S_a − 4·S_b values.
    """

    def __init__(self, spec: SpectralAmplitude, tau: np.ndarray) -> None:
        _require_symmetric(spec)
        self.spec = spec
        self.tau = _as_tau(tau)
        dw = spec.grid.bin_width
        w = spec.grid.positive_values
        self._w_full = (spec.positive + spec.mirrored_positive) * dw
        self._w_pos = spec.positive * dw
        arg = np.outer(w, self.tau)
        self._e = np.exp(1j * arg)  # pair profile of M_a
        self._s = np.sin(arg)  # pair profile of M_b

    def signals(self, phases: np.ndarray) -> np.ndarray:
        z = np.exp(1j * np.atleast_2d(phases))
        a = (z * self._w_full) @ self._e
        b = (z * self._w_pos) @ self._s
        return np.abs(a) ** 2 - 4.0 * np.abs(b) ** 2

    def noiseless(self) -> np.ndarray:
        return self.signals(np.zeros((1, self.spec.grid.n_pos)))[0]


def trace_scan(
    spec: SpectralAmplitude,
    sigma: float,
    n_realizations: int,
    master_seed: int,
    tau: np.ndarray,
    workers: int = 1,
) -> CorrelationTrace:
    """Ensemble-averaged split trace, stderr = sample std/√n."""
    from bipho.montecarlo import EnsembleConfig, run_ensemble

    cfg = EnsembleConfig(n_realizations=n_realizations, sigma=sigma, master_seed=master_seed)
    trace, _ = run_ensemble(spec, cfg, tau, workers=workers)
    return trace
