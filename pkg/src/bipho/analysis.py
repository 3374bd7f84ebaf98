"""
Figure-level reductions over correlation traces.

Background is the mean over the window |τ| ∈ [180, 200] fs. The classically
correlated component is not flat near τ=0: its zero-delay value is
κ = classical_profile(0) ≈ 2 times its window mean, so peaks are extracted as
S(0) − κ·background and shapes by subtracting background·classical_profile(τ).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from bipho.correlation import CorrelationTrace, classical_signal, trace_scan
from bipho.density import fraction_entangled
from bipho.errors import FitError, InvalidParameterError
from bipho.spectral import (
    FrequencyGrid,
    SpectralAmplitude,
    double_gaussian,
    make_grid,
    make_tau_grid,
    width_to_wavelength,
)

logger = logging.getLogger(__name__)

Window = Tuple[Tuple[float, float], ...]
FitModel = Literal["envelope", "intensity"]

DEFAULT_WINDOW: Window = ((-200.0, -180.0), (180.0, 200.0))
DEFAULT_TARGET_HZ = 26.93

# fit precheck: (peak − tail median)/peak below this means "no correlation peak"
MIN_CONTRAST = 0.75
MIN_FIT_POINTS = 100


# ---------------------------
# Model
# ---------------------------

@dataclass(frozen=True, eq=False)
class FitResult:
    B: float
    mu: float
    sigma_p: float
    residual_rms: float
    covariance: np.ndarray = field(repr=False)
    model: FitModel = "envelope"
    nfev: int = 0

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.abs(np.diag(self.covariance)))

    def to_dict(self) -> Dict[str, Any]:
        err = self.errors
        return {
            "model": self.model,
            "B_hz": self.B,
            "mu_rad_per_fs": self.mu,
            "sigma_p_rad_per_fs": self.sigma_p,
            "B_err_hz": float(err[0]),
            "mu_err_rad_per_fs": float(err[1]),
            "sigma_p_err_rad_per_fs": float(err[2]),
            "residual_rms_hz": self.residual_rms,
            "nfev": self.nfev,
            "covariance": [[float(x) for x in row] for row in self.covariance],
        }


@dataclass(frozen=True)
class BackgroundEstimate:
    mean: float
    stderr: float
    window: Window = DEFAULT_WINDOW
    n_samples: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_hz": self.mean,
            "stderr_hz": self.stderr,
            "window_fs": [list(w) for w in self.window],
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True, eq=False)
class Curve:
    """A σ-indexed curve (fraction, background, peak ratio)."""

    name: str
    sigma: np.ndarray
    value: np.ndarray
    stderr: np.ndarray

    def __post_init__(self) -> None:
        arrs = {}
        for key in ("sigma", "value", "stderr"):
            a = np.array(getattr(self, key), dtype=float, copy=True).reshape(-1)
            a.setflags(write=False)
            arrs[key] = a
        if not (arrs["sigma"].size == arrs["value"].size == arrs["stderr"].size):
            raise InvalidParameterError(f"curve {self.name!r}: sigma/value/stderr lengths differ")
        for key, a in arrs.items():
            object.__setattr__(self, key, a)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "sigma_rad": self.sigma.tolist(),
            "value": self.value.tolist(),
            "stderr": self.stderr.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """S(σ, τ): one row per σ (increasing), one column per delay."""

    sigma: np.ndarray
    tau: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    name: str = "correlation_map"

    def __post_init__(self) -> None:
        sigma = np.array(self.sigma, dtype=float, copy=True).reshape(-1)
        tau = np.array(self.tau, dtype=float, copy=True).reshape(-1)
        value = np.array(self.value, dtype=float, copy=True)
        stderr = np.array(self.stderr, dtype=float, copy=True)
        shape = (sigma.size, tau.size)
        if value.shape != shape or stderr.shape != shape:
            raise InvalidParameterError(f"map {self.name!r}: value/stderr must have shape {shape}")
        for key, a in (("sigma", sigma), ("tau", tau), ("value", value), ("stderr", stderr)):
            a.setflags(write=False)
            object.__setattr__(self, key, a)

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.sigma.size), int(self.tau.size))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "shape": list(self.shape),
            "sigma_rad": self.sigma.tolist(),
            "tau_range_fs": [float(self.tau[0]), float(self.tau[-1])] if self.tau.size else [],
            "n_tau": int(self.tau.size),
        }


# ---------------------------
# Background + peak
# ---------------------------

def _window_mask(tau: np.ndarray, window: Window) -> np.ndarray:
    if not window:
        raise InvalidParameterError("empty background window")
    mask = np.zeros(tau.shape, dtype=bool)
    for lo, hi in window:
        if hi < lo:
            raise InvalidParameterError(f"background interval [{lo}, {hi}] is reversed")
        if tau[0] > lo or tau[-1] < hi:
            raise InvalidParameterError(
                f"trace [{tau[0]:g}, {tau[-1]:g}] fs does not cover the window [{lo:g}, {hi:g}]"
            )
        inside = (tau >= lo) & (tau <= hi)
        if not np.any(inside):
            raise InvalidParameterError(f"no samples in window [{lo:g}, {hi:g}] fs")
        mask |= inside
    return mask


def estimate_background(trace: CorrelationTrace, window: Window = DEFAULT_WINDOW) -> BackgroundEstimate:
    """
    Mean over the window samples. stderr is the larger of the scatter-based
    error (std/√m) and the mean per-point stderr, since window samples of one
    ensemble are correlated.
    """
    mask = _window_mask(trace.tau, window)
    v = trace.value[mask]
    m = int(v.size)
    mean = float(np.mean(v))
    scatter = float(np.std(v, ddof=1)) / math.sqrt(m) if m > 1 else 0.0
    per_point = float(np.mean(trace.stderr[mask]))
    return BackgroundEstimate(mean=mean, stderr=max(scatter, per_point), window=tuple(window), n_samples=m)


def classical_profile(
    spec: SpectralAmplitude,
    tau: np.ndarray,
    window: Window = DEFAULT_WINDOW,
) -> np.ndarray:
    """classical_signal(τ) divided by its mean over the window samples of `tau`."""
    t = np.asarray(tau, dtype=float)
    c = np.atleast_1d(classical_signal(spec, t))
    ref = float(np.mean(c[_window_mask(t, window)]))
    if ref <= 0:
        raise InvalidParameterError("classical signal vanishes over the background window")
    return c / ref


def extract_peak(
    trace: CorrelationTrace,
    spec: SpectralAmplitude,
    window: Window = DEFAULT_WINDOW,
) -> Tuple[float, float]:
    """(peak, stderr) with peak = S(0) − κ·background."""
    bg = estimate_background(trace, window)
    prof = classical_profile(spec, trace.tau, window)
    idx = np.flatnonzero(trace.tau == 0.0)
    if idx.size == 0:
        raise InvalidParameterError("trace has no τ=0 sample")
    i = int(idx[0])
    kappa = float(prof[i])
    peak = float(trace.value[i]) - kappa * bg.mean
    err = math.hypot(float(trace.stderr[i]), kappa * bg.stderr)
    return peak, err


def peak_shape(
    trace: CorrelationTrace,
    spec: SpectralAmplitude,
    window: Window = DEFAULT_WINDOW,
) -> CorrelationTrace:
    """Background-subtracted trace divided by its extracted peak."""
    bg = estimate_background(trace, window)
    prof = classical_profile(spec, trace.tau, window)
    peak, peak_err = extract_peak(trace, spec, window)
    if peak <= 0:
        raise InvalidParameterError(f"extracted peak {peak:.4g} Hz is not positive")
    shape = (trace.value - bg.mean * prof) / peak
    raw_err = np.hypot(trace.stderr, prof * bg.stderr) / peak
    err = np.hypot(raw_err, np.abs(shape) * (peak_err / peak))
    meta = trace.meta
    if meta.kind == "direct":
        # subtraction can push the tails below zero
        meta = replace(meta, kind="expected")
    return CorrelationTrace(tau=trace.tau, value=shape, stderr=err, meta=meta)


# ---------------------------
# σ sweeps
# ---------------------------

def default_tau() -> np.ndarray:
    return make_tau_grid(-250.0, 250.0, 1.0)


def sigma_scan(
    spec: SpectralAmplitude,
    sigmas: Sequence[float],
    n: int,
    seed: int,
    tau: Optional[np.ndarray] = None,
    workers: int = 1,
) -> List[CorrelationTrace]:
    """One ensemble trace per σ; every σ reuses the same master seed."""
    t = default_tau() if tau is None else np.asarray(tau, dtype=float)
    return [trace_scan(spec, float(s), n, seed, t, workers=workers) for s in sigmas]


def correlation_map(traces: Sequence[CorrelationTrace], name: str = "correlation_map") -> CorrelationMap:
    """Stack traces sharing one τ grid into a σ-by-τ map, rows sorted by σ."""
    if not traces:
        raise InvalidParameterError("correlation map needs at least one trace")
    tau = traces[0].tau
    for tr in traces[1:]:
        if not np.array_equal(tr.tau, tau):
            raise InvalidParameterError("correlation map traces must share one tau grid")
    order = sorted(range(len(traces)), key=lambda i: traces[i].meta.sigma)
    sigma = [traces[i].meta.sigma for i in order]
    if len(set(sigma)) != len(sigma):
        raise InvalidParameterError("correlation map needs distinct sigma values")
    return CorrelationMap(
        sigma=sigma,
        tau=tau,
        value=np.stack([traces[i].value for i in order]),
        stderr=np.stack([traces[i].stderr for i in order]),
        name=name,
    )


def peak_ratio_curve(
    traces: Sequence[CorrelationTrace],
    spec: SpectralAmplitude,
    reference: CorrelationTrace,
    window: Window = DEFAULT_WINDOW,
) -> Curve:
    p0, e0 = extract_peak(reference, spec, window)
    if p0 <= 0:
        raise InvalidParameterError("reference peak is not positive")
    sig, val, err = [], [], []
    for tr in traces:
        p, e = extract_peak(tr, spec, window)
        r = p / p0
        sig.append(tr.meta.sigma)
        val.append(r)
        err.append(math.hypot(e / p0, r * e0 / p0))
    return Curve(name="peak_ratio", sigma=sig, value=val, stderr=err)


def background_curve(traces: Sequence[CorrelationTrace], window: Window = DEFAULT_WINDOW) -> Curve:
    ests = [estimate_background(tr, window) for tr in traces]
    return Curve(
        name="background",
        sigma=[tr.meta.sigma for tr in traces],
        value=[b.mean for b in ests],
        stderr=[b.stderr for b in ests],
    )


def peak_decay_curve(
    spec: SpectralAmplitude,
    sigmas: Sequence[float],
    n: int,
    seed: int,
    tau: Optional[np.ndarray] = None,
    workers: int = 1,
    window: Window = DEFAULT_WINDOW,
) -> Curve:
    """Peak at τ=0 (background-corrected) relative to the σ=0 peak, per σ."""
    if any(not s >= 0 for s in sigmas):
        raise InvalidParameterError("sigmas must be >= 0 rad")
    traces = sigma_scan(spec, sigmas, n, seed, tau, workers)
    reference = trace_scan(spec, 0.0, 1, seed, traces[0].tau) if traces else None
    if reference is None:
        return Curve(name="peak_ratio", sigma=[], value=[], stderr=[])
    return peak_ratio_curve(traces, spec, reference, window)


def background_vs_sigma(
    spec: SpectralAmplitude,
    sigmas: Sequence[float],
    n: int,
    seed: int,
    tau: Optional[np.ndarray] = None,
    workers: int = 1,
    window: Window = DEFAULT_WINDOW,
) -> Curve:
    if any(not s >= 0 for s in sigmas):
        raise InvalidParameterError("sigmas must be >= 0 rad")
    return background_curve(sigma_scan(spec, sigmas, n, seed, tau, workers), window)


def fraction_curve(sigmas: Sequence[float]) -> Tuple[Curve, Curve]:
    """(entangled, classical) mixture fractions e^{−σ²} and 1 − e^{−σ²}."""
    s = np.asarray(list(sigmas), dtype=float)
    f = np.array([fraction_entangled(float(x)) for x in s])
    zeros = np.zeros_like(f)
    return (
        Curve(name="fraction_entangled", sigma=s, value=f, stderr=zeros),
        Curve(name="fraction_classical", sigma=s, value=1.0 - f, stderr=zeros),
    )


def crossing(curve: Curve, level: float) -> float:
    """First σ where the curve crosses `level`, by linear interpolation between samples."""
    order = np.argsort(curve.sigma, kind="stable")
    x = curve.sigma[order]
    y = curve.value[order] - level
    for i in range(x.size):
        if y[i] == 0.0:
            return float(x[i])
        if i + 1 < x.size and y[i] * y[i + 1] < 0:
            return float(x[i] + (x[i + 1] - x[i]) * y[i] / (y[i] - y[i + 1]))
    raise InvalidParameterError(f"curve {curve.name!r} never crosses {level:g}")


# ---------------------------
# Grid calibration
# ---------------------------

def _grid_for_width(bin_width: float, mu: float, sigma_p: float, support_sigmas: float) -> FrequencyGrid:
    n_pos = max(2, int(math.ceil((mu + support_sigmas * sigma_p) / bin_width)))
    return make_grid(n_pos, n_pos * bin_width)


def expected_background(spec: SpectralAmplitude, window: Window = DEFAULT_WINDOW, tau_step: float = 1.0) -> float:
    """σ→∞ background: window mean of the classical signal on a `tau_step` lattice."""
    if not window:
        raise InvalidParameterError("empty background window")
    tau = np.concatenate([make_tau_grid(lo, hi, tau_step) for lo, hi in window])
    return float(np.mean(np.atleast_1d(classical_signal(spec, tau))))


def calibrate_grid(
    B: float,
    mu: float,
    sigma_p: float,
    target_hz: float = DEFAULT_TARGET_HZ,
    window: Window = DEFAULT_WINDOW,
    support_sigmas: float = 6.0,
    shape: Literal["amplitude", "density"] = "amplitude",
    tau_step: float = 1.0,
) -> FrequencyGrid:
    """
    Bin width for which the fully dephased background equals `target_hz`.

    The classical background grows linearly with ΔΩ (fewer independent phase
    bins), so it is solved for ΔΩ with brentq; n_pos then covers μ + 6σ′.
    ΔΩ stays below π/(2·max|τ_window|) so the window sits well inside one
    period of the discrete transform.
    """
    if not target_hz > 0:
        raise InvalidParameterError(f"target background must be > 0 Hz, got {target_hz!r}")
    if not support_sigmas > 0:
        raise InvalidParameterError("support_sigmas must be > 0")
    # validates B, mu, sigma_p, shape
    double_gaussian(B, mu, sigma_p, make_grid(2, mu + support_sigmas * sigma_p), shape=shape)

    tau_edge = max(abs(x) for w in window for x in w)
    dw_hi = math.pi / (2.0 * tau_edge)
    dw_lo = dw_hi / 1000.0

    def _excess(dw: float) -> float:
        grid = _grid_for_width(dw, mu, sigma_p, support_sigmas)
        spec = double_gaussian(B, mu, sigma_p, grid, shape=shape)
        return expected_background(spec, window, tau_step) - target_hz

    f_lo, f_hi = _excess(dw_lo), _excess(dw_hi)
    if f_lo * f_hi > 0:
        raise InvalidParameterError(
            f"background {target_hz:g} Hz is not reachable "
            f"(range {f_lo + target_hz:.4g} .. {f_hi + target_hz:.4g} Hz)"
        )
    dw = optimize.brentq(_excess, dw_lo, dw_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    grid = _grid_for_width(dw, mu, sigma_p, support_sigmas)
    logger.info(
        "calibrated grid: n_pos=%d omega_max=%.9g rad/fs (bin %.6g rad/fs) -> %.6g Hz",
        grid.n_pos, grid.omega_max, grid.bin_width, _excess(dw) + target_hz,
    )
    return grid


# ---------------------------
# σ=0 fit
# ---------------------------

def envelope_model(tau: np.ndarray, B: float, mu: float, sigma_p: float) -> np.ndarray:
    """B cos(μτ) e^{−σ′²τ²/2}"""
    return B * np.cos(mu * tau) * np.exp(-(sigma_p**2) * tau**2 / 2.0)


def intensity_model(tau: np.ndarray, B: float, mu: float, sigma_p: float) -> np.ndarray:
    """B cos²(μτ) e^{−σ′²τ²}"""
    return B * np.cos(mu * tau) ** 2 * np.exp(-(sigma_p**2) * tau**2)


_MODELS = {"envelope": envelope_model, "intensity": intensity_model}


def _smooth(y: np.ndarray, width: int = 5) -> np.ndarray:
    if y.size < width:
        return y.copy()
    return np.convolve(y, np.ones(width) / width, mode="same")


def _first_feature(t: np.ndarray, y: np.ndarray, b0: float, model: FitModel) -> Optional[float]:
    """τ>0 of the first zero crossing (envelope) or first deep minimum (intensity)."""
    pos = t > 0
    tp, yp = t[pos], _smooth(y)[pos]
    if model == "envelope":
        for i in range(tp.size - 1):
            if yp[i] > 0 >= yp[i + 1]:
                return float(tp[i] + (tp[i + 1] - tp[i]) * yp[i] / (yp[i] - yp[i + 1]))
        return None
    for i in range(1, tp.size - 1):
        if yp[i] < 0.5 * b0 and yp[i] < yp[i - 1] and yp[i] <= yp[i + 1]:
            return float(tp[i])
    return None


def _initial_guess(t: np.ndarray, y: np.ndarray, model: FitModel) -> np.ndarray:
    b0 = float(np.max(y))
    tz = _first_feature(t, y, b0, model)
    mu0 = math.pi / (2.0 * tz) if tz else 1.0 / float(np.max(np.abs(t)))

    # log-envelope regression through the origin where |cos| is not small
    c = np.cos(mu0 * t)
    carrier = c if model == "envelope" else c**2
    ok = (np.abs(c) > 0.5) & (y > 0.05 * b0)
    ratio = np.where(ok, y / (b0 * np.where(ok, carrier, 1.0)), 1.0)
    ok &= (ratio > 0) & (ratio <= 1.5)
    s2 = 0.0
    if np.count_nonzero(ok) >= 3:
        x = t[ok] ** 2
        slope = float(np.sum(x * np.log(ratio[ok])) / np.sum(x * x))
        s2 = -2.0 * slope if model == "envelope" else -slope
    sp0 = math.sqrt(s2) if s2 > 0 else mu0
    return np.array([b0, mu0, sp0])


def fit_sigma0(
    trace: CorrelationTrace,
    model: FitModel = "envelope",
    window: float = 150.0,
    min_points: int = MIN_FIT_POINTS,
) -> FitResult:
    """
    Least-squares fit of the σ=0 model over |τ| ≤ window.

    model="envelope" is B cos(μτ)e^{−σ′²τ²/2}; model="intensity" is
    B cos²(μτ)e^{−σ′²τ²}, the exact |Λ̂|² of the double-Gaussian amplitude.
    Traces without a clear correlation peak are refused with FitError.
    """
    if model not in _MODELS:
        raise InvalidParameterError(f"unknown fit model {model!r}")
    f = _MODELS[model]
    sel = np.abs(trace.tau) <= window
    t = trace.tau[sel]
    y = trace.value[sel]
    if t.size < min_points:
        raise InvalidParameterError(f"fit needs >= {min_points} samples in |tau| <= {window:g} fs, got {t.size}")

    peak = float(np.max(y))
    tail = y[np.abs(t) >= 0.8 * window]
    tail_level = float(np.median(tail)) if tail.size else 0.0
    if not peak > 0 or (peak - tail_level) / peak < MIN_CONTRAST:
        rms = float(np.sqrt(np.mean((y - np.mean(y)) ** 2)))
        logger.warning("fit refused: no correlation peak (max=%.4g Hz, tail=%.4g Hz)", peak, tail_level)
        raise FitError("no correlation peak above the background", residual_rms=rms)

    x0 = _initial_guess(t, y, model)

    def _res(p: np.ndarray) -> np.ndarray:
        return f(t, p[0], p[1], p[2]) - y

    try:
        res = optimize.least_squares(
            _res,
            x0,
            bounds=([0.0, 0.0, 0.0], [np.inf, np.inf, np.inf]),
            x_scale=np.abs(x0),
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=5000,
        )
    except (ValueError, FloatingPointError) as e:
        raise FitError(f"least squares failed: {e}") from e

    B, mu, sp = (float(v) for v in res.x)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    if res.status <= 0 or not (B > 0 and sp > 0 and math.isfinite(mu)):
        raise FitError(f"fit did not converge: {res.message}", residual_rms=rms, nfev=int(res.nfev))

    dof = max(t.size - 3, 1)
    s2 = float(np.sum(res.fun**2)) / dof
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj) * s2

    logger.info("fit %s: B=%.6g mu=%.6g sigma_p=%.6g rms=%.3g (nfev=%d)", model, B, mu, sp, rms, res.nfev)
    return FitResult(B=B, mu=mu, sigma_p=sp, residual_rms=rms, covariance=cov, model=model, nfev=int(res.nfev))


def spectral_width(fit: FitResult, lambda0: float = 1064.0) -> Tuple[float, float]:
    """(√(σ′²+μ²) in rad/fs, the same width in nm at λ₀)."""
    w = math.hypot(fit.sigma_p, fit.mu)
    return w, width_to_wavelength(w, lambda0)
