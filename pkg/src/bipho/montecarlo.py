"""
Deterministic ensemble orchestration.

Realizations are cut into fixed blocks of `block_size` indices. Each block is
reduced to (count, mean, M2) on its own; blocks are then merged pairwise in
block-index order. Neither the block layout nor the merge order depends on the
number of workers, so a run is bit-identical for any `workers`.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Tuple

import numpy as np

from bipho.correlation import CorrelationTrace, SplitKernel, TraceMeta
from bipho.errors import BiphoError, InvalidParameterError
from bipho.seeding import derive_seed
from bipho.shaper import draw_phase_block
from bipho.spectral import SpectralAmplitude

logger = logging.getLogger(__name__)

__all__ = [
    "EnsembleConfig",
    "RunStats",
    "derive_seed",
    "emulate_measurement",
    "poissonize",
    "run_ensemble",
]


@dataclass(frozen=True)
class EnsembleConfig:
    n_realizations: int = 10000
    sigma: float = 0.0
    master_seed: int = 0
    acquisition_time: float = 1.0  # s, Poisson synthesis only
    dark_rate: float = 0.0  # Hz
    poisson: bool = False
    block_size: int = 256

    def __post_init__(self) -> None:
        if int(self.n_realizations) != self.n_realizations or self.n_realizations < 1:
            raise InvalidParameterError(f"n_realizations must be >= 1, got {self.n_realizations!r}")
        if not self.sigma >= 0:
            raise InvalidParameterError(f"sigma must be >= 0 rad, got {self.sigma!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidParameterError("master_seed must be an unsigned 64-bit integer")
        if self.dark_rate < 0:
            raise InvalidParameterError(f"dark_rate must be >= 0 Hz, got {self.dark_rate!r}")
        if self.poisson and not self.acquisition_time > 0:
            raise InvalidParameterError("acquisition_time must be > 0 s when Poisson synthesis is on")
        if self.block_size < 1:
            raise InvalidParameterError("block_size must be >= 1")


@dataclass(frozen=True, eq=False)
class RunStats:
    mean: np.ndarray
    stderr: np.ndarray
    n_effective: int
    wall_time: float

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "n_effective": self.n_effective,
            "max_stderr_hz": float(np.max(self.stderr)) if self.stderr.size else 0.0,
            "mean_stderr_hz": float(np.mean(self.stderr)) if self.stderr.size else 0.0,
        }
        if include_timing:
            d["wall_time_s"] = round(self.wall_time, 6)
        return d


# ---------------------------
# Blocks + reduction
# ---------------------------

_Moments = Tuple[int, np.ndarray, np.ndarray]  # (count, mean, M2)


def _block_moments(kernel: SplitKernel, sigma: float, master: int, start: int, stop: int) -> _Moments:
    s = kernel.signals(draw_phase_block(sigma, master, start, stop, kernel.spec.grid))
    mean = np.mean(s, axis=0)
    m2 = np.sum((s - mean) ** 2, axis=0)
    logger.debug("block [%d, %d) done", start, stop)
    return stop - start, mean, m2


def _merge(a: _Moments, b: _Moments) -> _Moments:
    # Chan et al. parallel variance update
    na, ma, qa = a
    nb, mb, qb = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = qa + qb + delta**2 * (na * nb / n)
    return n, mean, m2


def _pairwise(parts: List[_Moments]) -> _Moments:
    while len(parts) > 1:
        nxt = [_merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def run_ensemble(
    spec: SpectralAmplitude,
    config: EnsembleConfig,
    tau: np.ndarray,
    workers: int = 1,
) -> Tuple[CorrelationTrace, RunStats]:
    """Equal-weight (p_j = 1/N) average of the split signal over N random dephasers."""
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    t0 = time.perf_counter()
    kernel = SplitKernel(spec, tau)
    n = int(config.n_realizations)

    if config.sigma == 0:
        # every realization is the identity mask
        mean = kernel.noiseless()
        stderr = np.zeros_like(mean)
    else:
        bounds = [(s, min(s + config.block_size, n)) for s in range(0, n, config.block_size)]

        def _job(b: Tuple[int, int]) -> _Moments:
            return _block_moments(kernel, config.sigma, config.master_seed, b[0], b[1])

        try:
            if workers == 1 or len(bounds) == 1:
                parts = [_job(b) for b in bounds]
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    parts = list(pool.map(_job, bounds))
        except BiphoError:
            raise
        except Exception as e:
            raise BiphoError(f"ensemble run failed: {e!r}") from e

        count, mean, m2 = _pairwise(parts)
        if count > 1:
            stderr = np.sqrt(np.maximum(m2, 0.0) / (count - 1)) / math.sqrt(count)
        else:
            stderr = np.zeros_like(mean)

    wall = time.perf_counter() - t0
    trace = CorrelationTrace(
        tau=kernel.tau,
        value=mean,
        stderr=stderr,
        meta=TraceMeta(
            sigma=float(config.sigma),
            n_realizations=n,
            seed=int(config.master_seed),
            kind="split",
        ),
    )
    stats = RunStats(mean=trace.value, stderr=trace.stderr, n_effective=n, wall_time=wall)
    logger.info(
        "ensemble sigma=%g n=%d tau=%d workers=%d: %.2fs",
        config.sigma, n, kernel.tau.size, workers, wall,
    )
    return trace, stats


# ---------------------------
# Measurement noise
# ---------------------------

def poissonize(
    trace: CorrelationTrace,
    acquisition_time: float,
    dark_rate: float = 0.0,
    seed: int = 0,
) -> CorrelationTrace:
    """
    Dark-count subtracted counting emulation: counts ~ Poisson((rate + dark)·T),
    value = counts/T − dark, stderr = √counts/T. Negative expected rates are
    clipped to zero and flagged in meta.
    """
    if not acquisition_time > 0:
        raise InvalidParameterError(f"acquisition_time must be > 0 s, got {acquisition_time!r}")
    if dark_rate < 0:
        raise InvalidParameterError(f"dark_rate must be >= 0 Hz, got {dark_rate!r}")

    expected = (trace.value + dark_rate) * acquisition_time
    clipped = bool(np.any(expected < 0))
    if clipped:
        logger.warning("poissonize: %d negative expected rates clipped to 0", int(np.sum(expected < 0)))
        expected = np.maximum(expected, 0.0)

    counts = np.random.default_rng(int(seed)).poisson(expected).astype(float)
    value = counts / acquisition_time - dark_rate
    stderr = np.sqrt(counts) / acquisition_time
    meta = replace(trace.meta, kind="measured-sim", clipped=clipped or trace.meta.clipped)
    return CorrelationTrace(tau=trace.tau, value=value, stderr=stderr, meta=meta)


def emulate_measurement(
    spec: SpectralAmplitude,
    sigma: float,
    tau: np.ndarray,
    n_acquisitions: int = 100,
    acquisition_time: float = 1.0,
    dark_rate: float = 0.0,
    master_seed: int = 0,
    workers: int = 1,
) -> CorrelationTrace:
    """n_acquisitions random SLM settings, then counting noise over the total integration time."""
    cfg = EnsembleConfig(
        n_realizations=n_acquisitions,
        sigma=sigma,
        master_seed=master_seed,
        acquisition_time=acquisition_time,
        dark_rate=dark_rate,
        poisson=True,
    )
    trace, _ = run_ensemble(spec, cfg, tau, workers=workers)
    # phase blocks use indices below n_acquisitions, so this noise stream is independent
    noise_seed = derive_seed(master_seed, n_acquisitions)
    return poissonize(trace, n_acquisitions * acquisition_time, dark_rate, seed=noise_seed)
