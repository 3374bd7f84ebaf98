from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import typer

from bipho import __version__ as BIPHO_VERSION
from bipho import density, export, paths
from bipho.analysis import DEFAULT_WINDOW, estimate_background, expected_background
from bipho.config import RunConfig
from bipho.correlation import g2_direct, g2_split
from bipho.errors import BiphoError
from bipho.montecarlo import EnsembleConfig, run_ensemble
from bipho.shaper import pair_phase_correlator
from bipho.spectral import SpectralAmplitude, double_gaussian, make_grid, make_tau_grid

EXIT_VERIFY_FAILED = 3

# the correlator check always covers these, on top of verify.sigmas
CORRELATOR_SIGMAS = (0.5, 1.0, 2.0)
# fully dephased: e^{−σ²} ≈ 4e-44
BACKGROUND_SIGMA = 10.0

# ---------------------------
# Model
# ---------------------------

@dataclass
class CheckResult:
    name: str
    status: str  # OK | FAIL
    detail: str = ""
    values: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _icon(status: str) -> str:
    return "✅" if (status or "").upper() == "OK" else "❌"


def _status(ok: bool) -> str:
    return "OK" if ok else "FAIL"


def correlator_sigmas(cfg: RunConfig) -> List[float]:
    return sorted(set(CORRELATOR_SIGMAS) | set(cfg.verify.sigmas))


def _oracle_spectrum(cfg: RunConfig) -> SpectralAmplitude:
    s = cfg.spectrum
    grid = make_grid(cfg.verify.n_pos, cfg.verify.omega_max)
    return double_gaussian(s.B, s.mu, s.sigma_p, grid, shape=s.shape)


# ---------------------------
# Checks
# ---------------------------

def _check_states(spec: SpectralAmplitude, mixtures: Dict[float, density.DensityMatrix]) -> CheckResult:
    """Hermitian, unit trace and PSD for every constructed state; ρ⁽q⁾ pure."""
    states = {
        "pure": density.pure_state(spec),
        "classical": density.classical_state(spec),
    }
    for s, rho in mixtures.items():
        states[f"ensemble(sigma={s:g})"] = rho
        states[f"predicted(sigma={s:g})"] = density.predicted_mixture(s, spec)
    bad: List[str] = []
    for name, rho in states.items():
        try:
            density.validate(rho)
        except BiphoError as e:
            bad.append(f"{name}: {e}")
    purity = density.purity(states["pure"])
    if abs(purity - 1.0) > 1e-10:
        bad.append(f"pure state purity {purity:.12g} != 1")
    return CheckResult(
        name="Density-matrix invariants",
        status=_status(not bad),
        detail="; ".join(bad) if bad else f"{len(states)} states valid, purity(pure)={purity:.12g}",
        values={"purity_pure": purity, "n_states": len(states)},
    )


def _check_diagonal(spec: SpectralAmplitude, mixtures: Dict[float, density.DensityMatrix]) -> CheckResult:
    ref = density.pure_state(spec).diagonal
    worst = 0.0
    for rho in mixtures.values():
        worst = max(worst, float(np.max(np.abs(rho.diagonal - ref))))
    return CheckResult(
        name="Dephasing keeps populations",
        status=_status(worst == 0.0),
        detail=f"max |diag(ensemble) - diag(pure)| = {worst:.3g}",
        values={"max_abs_diff": worst},
    )


def _check_correlator(cfg: RunConfig, spec: SpectralAmplitude) -> CheckResult:
    v = cfg.verify
    grid = spec.grid
    n = v.n_correlator
    k = grid.n_pos  # first Ω>0 bin
    l_distinct = grid.n_pos + 1
    l_mirror = grid.mirror(k)
    tol = 5.0 / math.sqrt(n) * v.tolerance_scale
    rows: List[Dict[str, Any]] = []
    ok = True
    for s in correlator_sigmas(cfg):
        same = pair_phase_correlator(s, grid, k, l_mirror, n, cfg.ensemble.master_seed)
        distinct = pair_phase_correlator(s, grid, k, l_distinct, n, cfg.ensemble.master_seed)
        want = math.exp(-(s**2))
        err = abs(distinct - want)
        row_ok = same == 1.0 and err <= tol
        ok &= row_ok
        rows.append(
            {
                "sigma": s,
                "same_abs_omega": [same.real, same.imag],
                "distinct": [distinct.real, distinct.imag],
                "expected": want,
                "abs_error": err,
                "tolerance": tol,
                "ok": row_ok,
            }
        )
    detail = ", ".join(f"sigma={r['sigma']:g}: |err|={r['abs_error']:.2e}" for r in rows)
    return CheckResult(
        name="Four-phase correlator",
        status=_status(ok),
        detail=f"N={n}, tol={tol:.2e}; {detail}",
        values={"rows": rows},
    )


def _check_mixture(
    cfg: RunConfig,
    spec: SpectralAmplitude,
    mixtures: Dict[float, density.DensityMatrix],
) -> CheckResult:
    scale = density.matrix_distance(density.pure_state(spec), density.classical_state(spec))
    limit = 0.05 * scale * cfg.verify.tolerance_scale
    rows: List[Dict[str, Any]] = []
    ok = True
    for s, rho in mixtures.items():
        d = density.matrix_distance(rho, density.predicted_mixture(s, spec))
        # σ=0 is exact
        row_ok = d == 0.0 if s == 0 else d <= limit
        ok &= row_ok
        rows.append({"sigma": s, "distance": d, "limit": limit, "ok": row_ok})
    detail = ", ".join(f"sigma={r['sigma']:g}: {r['distance']:.3g}" for r in rows)
    return CheckResult(
        name="Ensemble vs mixture prediction",
        status=_status(ok),
        detail=f"Frobenius distance (limit {limit:.3g}): {detail}",
        values={"rows": rows, "pure_classical_distance": scale},
    )


def _check_trace_linearity(
    cfg: RunConfig,
    spec: SpectralAmplitude,
    mixtures: Dict[float, density.DensityMatrix],
) -> CheckResult:
    """Ensemble split signal == N_Λ·Tr[ρ_ensemble E(τ)] for the same realizations."""
    tau = np.array([-120.0, -40.0, 0.0, 25.0, 60.0, 190.0])
    worst = 0.0
    for s, rho in mixtures.items():
        ens = EnsembleConfig(
            n_realizations=cfg.verify.n_realizations, sigma=s, master_seed=cfg.ensemble.master_seed
        )
        trace, _ = run_ensemble(spec, ens, tau)
        oracle = np.array([density.expected_signal(rho, spec, t) for t in tau])
        ref = max(float(np.max(np.abs(oracle))), 1e-300)
        worst = max(worst, float(np.max(np.abs(trace.value - oracle))) / ref)
    return CheckResult(
        name="Trace linearity",
        status=_status(worst <= 1e-9),
        detail=f"max relative deviation {worst:.3g} (limit 1e-9)",
        values={"max_relative_deviation": worst},
    )


def _check_split_identity(spec: SpectralAmplitude) -> CheckResult:
    tau = np.linspace(-250.0, 250.0, 200)
    direct = np.atleast_1d(g2_direct(spec, tau))
    split = np.array([g2_split(spec, t) for t in tau])
    peak = float(np.max(direct))
    worst = float(np.max(np.abs(split - direct))) / peak
    return CheckResult(
        name="Split-form identity",
        status=_status(worst <= 1e-9),
        detail=f"max |S_a - 4 S_b - G2| / G2(0) = {worst:.3g} over 200 delays",
        values={"max_relative_deviation": worst},
    )


def _check_background(cfg: RunConfig, spec: SpectralAmplitude) -> CheckResult:
    """Window background at σ=10: oracle against the closed form, then the ensemble against the oracle."""
    tau = np.concatenate([make_tau_grid(lo, hi, cfg.tau.step) for lo, hi in DEFAULT_WINDOW])
    rho = density.predicted_mixture(BACKGROUND_SIGMA, spec)
    oracle = float(np.mean([density.expected_signal(rho, spec, t) for t in tau]))
    closed = expected_background(spec, tau_step=cfg.tau.step)
    rel = abs(oracle - closed) / closed

    ens = EnsembleConfig(
        n_realizations=cfg.verify.n_realizations, sigma=BACKGROUND_SIGMA, master_seed=cfg.ensemble.master_seed
    )
    trace, _ = run_ensemble(spec, ens, tau)
    bg = estimate_background(trace)
    dev = abs(bg.mean - oracle)
    limit = 4.0 * bg.stderr * cfg.verify.tolerance_scale
    return CheckResult(
        name="Fully dephased background",
        status=_status(rel <= 1e-9 and dev <= limit),
        detail=(
            f"oracle {oracle:.6g} Hz (closed form rel. diff {rel:.2g}), "
            f"ensemble {bg.mean:.6g} ± {bg.stderr:.2g} Hz (limit {limit:.3g})"
        ),
        values={
            "oracle_hz": oracle,
            "closed_form_hz": closed,
            "ensemble_hz": bg.mean,
            "ensemble_stderr_hz": bg.stderr,
            "limit_hz": limit,
        },
    )


def _check_crossover() -> CheckResult:
    half = density.fraction_entangled(math.sqrt(math.log(2.0)))
    two = density.fraction_entangled(2.0)
    ok = abs(half - 0.5) <= 4 * np.finfo(float).eps and two < 0.02
    return CheckResult(
        name="Mixture crossover",
        status=_status(ok),
        detail=f"fraction(sqrt(ln 2))={half!r}, fraction(2)={two:.4g}",
        values={"fraction_at_sqrt_ln2": half, "fraction_at_2": two},
    )


def collect_checks(cfg: RunConfig, out: Optional[Path] = None) -> List[CheckResult]:
    spec = _oracle_spectrum(cfg)
    v = cfg.verify
    mixtures = {
        s: density.ensemble_average(spec, s, v.n_realizations, cfg.ensemble.master_seed) for s in v.sigmas
    }
    if out is not None:
        d = paths.verify_dir(out)
        d.mkdir(parents=True, exist_ok=True)
        for s, rho in mixtures.items():
            export.write_matrix_csv(rho, d / f"rho_ensemble_sigma_{s!r}.csv")
            export.write_matrix_csv(density.predicted_mixture(s, spec), d / f"rho_predicted_sigma_{s!r}.csv")

    return [
        _check_states(spec, mixtures),
        _check_diagonal(spec, mixtures),
        _check_correlator(cfg, spec),
        _check_mixture(cfg, spec, mixtures),
        _check_trace_linearity(cfg, spec, mixtures),
        _check_split_identity(spec),
        _check_background(cfg, spec),
        _check_crossover(),
    ]


def run_verify(cfg: RunConfig, out: Path, json_out: bool = False) -> int:
    """Run the oracle suite, write <out>/verify/report.json, return 0 or EXIT_VERIFY_FAILED."""
    t0 = time.perf_counter()
    results = collect_checks(cfg, out)
    exit_code = 0 if all(r.status == "OK" for r in results) else EXIT_VERIFY_FAILED

    payload = {
        "bipho_version": BIPHO_VERSION,
        "exit_code": exit_code,
        "n_pos": cfg.verify.n_pos,
        "n_realizations": cfg.verify.n_realizations,
        "n_correlator": cfg.verify.n_correlator,
        "sigmas": list(cfg.verify.sigmas),
        "tolerance_scale": cfg.verify.tolerance_scale,
        "results": [r.to_dict() for r in results],
    }
    vdir = paths.verify_dir(out)
    vdir.mkdir(parents=True, exist_ok=True)
    report = export.write_json(payload, vdir / "report.json")

    if json_out:
        typer.echo(json.dumps(payload, ensure_ascii=False, indent=2))
        return exit_code

    typer.echo(f"BIPHO verify - v{BIPHO_VERSION}")
    typer.echo("-" * 60)
    for r in results:
        typer.echo(f"{_icon(r.status)} {r.name}: {r.status}")
        if r.detail:
            typer.echo(f"    {r.detail}")
    typer.echo("-" * 60)
    if exit_code == 0:
        typer.echo("✅ All checks OK.")
    else:
        typer.echo("❌ Failures detected.")
    typer.echo(f"[bipho] report: {report}  ({time.perf_counter() - t0:.1f}s)")
    return exit_code


__all__ = ["CheckResult", "collect_checks", "correlator_sigmas", "run_verify"]
