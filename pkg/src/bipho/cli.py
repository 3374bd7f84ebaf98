from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator, List, Optional, Tuple

import numpy as np
import typer

try:
    from typer._click.exceptions import UsageError  # typer >= 0.26 vendors click
except ImportError:
    from click.exceptions import UsageError

from bipho import __version__, export, paths
from bipho.config import GridConfig, RunConfig, apply_overrides, dump_config, load_config, to_dict
from bipho.errors import BiphoError, ConfigError, FitError
from bipho.shaper import quadratic_phase, shape_spectrum
from bipho.spectral import SpectralAmplitude, double_gaussian, make_grid, make_tau_grid

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

# trace kinds produced by this simulator; their σ=0 shape is |Λ̂|²
_SIMULATED_KINDS = ("direct", "split", "measured-sim", "expected")

app = typer.Typer(
    add_completion=False,
    invoke_without_command=True,
    context_settings={"help_option_names": ["-h", "--help"]},
    epilog="Tip: use `bipho COMMAND -h` (or `--help`) to see all options for that command.",
)

logger = logging.getLogger(__name__)


# ---------------------------
# Shared options
# ---------------------------

def _config_opt() -> Any:
    return typer.Option(None, "--config", "-c", envvar="BIPHO_CONFIG", help="YAML/JSON config file.")


def _seed_opt() -> Any:
    return typer.Option(None, "--seed", envvar="BIPHO_SEED", help="Master seed (unsigned 64-bit).")


def _out_opt() -> Any:
    return typer.Option(None, "--out", "-o", envvar="BIPHO_OUT", help="Output directory.")


def _sigma_opt() -> Any:
    return typer.Option(None, "--sigma", envvar="BIPHO_SIGMA", help="Comma-separated σ list in rad, e.g. 0,0.5,1.")


def _workers_opt() -> Any:
    return typer.Option(1, "--workers", "-w", envvar="BIPHO_WORKERS", help="Worker threads for ensembles.")


def _tau_step_opt() -> Any:
    return typer.Option(None, "--tau-step", envvar="BIPHO_TAU_STEP", help="Delay step in fs.")


def _n_opt() -> Any:
    return typer.Option(None, "--n-realizations", "-n", envvar="BIPHO_N_REALIZATIONS", help="Ensemble size.")


def _parse_sigmas(text: Optional[str]) -> Optional[Tuple[float, ...]]:
    if text is None:
        return None
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError("empty sigma list", key="--sigma")
    try:
        return tuple(float(t) for t in items)
    except ValueError as e:
        raise ConfigError(f"not a number list: {text!r}", key="--sigma") from e


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map library errors onto the documented exit codes."""
    try:
        yield
    except ConfigError as e:
        typer.echo(f"[bipho] config error: {e}", err=True)
        raise typer.Exit(code=EXIT_CONFIG)
    except FitError as e:
        typer.echo(f"[bipho] fit failed: {e}", err=True)
        raise typer.Exit(code=EXIT_RUNTIME)
    except (BiphoError, OSError, np.linalg.LinAlgError, FloatingPointError) as e:
        typer.echo(f"[bipho] error: {e}", err=True)
        raise typer.Exit(code=EXIT_RUNTIME)


def _load(
    config: Optional[Path],
    seed: Optional[int] = None,
    out: Optional[str] = None,
    sigma: Optional[str] = None,
    tau_step: Optional[float] = None,
    n_realizations: Optional[int] = None,
) -> RunConfig:
    cfg = load_config(config)
    return apply_overrides(
        cfg,
        seed=seed,
        out=out,
        sigmas=_parse_sigmas(sigma),
        tau_step=tau_step,
        n_realizations=n_realizations,
    )


def _check_workers(workers: int) -> None:
    if workers < 1:
        raise ConfigError(f"must be >= 1, got {workers}", key="--workers")


def _resolve_spectrum(cfg: RunConfig) -> Tuple[RunConfig, SpectralAmplitude]:
    """Run the grid calibration if requested, pin its result into the config, apply the static mask."""
    s = cfg.spectrum
    if cfg.grid.calibrate_to_hz is not None:
        from bipho.analysis import calibrate_grid

        grid = calibrate_grid(s.B, s.mu, s.sigma_p, cfg.grid.calibrate_to_hz, shape=s.shape, tau_step=cfg.tau.step)
        cfg = replace(cfg, grid=GridConfig(n_pos=grid.n_pos, omega_max=grid.omega_max, calibrate_to_hz=None))
        logger.info("grid pinned after calibration: n_pos=%d omega_max=%r", grid.n_pos, grid.omega_max)
    else:
        grid = make_grid(cfg.grid.n_pos, cfg.grid.omega_max)
    spec = double_gaussian(s.B, s.mu, s.sigma_p, grid, shape=s.shape)
    if cfg.shaper.gdd != 0:
        spec = shape_spectrum(spec, quadratic_phase(cfg.shaper.gdd, grid))
        logger.info("static quadratic phase gdd=%g fs^2 folded into the spectrum", cfg.shaper.gdd)
    return cfg, spec


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output.directory)
    paths.ensure_dirs(out)
    return out


def _write_resolved(cfg: RunConfig, out: Path) -> Path:
    return export.write_json(to_dict(cfg), paths.resolved_config_file(out))


def _grid_extra(spec: SpectralAmplitude) -> dict:
    return {
        "grid": {"n_pos": spec.grid.n_pos, "omega_max": spec.grid.omega_max, "bin_width": spec.grid.bin_width},
        "spectrum": spec.label,
    }


def _write_map(traces: List[Any], out: Path, cfg: RunConfig) -> None:
    """σ-by-τ map under curves/ when the run covers several distinct σ."""
    from bipho.analysis import correlation_map

    sigmas = [tr.meta.sigma for tr in traces]
    if len(sigmas) < 2 or len(set(sigmas)) != len(sigmas):
        return
    cmap = correlation_map(traces)
    written = export.write_map(cmap, paths.curves_dir(out), formats=cfg.output.formats)
    typer.echo(f"[bipho] map {cmap.shape[0]}x{cmap.shape[1]} -> {written[0]}")


# ---------------------------
# Callback
# ---------------------------

@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: bool = typer.Option(False, "--version", help="Show version and exit"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True, help="-v info, -vv debug logging."),
):
    level = logging.WARNING if verbose == 0 else (logging.INFO if verbose == 1 else logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )

    if version:
        typer.echo(f"bipho {__version__}")
        raise typer.Exit()

    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit()


# ---------------------------
# Commands
# ---------------------------

@app.command()
def simulate(
    config: Optional[Path] = _config_opt(),
    seed: Optional[int] = _seed_opt(),
    out: Optional[str] = _out_opt(),
    sigma: Optional[str] = _sigma_opt(),
    workers: int = _workers_opt(),
    tau_step: Optional[float] = _tau_step_opt(),
    n_realizations: Optional[int] = _n_opt(),
):
    """Ensemble-averaged S(τ) for every σ in the list (CSV + JSON sidecar per σ)."""
    from bipho.correlation import expected_trace
    from bipho.montecarlo import EnsembleConfig, emulate_measurement, run_ensemble

    with _exit_codes():
        _check_workers(workers)
        cfg = _load(config, seed, out, sigma, tau_step, n_realizations)
        out_dir = _prepare_out(cfg)
        cfg, spec = _resolve_spectrum(cfg)
        _write_resolved(cfg, out_dir)

        ens, noise = cfg.ensemble, cfg.noise
        tau = make_tau_grid(cfg.tau.min, cfg.tau.max, cfg.tau.step)
        tdir = paths.traces_dir(out_dir)
        typer.echo(
            f"[bipho] grid n_pos={spec.grid.n_pos} omega_max={spec.grid.omega_max:.6g} rad/fs, "
            f"{tau.size} delays, sigma={list(ens.sigma_list)}"
        )

        traces = []
        for s in ens.sigma_list:
            stats = None
            if noise.poisson:
                trace = emulate_measurement(
                    spec,
                    s,
                    tau,
                    n_acquisitions=noise.n_acquisitions,
                    acquisition_time=noise.acquisition_time,
                    dark_rate=noise.dark_rate,
                    master_seed=ens.master_seed,
                    workers=workers,
                )
            else:
                run_cfg = EnsembleConfig(
                    n_realizations=ens.n_realizations,
                    sigma=s,
                    master_seed=ens.master_seed,
                    block_size=ens.block_size,
                )
                trace, stats = run_ensemble(spec, run_cfg, tau, workers=workers)

            written = export.write_trace(
                trace, tdir, paths.trace_stem(s), stats=stats, extra=_grid_extra(spec), formats=cfg.output.formats
            )
            model = expected_trace(spec, s, tau)
            export.write_trace(model, tdir, paths.expected_stem(s), extra=_grid_extra(spec), formats=cfg.output.formats)
            peak = trace.at(0.0) if np.any(trace.tau == 0.0) else float("nan")
            typer.echo(f"[bipho] sigma={s:g}: S(0)={peak:.4f} Hz -> {written[0]}")
            traces.append(trace)

        _write_map(traces, out_dir, cfg)

    typer.echo(f"[bipho] done: {out_dir}")


@app.command()
def verify(
    config: Optional[Path] = _config_opt(),
    seed: Optional[int] = _seed_opt(),
    out: Optional[str] = _out_opt(),
    json_out: bool = typer.Option(False, "--json", help="Output JSON only (machine-readable)."),
):
    """Density-matrix oracle suite. Exit code 3 when any check fails."""
    from bipho.verify import run_verify

    with _exit_codes():
        cfg = _load(config, seed, out)
        out_dir = _prepare_out(cfg)
        _write_resolved(cfg, out_dir)
        code = run_verify(cfg, out_dir, json_out=json_out)
    raise typer.Exit(code=code)


def _sweep_sigmas(cfg: RunConfig, sigma: Optional[str]) -> Tuple[float, ...]:
    explicit = _parse_sigmas(sigma)
    if explicit is not None:
        return explicit
    sw = cfg.sweep
    n = int(round((sw.sigma_max - sw.sigma_min) / sw.sigma_step)) + 1
    return tuple(float(np.round(sw.sigma_min + i * sw.sigma_step, 12)) for i in range(n))


@app.command()
def sweep(
    config: Optional[Path] = _config_opt(),
    seed: Optional[int] = _seed_opt(),
    out: Optional[str] = _out_opt(),
    sigma: Optional[str] = _sigma_opt(),
    workers: int = _workers_opt(),
    tau_step: Optional[float] = _tau_step_opt(),
    n_realizations: Optional[int] = _n_opt(),
):
    """Fraction, background and peak-ratio curves as functions of σ."""
    from bipho import analysis
    from bipho.correlation import trace_scan

    with _exit_codes():
        _check_workers(workers)
        cfg = _load(config, seed, out, None, tau_step, None)
        sigmas = _sweep_sigmas(cfg, sigma)
        if any(s < 0 for s in sigmas):
            raise ConfigError("sigma values must be >= 0 rad", key="--sigma")
        n = n_realizations or cfg.sweep.n_realizations or cfg.ensemble.n_realizations
        cfg = replace(cfg, sweep=replace(cfg.sweep, n_realizations=n))
        out_dir = _prepare_out(cfg)
        cfg, spec = _resolve_spectrum(cfg)
        _write_resolved(cfg, out_dir)

        tau = make_tau_grid(cfg.tau.min, cfg.tau.max, cfg.tau.step)
        seed_ = cfg.ensemble.master_seed
        traces = analysis.sigma_scan(spec, sigmas, n, seed_, tau, workers=workers)
        reference = trace_scan(spec, 0.0, 1, seed_, tau)

        entangled, classical = analysis.fraction_curve(sigmas)
        curves = [
            entangled,
            classical,
            analysis.background_curve(traces),
            analysis.peak_ratio_curve(traces, spec, reference),
        ]
        cdir = paths.curves_dir(out_dir)
        for c in curves:
            export.write_curve(c, cdir, formats=cfg.output.formats)
            typer.echo(f"[bipho] curve {c.name}: {c.sigma.size} points")
        _write_map(traces, out_dir, cfg)

        try:
            x = analysis.crossing(entangled, 0.5)
            typer.echo(f"[bipho] entangled fraction crosses 0.5 at sigma={x:.4f} rad")
        except BiphoError:
            typer.echo("[bipho] entangled fraction does not cross 0.5 in this sigma range")

    typer.echo(f"[bipho] done: {out_dir}")


def _pick_trace(path: Path) -> Path:
    """A directory means: the σ=0 trace of a simulate run."""
    if not path.is_dir():
        return path
    for item in export.list_traces(path):
        if item["sigma"] == 0.0:
            return Path(item["path"])
    raise BiphoError(f"no sigma=0 trace under {path / 'traces'}")


@app.command()
def fit(
    trace_path: Path = typer.Argument(..., help="Trace CSV (or a simulate output directory)."),
    config: Optional[Path] = _config_opt(),
    out: Optional[str] = _out_opt(),
    model: Optional[str] = typer.Option(None, "--model", help="auto | envelope | intensity"),
):
    """Fit the σ=0 double-Gaussian model and report the spectral width."""
    from bipho.analysis import fit_sigma0, spectral_width

    with _exit_codes():
        cfg = _load(config, out=out)
        chosen = model or cfg.fit.model
        if chosen not in ("auto", "envelope", "intensity"):
            raise ConfigError(f"unknown model {chosen!r}", key="--model")

        src = _pick_trace(trace_path)
        trace, sidecar = export.read_trace(src)
        if chosen == "auto":
            chosen = "intensity" if sidecar is not None and trace.meta.kind in _SIMULATED_KINDS else "envelope"

        res = fit_sigma0(trace, model=chosen, window=cfg.fit.window)
        width, width_nm = spectral_width(res, cfg.spectrum.lambda0)

        out_dir = _prepare_out(cfg)
        payload = {
            "bipho_version": __version__,
            "source": str(src),
            **res.to_dict(),
            "spectral_width_rad_per_fs": width,
            "spectral_width_nm": width_nm,
            "lambda0_nm": cfg.spectrum.lambda0,
        }
        dest = export.write_json(payload, paths.fit_result_file(out_dir))

        e = res.errors
        typer.echo(f"[bipho] model: {res.model}")
        typer.echo(f"B       = {res.B:.6g} ± {e[0]:.2g} Hz")
        typer.echo(f"mu      = {res.mu:.6g} ± {e[1]:.2g} rad/fs")
        typer.echo(f"sigma_p = {res.sigma_p:.6g} ± {e[2]:.2g} rad/fs")
        typer.echo(f"rms     = {res.residual_rms:.4g} Hz")
        typer.echo(f"width   = {width:.5f} rad/fs = {width_nm:.2f} nm at {cfg.spectrum.lambda0:g} nm")
        typer.echo(f"[bipho] -> {dest}")


@app.command()
def calibrate(
    config: Optional[Path] = _config_opt(),
    out: Optional[str] = _out_opt(),
    target: Optional[float] = typer.Option(None, "--target", help="Background level in Hz (default from config)."),
):
    """Solve the bin width for which the fully dephased background hits the target."""
    from bipho.analysis import DEFAULT_TARGET_HZ, calibrate_grid, expected_background

    with _exit_codes():
        cfg = _load(config, out=out)
        hz = target if target is not None else (cfg.grid.calibrate_to_hz or DEFAULT_TARGET_HZ)
        if not hz > 0:
            raise ConfigError(f"must be > 0 Hz, got {hz!r}", key="--target")
        s = cfg.spectrum
        grid = calibrate_grid(s.B, s.mu, s.sigma_p, hz, shape=s.shape, tau_step=cfg.tau.step)
        spec = double_gaussian(s.B, s.mu, s.sigma_p, grid, shape=s.shape)
        bg = expected_background(spec, tau_step=cfg.tau.step)

        out_dir = _prepare_out(cfg)
        dest = export.write_json(
            {
                "target_hz": hz,
                "n_pos": grid.n_pos,
                "omega_max": grid.omega_max,
                "bin_width": grid.bin_width,
                "expected_background_hz": bg,
            },
            paths.calibration_file(out_dir),
        )
        typer.echo(f"n_pos     = {grid.n_pos}")
        typer.echo(f"omega_max = {grid.omega_max!r} rad/fs")
        typer.echo(f"bin width = {grid.bin_width:.6g} rad/fs")
        typer.echo(f"background (sigma -> inf) = {bg:.4f} Hz")
        typer.echo(f"[bipho] -> {dest}")


@app.command("show-config")
def show_config(
    config: Optional[Path] = _config_opt(),
):
    """Print the effective configuration (defaults expanded) as YAML."""
    with _exit_codes():
        cfg = _load(config)
        typer.echo(dump_config(cfg), nl=False)


def run_cli(argv: Optional[List[str]] = None) -> None:
    """Console entry point; usage errors exit with the config-error code."""
    try:
        code = app(args=argv, standalone_mode=False)
    except UsageError as e:
        e.show()
        sys.exit(EXIT_CONFIG)
    except typer.Abort:
        typer.echo("Aborted!", err=True)
        sys.exit(EXIT_RUNTIME)
    sys.exit(code or EXIT_OK)


if __name__ == "__main__":
    run_cli()
