from __future__ import annotations

from pathlib import Path


def traces_dir(out: Path) -> Path:
    """Simulated CorrelationTrace files (CSV + JSON sidecar)."""
    return Path(out) / "traces"


def curves_dir(out: Path) -> Path:
    """σ-sweep curves (fraction, background, peak ratio)."""
    return Path(out) / "curves"


def verify_dir(out: Path) -> Path:
    return Path(out) / "verify"


def fit_dir(out: Path) -> Path:
    return Path(out) / "fit"


def resolved_config_file(out: Path) -> Path:
    return Path(out) / "resolved_config.json"


def trace_stem(sigma: float) -> str:
    # repr keeps 0.5 and 0.50000001 apart; ":g" would not
    return f"trace_sigma_{float(sigma)!r}"


def ensure_dirs(out: Path) -> None:
    """Create the output tree. Raises OSError when `out` is not writable."""
    for d in (Path(out), traces_dir(out), curves_dir(out), verify_dir(out), fit_dir(out)):
        d.mkdir(parents=True, exist_ok=True)


def expected_stem(sigma: float) -> str:
    """N→∞ model trace written next to the ensemble trace of the same σ."""
    return f"expected_sigma_{float(sigma)!r}"


def calibration_file(out: Path) -> Path:
    return Path(out) / "calibration.json"


def fit_result_file(out: Path) -> Path:
    return fit_dir(out) / "fit_result.json"
