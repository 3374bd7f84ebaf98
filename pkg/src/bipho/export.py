from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from bipho import __version__ as BIPHO_VERSION
from bipho.analysis import CorrelationMap, Curve
from bipho.correlation import CorrelationTrace, TraceMeta
from bipho.density import DensityMatrix
from bipho.errors import InvalidParameterError
from bipho.montecarlo import RunStats
from bipho.shaper import TransferFunction

TRACE_HEADER = ("tau_fs", "value_hz", "stderr_hz")
CURVE_HEADER = ("sigma_rad", "value", "stderr")
MATRIX_HEADER = ("row", "col", "re", "im")
MASK_HEADER = ("omega_rad_per_fs", "re", "im")
MAP_HEADER = ("sigma_rad", "tau_fs", "value_hz", "stderr_hz")


# ---------------- Utilities ----------------

def _fmt(x: Any) -> str:
    # repr round-trips a float exactly
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> Dict[str, Any]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise InvalidParameterError(f"{path}: expected a JSON object")
    return data


# ---------------- Traces ----------------

def write_trace(
    trace: CorrelationTrace,
    directory: Path,
    stem: str,
    stats: Optional[RunStats] = None,
    extra: Optional[Dict[str, Any]] = None,
    formats: Sequence[str] = ("csv", "json"),
) -> List[Path]:
    """
    Write <stem>.csv (tau_fs, value_hz, stderr_hz) and the <stem>.json sidecar.
    Nothing time-dependent goes into either file, so reruns are byte-identical.
    """
    directory = Path(directory)
    written: List[Path] = []
    if "csv" in formats:
        rows = zip(trace.tau, trace.value, trace.stderr)
        written.append(_write_csv(directory / f"{stem}.csv", TRACE_HEADER, rows))
    if "json" in formats:
        payload: Dict[str, Any] = {
            "bipho_version": BIPHO_VERSION,
            "meta": trace.meta.to_dict(),
            "n_samples": int(trace.tau.size),
            "tau_range_fs": [float(trace.tau[0]), float(trace.tau[-1])],
        }
        if stats is not None:
            payload["stats"] = stats.to_dict(include_timing=False)
        if extra:
            payload.update(extra)
        written.append(write_json(payload, directory / f"{stem}.json"))
    return written


def _parse_rows(path: Path, header: Sequence[str]) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise InvalidParameterError(f"{path}: not a text CSV") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidParameterError(f"{path}: empty file")
    got = tuple(c.strip() for c in lines[0].split(","))
    if got != tuple(header):
        raise InvalidParameterError(f"{path}: line 1: header {','.join(got)!r} != {','.join(header)!r}")
    rows: List[List[float]] = []
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise InvalidParameterError(f"{path}: line {i}: expected {len(header)} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as e:
            raise InvalidParameterError(f"{path}: line {i}: {e}") from e
    if not rows:
        raise InvalidParameterError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def read_trace(path: Path) -> Tuple[CorrelationTrace, Optional[Dict[str, Any]]]:
    """
    Load a trace CSV. The sidecar (same stem, .json), when present, restores
    the metadata and is returned as well; without it the trace is tagged as a
    measurement.
    """
    path = Path(path)
    data = _parse_rows(path, TRACE_HEADER)
    sidecar_path = path.with_suffix(".json")
    sidecar: Optional[Dict[str, Any]] = None
    meta = TraceMeta(kind="measured-sim")
    if sidecar_path.exists():
        sidecar = read_json(sidecar_path)
        m = sidecar.get("meta") or {}
        try:
            meta = TraceMeta(**m)
        except TypeError as e:
            raise InvalidParameterError(f"{sidecar_path}: bad meta block: {e}") from e
    trace = CorrelationTrace(tau=data[:, 0], value=data[:, 1], stderr=data[:, 2], meta=meta)
    return trace, sidecar


# ---------------- Curves / matrices / masks ----------------

def write_curve(curve: Curve, directory: Path, formats: Sequence[str] = ("csv", "json")) -> List[Path]:
    directory = Path(directory)
    written: List[Path] = []
    if "csv" in formats:
        rows = zip(curve.sigma, curve.value, curve.stderr)
        written.append(_write_csv(directory / f"{curve.name}.csv", CURVE_HEADER, rows))
    if "json" in formats:
        written.append(write_json(curve.to_dict(), directory / f"{curve.name}.json"))
    return written


def write_map(cmap: CorrelationMap, directory: Path, formats: Sequence[str] = ("csv", "json")) -> List[Path]:
    """Long-form CSV, one row per (σ, τ) cell, σ-major."""
    directory = Path(directory)
    written: List[Path] = []
    if "csv" in formats:
        rows = (
            (s, t, cmap.value[i, j], cmap.stderr[i, j])
            for i, s in enumerate(cmap.sigma)
            for j, t in enumerate(cmap.tau)
        )
        written.append(_write_csv(directory / f"{cmap.name}.csv", MAP_HEADER, rows))
    if "json" in formats:
        written.append(write_json(cmap.to_dict(), directory / f"{cmap.name}.json"))
    return written


def write_matrix_csv(rho: DensityMatrix, path: Path) -> Path:
    n = rho.grid.n_pos
    rows = ((i, j, rho.mat[i, j].real, rho.mat[i, j].imag) for i in range(n) for j in range(n))
    return _write_csv(Path(path), MATRIX_HEADER, rows)


def write_mask_csv(mask: TransferFunction, path: Path) -> Path:
    rows = zip(mask.grid.values, mask.mask.real, mask.mask.imag)
    return _write_csv(Path(path), MASK_HEADER, rows)


def list_traces(out: Path) -> List[Dict[str, Any]]:
    """Trace files under <out>/traces with the σ recorded in their sidecar, sorted by σ."""
    items: List[Dict[str, Any]] = []
    for p in sorted((Path(out) / "traces").glob("trace_sigma_*.csv")):
        sigma: Optional[float] = None
        side = p.with_suffix(".json")
        if side.exists():
            try:
                sigma = float(read_json(side).get("meta", {}).get("sigma"))
            except (ValueError, TypeError, json.JSONDecodeError, InvalidParameterError):
                sigma = None
        items.append({"file": p.name, "path": str(p), "sigma": sigma})
    items.sort(key=lambda x: (x["sigma"] is None, x["sigma"] or 0.0))
    return items
