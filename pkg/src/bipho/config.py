from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from bipho.errors import ConfigError

_SHAPES = ("amplitude", "density")
_FIT_MODELS = ("auto", "envelope", "intensity")
_FORMATS = ("csv", "json")


def _num(key: str, value: Any, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=key)
    v = float(value)
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError("must be finite", key=key)
    if positive and not v > 0:
        raise ConfigError(f"must be > 0, got {value!r}", key=key)
    if nonneg and not v >= 0:
        raise ConfigError(f"must be >= 0, got {value!r}", key=key)
    return v


def _int(key: str, value: Any, *, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", key=key)
    return int(value)


def _sigmas(key: str, value: Any) -> Tuple[float, ...]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("expected a non-empty list of sigma values (rad)", key=key)
    return tuple(_num(f"{key}[{i}]", v, nonneg=True) for i, v in enumerate(value))


# ---------------------------
# Sections
# ---------------------------

@dataclass(frozen=True)
class SpectrumConfig:
    # double-Gaussian fit of the measured σ=0 trace
    B: float = 708.71  # Hz
    mu: float = 0.0275  # rad/fs
    sigma_p: float = 0.022  # rad/fs
    lambda0: float = 1064.0  # nm
    shape: str = "amplitude"

    def __post_init__(self) -> None:
        object.__setattr__(self, "B", _num("spectrum.B", self.B, positive=True))
        object.__setattr__(self, "mu", _num("spectrum.mu", self.mu, nonneg=True))
        object.__setattr__(self, "sigma_p", _num("spectrum.sigma_p", self.sigma_p, positive=True))
        object.__setattr__(self, "lambda0", _num("spectrum.lambda0", self.lambda0, positive=True))
        if self.shape not in _SHAPES:
            raise ConfigError(f"must be one of {_SHAPES}, got {self.shape!r}", key="spectrum.shape")


@dataclass(frozen=True)
class GridConfig:
    n_pos: int = 512
    omega_max: float = 0.12  # rad/fs
    # when set, n_pos/omega_max are replaced by calibrate_grid() at run time
    calibrate_to_hz: Optional[float] = 26.93

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_pos", _int("grid.n_pos", self.n_pos, minimum=2))
        object.__setattr__(self, "omega_max", _num("grid.omega_max", self.omega_max, positive=True))
        if self.calibrate_to_hz is not None:
            object.__setattr__(
                self, "calibrate_to_hz", _num("grid.calibrate_to_hz", self.calibrate_to_hz, positive=True)
            )


@dataclass(frozen=True)
class ShaperConfig:
    # static quadratic phase e^{i·gdd·Ω²/2} per photon, fs²; 0 leaves the spectrum untouched
    gdd: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "gdd", _num("shaper.gdd", self.gdd))


@dataclass(frozen=True)
class EnsembleSection:
    n_realizations: int = 10000
    sigma_list: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 10.0)
    master_seed: int = 0
    block_size: int = 256

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "n_realizations", _int("ensemble.n_realizations", self.n_realizations, minimum=1)
        )
        object.__setattr__(self, "sigma_list", _sigmas("ensemble.sigma_list", self.sigma_list))
        seed = _int("ensemble.master_seed", self.master_seed, minimum=0)
        if seed >= 2**64:
            raise ConfigError("must fit in 64 bits", key="ensemble.master_seed")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "block_size", _int("ensemble.block_size", self.block_size, minimum=1))


@dataclass(frozen=True)
class TauConfig:
    min: float = -250.0  # fs
    max: float = 250.0
    step: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "min", _num("tau.min", self.min))
        object.__setattr__(self, "max", _num("tau.max", self.max))
        object.__setattr__(self, "step", _num("tau.step", self.step, positive=True))
        if self.max < self.min:
            raise ConfigError(f"tau.max ({self.max:g}) < tau.min ({self.min:g})", key="tau.max")


@dataclass(frozen=True)
class NoiseConfig:
    poisson: bool = False
    n_acquisitions: int = 100
    acquisition_time: float = 1.0  # s
    dark_rate: float = 0.0  # Hz

    def __post_init__(self) -> None:
        if not isinstance(self.poisson, bool):
            raise ConfigError(f"expected true/false, got {self.poisson!r}", key="noise.poisson")
        object.__setattr__(self, "n_acquisitions", _int("noise.n_acquisitions", self.n_acquisitions, minimum=1))
        object.__setattr__(
            self, "acquisition_time", _num("noise.acquisition_time", self.acquisition_time, positive=True)
        )
        object.__setattr__(self, "dark_rate", _num("noise.dark_rate", self.dark_rate, nonneg=True))


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "bipho-out"
    formats: Tuple[str, ...] = _FORMATS

    def __post_init__(self) -> None:
        if not isinstance(self.directory, str) or not self.directory:
            raise ConfigError("expected a non-empty path", key="output.directory")
        fmts = self.formats
        if isinstance(fmts, str):
            fmts = (fmts,)
        if not isinstance(fmts, (list, tuple)) or not fmts:
            raise ConfigError("expected a non-empty list", key="output.formats")
        for f in fmts:
            if f not in _FORMATS:
                raise ConfigError(f"unknown format {f!r} (allowed: {_FORMATS})", key="output.formats")
        object.__setattr__(self, "formats", tuple(fmts))


@dataclass(frozen=True)
class SweepConfig:
    sigma_min: float = 0.0
    sigma_max: float = 3.0
    sigma_step: float = 0.1
    # None: reuse ensemble.n_realizations
    n_realizations: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma_min", _num("sweep.sigma_min", self.sigma_min, nonneg=True))
        object.__setattr__(self, "sigma_max", _num("sweep.sigma_max", self.sigma_max, nonneg=True))
        object.__setattr__(self, "sigma_step", _num("sweep.sigma_step", self.sigma_step, positive=True))
        if self.sigma_max < self.sigma_min:
            raise ConfigError("sweep.sigma_max < sweep.sigma_min", key="sweep.sigma_max")
        if self.n_realizations is not None:
            object.__setattr__(
                self, "n_realizations", _int("sweep.n_realizations", self.n_realizations, minimum=1)
            )


@dataclass(frozen=True)
class VerifyConfig:
    n_pos: int = 16
    omega_max: float = 0.12
    n_realizations: int = 5000
    n_correlator: int = 100000
    sigmas: Tuple[float, ...] = (0.5, 0.833, 2.0)
    # multiplies every Monte-Carlo tolerance; 0 makes those checks fail on purpose
    tolerance_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_pos", _int("verify.n_pos", self.n_pos, minimum=2))
        object.__setattr__(self, "omega_max", _num("verify.omega_max", self.omega_max, positive=True))
        object.__setattr__(self, "n_realizations", _int("verify.n_realizations", self.n_realizations, minimum=1))
        object.__setattr__(self, "n_correlator", _int("verify.n_correlator", self.n_correlator, minimum=1))
        object.__setattr__(self, "sigmas", _sigmas("verify.sigmas", self.sigmas))
        object.__setattr__(
            self, "tolerance_scale", _num("verify.tolerance_scale", self.tolerance_scale, nonneg=True)
        )


@dataclass(frozen=True)
class FitConfig:
    window: float = 150.0  # fs, fit uses |τ| <= window
    model: str = "auto"

    def __post_init__(self) -> None:
        object.__setattr__(self, "window", _num("fit.window", self.window, positive=True))
        if self.model not in _FIT_MODELS:
            raise ConfigError(f"must be one of {_FIT_MODELS}, got {self.model!r}", key="fit.model")


@dataclass(frozen=True)
class RunConfig:
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    shaper: ShaperConfig = field(default_factory=ShaperConfig)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    tau: TauConfig = field(default_factory=TauConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    fit: FitConfig = field(default_factory=FitConfig)


DEFAULT_CONFIG = RunConfig()

_SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}  # type: ignore[misc]


def to_dict(cfg: RunConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in fields(cfg):
        section = getattr(cfg, f.name)
        values: Dict[str, Any] = {}
        for sf in fields(section):
            v = getattr(section, sf.name)
            values[sf.name] = list(v) if isinstance(v, tuple) else v
        out[f.name] = values
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


# ---------------------------
# Loading
# ---------------------------

def _key_lines(text: str) -> Dict[str, int]:
    """Dotted key path -> 1-based line of the key in the source document."""
    out: Dict[str, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out

    def _walk(node: Any, prefix: str) -> None:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[key] = k.start_mark.line + 1
                _walk(v, key)

    _walk(root, "")
    return out


def _parse(text: str, suffix: str) -> Any:
    if suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", line=line) from e


def from_dict(raw: Any, lines: Optional[Dict[str, int]] = None) -> RunConfig:
    """Build a RunConfig from a (partial) nested mapping. Unknown keys are errors."""
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", line=1)

    sections: Dict[str, Any] = {}
    try:
        for name, value in raw.items():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section (allowed: {', '.join(_SECTIONS)})", key=str(name))
            if value is None:
                value = {}
            if not isinstance(value, dict):
                raise ConfigError("section must be a mapping", key=name)
            value = dict(value)
            if name == "ensemble" and "sigma" in value:
                if "sigma_list" in value:
                    raise ConfigError("give either sigma or sigma_list, not both", key="ensemble.sigma")
                value["sigma_list"] = value.pop("sigma")
            default = _SECTIONS[name]()
            allowed = {f.name for f in fields(default)}
            for key in value:
                if key not in allowed:
                    raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", key=f"{name}.{key}")
            sections[name] = replace(default, **value)
    except ConfigError as e:
        if e.line is None and e.key:
            base = e.key.split("[", 1)[0]
            line = lines.get(e.key) or lines.get(base)
            if line is None and base == "ensemble.sigma_list":
                line = lines.get("ensemble.sigma")
            if line is not None:
                raise ConfigError(e.message, key=e.key, line=line) from e
        raise
    return RunConfig(**sections)


def load_config(path: Optional[Path] = None) -> RunConfig:
    """Read a YAML/JSON config and fill every missing value from DEFAULT_CONFIG."""
    if path is None:
        return DEFAULT_CONFIG
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror or e}") from e
    raw = _parse(text, p.suffix.lower())
    return from_dict(raw, _key_lines(text))


def apply_overrides(
    cfg: RunConfig,
    *,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    sigmas: Optional[Tuple[float, ...]] = None,
    tau_step: Optional[float] = None,
    n_realizations: Optional[int] = None,
) -> RunConfig:
    """CLI flags (and their BIPHO_* env vars) win over file values."""
    ens = cfg.ensemble
    if seed is not None:
        ens = replace(ens, master_seed=seed)
    if sigmas is not None:
        ens = replace(ens, sigma_list=sigmas)
    if n_realizations is not None:
        ens = replace(ens, n_realizations=n_realizations)
    cfg = replace(cfg, ensemble=ens)
    if tau_step is not None:
        cfg = replace(cfg, tau=replace(cfg.tau, step=tau_step))
    if out is not None:
        cfg = replace(cfg, output=replace(cfg.output, directory=out))
    return cfg
