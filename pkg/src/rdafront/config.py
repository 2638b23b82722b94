"""TOML run configuration with strict key checking."""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    name: str = "klausmeier"
    mu: list = field(default_factory=lambda: [0.1, 0.1, 2.0])


@dataclass
class ParamsSection:
    delta: float = 1e-3
    nu: float = 0.0
    #: either a list of values or a table {start, stop, num, spacing}
    nu_range: object = None
    r0: float = 0.05

    def nu_values(self) -> np.ndarray:
        r = self.nu_range
        if r is None:
            return np.array([self.nu])
        if isinstance(r, list):
            vals = np.asarray(r, float)
        else:
            start, stop, num = float(r["start"]), float(r["stop"]), int(r["num"])
            if r.get("spacing", "linear") == "log":
                vals = np.geomspace(start, stop, num)
            else:
                vals = np.linspace(start, stop, num)
        if vals.size == 0:
            raise ConfigError("params.nu_range is empty")
        return vals


@dataclass
class FrontSection:
    K: float = 30.0
    A: float = 20.0
    h0: float = 0.1
    tol: float = 1e-9
    maxiter: int = 50
    step: float = 0.0


@dataclass
class SpectralSection:
    ell0: float = 0.0
    oracle: bool = True
    simple_tol: float = 1e-6


@dataclass
class ContourSection:
    deltas: list = field(default_factory=lambda: [1e-3, 2e-3, 5e-3, 1e-2])


@dataclass
class DispersionSection:
    k_max: float = 0.0
    ell_max: float = 0.0
    n_grid: int = 121
    state: str = "S+"


@dataclass
class SimSection:
    Ly: float = 400.0
    Ny: int = 64
    dt: float = 1.0
    t_end: float = 1000.0
    order: int = 1
    bc: str = "dirichlet"
    modes: list = field(default_factory=list)
    noise: float = 0.0
    noise_modes: int = 8
    seed: int = 0
    snapshot_every: float = 0.0
    diag_every: int = 1


@dataclass
class OutputSection:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])


_SECTIONS = {
    "model": ModelSection,
    "params": ParamsSection,
    "front": FrontSection,
    "spectral": SpectralSection,
    "contour": ContourSection,
    "dispersion": DispersionSection,
    "sim": SimSection,
    "output": OutputSection,
}

_POSITIVE = {
    "params": ("delta", "r0"),
    "front": ("K", "A", "h0", "tol", "maxiter"),
    "spectral": ("simple_tol",),
    "dispersion": ("n_grid",),
    "sim": ("Ly", "Ny", "dt", "diag_every"),
}


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    front: FrontSection = field(default_factory=FrontSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    contour: ContourSection = field(default_factory=ContourSection)
    dispersion: DispersionSection = field(default_factory=DispersionSection)
    sim: SimSection = field(default_factory=SimSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    def build_model(self):
        from .kinetics import get_model

        try:
            return get_model(self.model.name, tuple(float(x) for x in self.model.mu))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc


def _coerce(section: str, key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{section}.{key}: expected a list, got {value!r}")
    return value


def parse_config(data: dict, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    for name, table in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        sec = getattr(cfg, name)
        known = {f.name for f in fields(sec)}
        for key, value in table.items():
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(sec, key, _coerce(name, key, value, getattr(sec, key)))
    for name, keys in _POSITIVE.items():
        sec = getattr(cfg, name)
        for key in keys:
            if not getattr(sec, key) > 0:
                raise ConfigError(f"{name}.{key} must be positive")
    if cfg.params.nu < 0:
        raise ConfigError("params.nu must be non-negative")
    if cfg.params.nu_range is not None:
        r = cfg.params.nu_range
        if isinstance(r, dict):
            extra = set(r) - {"start", "stop", "num", "spacing"}
            if extra:
                raise ConfigError(f"unknown key params.nu_range.{sorted(extra)[0]}")
            if not {"start", "stop", "num"} <= set(r):
                raise ConfigError("params.nu_range needs start, stop and num")
        elif not isinstance(r, list):
            raise ConfigError("params.nu_range must be a list or a table")
        vals = cfg.params.nu_values()
        if np.any(vals < 0):
            raise ConfigError("params.nu_range must be non-negative")
    if not cfg.contour.deltas or any(not d > 0 for d in cfg.contour.deltas):
        raise ConfigError("contour.deltas must be a nonempty list of positive values")
    if len(cfg.model.mu) == 0:
        raise ConfigError("model.mu is empty")
    for m in cfg.sim.modes:
        if not (isinstance(m, list) and len(m) == 2):
            raise ConfigError("sim.modes entries must be [mode, amplitude] pairs")
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(data, str(p))
