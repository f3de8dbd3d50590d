"""Run configuration: a flat TOML file whose keys mirror ``RunConfig``."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InvalidArgument
from .spectral import lambda_continuous

BACKENDS = ("fd", "galerkin")
DENSITY_FAMILIES = ("gaussian", "laplace_mode", "zero")
PSI_KINDS = ("zero", "bump", "stokes")


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    # domain and grid
    Lx: float = math.pi
    Ly: float = math.pi
    nx: int = 127
    ny: int = 127
    backend: str = "fd"
    n_modes: int = 32
    m_modes: int = 32
    # initial density
    density: str = "gaussian"
    mass: float = 1.0
    x0: float | None = None
    y0: float | None = None
    sigma: float = 0.3
    k1: int = 1
    k2: int = 1
    amplitude: float = 1.0
    # initial stream function
    psi: str = "zero"
    psi_amplitude: float = 0.0
    psi_mode: int = 1
    # physics switches
    g: float = 0.0
    chemotaxis: bool = True
    advection: bool = True
    freeze_density: bool = False
    # time stepping and recording
    t_end: float = 1.0
    dt_target: float = 1e-3
    cfl: float = 0.4
    snapshot_dt: float = 1e-3
    # verdict thresholds
    ceiling: float = 1e8
    blowup_window: int = 10
    blowup_factor: float = 10.0
    eps_quench: float | None = None
    stop_when_quenched: bool = False
    # outputs
    out: str = "out"
    dump_fields: bool = False

    def __post_init__(self):
        for key in ("Lx", "Ly", "t_end", "dt_target", "cfl", "snapshot_dt", "ceiling", "sigma", "blowup_factor"):
            if not getattr(self, key) > 0:
                raise InvalidArgument(f"config field {key!r} must be positive, got {getattr(self, key)}")
        for key in ("nx", "ny"):
            if getattr(self, key) < 3:
                raise InvalidArgument(f"config field {key!r} must be >= 3, got {getattr(self, key)}")
        if self.backend not in BACKENDS:
            raise InvalidArgument(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "galerkin" and (self.n_modes < 1 or self.m_modes < 1):
            raise InvalidArgument("galerkin backend needs n_modes >= 1 and m_modes >= 1")
        if self.density not in DENSITY_FAMILIES:
            raise InvalidArgument(f"density must be one of {DENSITY_FAMILIES}, got {self.density!r}")
        if self.psi not in PSI_KINDS:
            raise InvalidArgument(f"psi must be one of {PSI_KINDS}, got {self.psi!r}")
        if self.mass < 0:
            raise InvalidArgument(f"mass must be >= 0, got {self.mass}")
        if self.g < 0:
            raise InvalidArgument(f"g must be >= 0, got {self.g}")
        if self.blowup_window < 1:
            raise InvalidArgument("blowup_window must be >= 1")
        if self.eps_quench is not None and not self.eps_quench > 0:
            raise InvalidArgument("eps_quench must be positive")

    @property
    def eps(self) -> float:
        """Quench threshold; defaults to ``0.01 min(1, lambda_1 / 4)``."""
        if self.eps_quench is not None:
            return self.eps_quench
        return 0.01 * min(1.0, 0.25 * lambda_continuous(self.Lx, self.Ly))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value, where: str):
    f = _FIELDS[name]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if name in ("Lx", "Ly") and isinstance(value, str) and value.strip().lower() == "pi":
        return math.pi
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
                return value.lower() in ("true", "1", "yes")
            raise ValueError(value)
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "float | None":
            return None if value in (None, "", "none", "None") else float(value)
        return str(value)
    except (TypeError, ValueError):
        raise InvalidArgument(f"{where}: bad value {value!r} for {name!r} (expected {kind})") from None


def config_from_mapping(data: dict, where: str = "config") -> RunConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise InvalidArgument(f"{where}: unknown keys {unknown}")
    return RunConfig(**{k: _coerce(k, v, where) for k, v in data.items()})


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a flat TOML file; ``overrides`` (e.g. CLI flags) win over file values."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidArgument(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgument(f"{path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise InvalidArgument(f"{path}: tables are not supported, keys must be flat (found {nested})")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(data, str(path))


def dump_config(cfg: RunConfig) -> str:
    """Serialize to flat TOML (``None`` values are omitted)."""
    lines = []
    for k, v in cfg.to_dict().items():
        if v is None:
            continue
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        elif isinstance(v, float):
            lines.append(f"{k} = {v!r}")
        else:
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
