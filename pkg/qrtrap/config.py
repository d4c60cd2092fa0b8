"""config.py

Run configuration: one flat, strict key set covering the propagator, the
initial packet, sweeps, collapse detection and the bisection horizon.

Precedence (lowest first)
- built-in defaults
- profile (paper | fast)
- JSON config file (unknown keys and wrong types are rejected)
- environment (QRTRAP_WORKERS, QRTRAP_PROFILE)
- explicit CLI flags

Env vars (optional, also read from .env):
- QRTRAP_PROFILE=paper|fast        (default: paper)
- QRTRAP_WORKERS=<n>               (default: 1)
- QRTRAP_LOG_LEVEL=WARNING         (read by the CLI)
- QRTRAP_PROGRESS=0|1              (read by the propagator)
- QRTRAP_SPECIES_FILE=<path>       (read by units)
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional

from .errors import ConfigError
from .model import AbsorberSpec, GridSpec, StepTrap
from .observables import CollapseThresholds
from .propagator import PropagatorConfig


LOGGER = logging.getLogger("qrtrap.config")

PROFILES: Dict[str, Dict[str, Any]] = {
    "paper": {},
    "fast": {"n_points": 3999, "dt": 1e-5, "sample_every": 100},
}

# keys that change the numbers of a single run; sweep lists and plumbing excluded
NUMERICAL_KEYS = (
    "x_max", "n_points", "dt", "fixed_point_tol", "max_fixed_point_iters",
    "absorber_start", "absorber_strength", "absorber_exponent",
    "tau_end", "sample_every",
    "density_factor", "kinetic_factor", "cliff_fraction", "cliff_window",
    "cliff_focus_factor",
)


@dataclass(frozen=True)
class RunConfig:
    x_max: float = 8.0
    n_points: int = 7999
    dt: float = 2.5e-6
    fixed_point_tol: float = 1e-10
    max_fixed_point_iters: int = 25
    absorber_start: float = 2.0
    absorber_strength: float = 200.0
    absorber_exponent: int = 3
    a: float = 5.0
    sigma: float = 20.0
    gamma: float = 0.0
    tau_end: float = 1.0
    sample_every: int = 400
    sigmas: List[float] = field(default_factory=lambda: [20.0, 30.0, 40.0, 50.0])
    gammas: List[float] = field(default_factory=lambda: [0.0])
    density_factor: float = 50.0
    kinetic_factor: float = 20.0
    cliff_fraction: float = 0.25
    cliff_window: float = 0.01
    cliff_focus_factor: float = 2.0
    critical_horizon: float = 0.3
    workers: int = 1
    output_dir: str = "results"

    def to_mapping(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Optional["RunConfig"] = None) -> "RunConfig":
        """Build from a mapping on top of base (defaults when omitted)."""
        if not isinstance(data, Mapping):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        unknown = sorted(set(data) - set(_FIELD_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = (base or cls()).to_mapping()
        for key, value in data.items():
            merged[key] = _coerce(key, value)
        return cls(**merged)

    def grid(self) -> GridSpec:
        return GridSpec(x_max=self.x_max, n_points=self.n_points)

    def absorber(self) -> AbsorberSpec:
        return AbsorberSpec(
            start=self.absorber_start,
            strength=self.absorber_strength,
            exponent=self.absorber_exponent,
        )

    def propagator_config(self, sigma: Optional[float] = None, gamma: Optional[float] = None) -> PropagatorConfig:
        return PropagatorConfig(
            trap=StepTrap(self.sigma if sigma is None else float(sigma)),
            gamma=self.gamma if gamma is None else float(gamma),
            dt=self.dt,
            fixed_point_tol=self.fixed_point_tol,
            max_fixed_point_iters=self.max_fixed_point_iters,
            absorber=self.absorber(),
            grid=self.grid(),
        )

    def thresholds(self) -> CollapseThresholds:
        return CollapseThresholds(
            density_factor=self.density_factor,
            kinetic_factor=self.kinetic_factor,
            cliff_fraction=self.cliff_fraction,
            cliff_window=self.cliff_window,
            cliff_focus_factor=self.cliff_focus_factor,
        )


# annotations are strings here; anything not scalar is a list of numbers
_FIELD_TYPES: Dict[str, str] = {
    f.name: str(f.type) if str(f.type) in {"float", "int", "str"} else "list" for f in fields(RunConfig)
}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigError(f"{key} must be a list of numbers, got {value!r}")
    return [float(v) for v in value]


def get_default_config(profile: str = "paper") -> Dict[str, Any]:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (choose from {', '.join(PROFILES)})")
    return RunConfig.from_mapping(PROFILES[profile]).to_mapping()


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _env_int(name: str) -> Optional[int]:
    v = os.environ.get(name)
    if v is None or not v.strip():
        return None
    try:
        return int(v.strip())
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {v!r}") from e


def load_config(
    path: Optional[str] = None,
    profile: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Resolve a RunConfig through every layer; overrides are the CLI flags."""
    profile = profile or (os.environ.get("QRTRAP_PROFILE") or "").strip() or "paper"
    config = RunConfig.from_mapping(get_default_config(profile))

    if path:
        config = RunConfig.from_mapping(read_config_file(path), base=config)
        LOGGER.info("Loaded config file %s", path)

    workers = _env_int("QRTRAP_WORKERS")
    if workers is not None:
        config = RunConfig.from_mapping({"workers": workers}, base=config)

    if overrides:
        config = RunConfig.from_mapping({k: v for k, v in overrides.items() if v is not None}, base=config)

    if config.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {config.workers}")
    return config


def config_hash(config: RunConfig) -> str:
    """Short digest of the keys that determine a single run's numbers."""
    payload = {k: getattr(config, k) for k in NUMERICAL_KEYS}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
