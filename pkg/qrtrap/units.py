"""units.py

Conversion between atomic units and the trap's dimensionless variables.

Scaled variables (trap radius L, atom-surface strength beta_4, mass m):
- x     = r / L
- sigma = L / beta_4
- tau   = t * hbar / (2 m L^2)
- gamma = 2 a_int / L          (radial coupling after the s-wave reduction)

Constants
- Taken from scipy.constants (CODATA): electron/atomic-mass ratio, the atomic
  unit of time, the Hartree energy and Boltzmann's constant. hbar = m_e = 1 in
  atomic units, so only these four numbers are needed.

Species data
- datasets/species.json (override with QRTRAP_SPECIES_FILE)
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import constants
from scipy.integrate import IntegrationWarning, quad

from .errors import InvalidParameterError, QuadratureAccuracyError, SpeciesLookupError


HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_SPECIES_PATH = os.path.join(HERE, "..", "datasets", "species.json")

LOGGER = logging.getLogger("qrtrap.units")

# Atomic-unit constants (CODATA via scipy.constants)
ELECTRON_MASSES_PER_AMU: float = constants.m_u / constants.m_e          # 1822.888...
ATOMIC_TIME_S: float = constants.physical_constants["atomic unit of time"][0]  # 2.4188843e-17 s
HARTREE_J: float = constants.physical_constants["Hartree energy"][0]
BOLTZMANN_J_PER_K: float = constants.k

CONSTANTS_TABLE: Dict[str, Dict[str, Any]] = {
    "electron_masses_per_amu": {"value": ELECTRON_MASSES_PER_AMU, "source": "scipy.constants m_u/m_e (CODATA)"},
    "atomic_time_s": {"value": ATOMIC_TIME_S, "source": "scipy.constants 'atomic unit of time' (CODATA)"},
    "hartree_j": {"value": HARTREE_J, "source": "scipy.constants 'Hartree energy' (CODATA)"},
    "boltzmann_j_per_k": {"value": BOLTZMANN_J_PER_K, "source": "scipy.constants k (CODATA)"},
}


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise InvalidParameterError(f"{name} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class SpeciesParams:
    name: str
    mass: float  # electron masses
    beta4: float  # Bohr radii
    a_int: float  # Bohr radii
    a_int_uncertainty: Optional[Tuple[float, float]] = None  # (minus, plus)
    isotope: str = ""
    channel: str = ""

    def __post_init__(self) -> None:
        _require_positive("mass", self.mass)
        _require_positive("beta4", self.beta4)


@dataclass(frozen=True)
class ScaledParams:
    sigma: float
    gamma: float
    trap_radius_L: float

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise InvalidParameterError(f"sigma must be >= 0, got {self.sigma!r}")
        _require_positive("trap_radius_L", self.trap_radius_L)


def scaled_sigma(L: float, beta4: float) -> float:
    """sigma = L / beta_4."""
    return _require_positive("L", L) / _require_positive("beta4", beta4)


def radial_gamma(a_int: float, L: float) -> float:
    """gamma = 2 a_int / L; the sign follows the scattering length."""
    return 2.0 * float(a_int) / _require_positive("L", L)


def radial_gamma_uncertainty(a_int_uncertainty: Optional[Tuple[float, float]], L: float) -> Optional[Tuple[float, float]]:
    """Linear propagation of (minus, plus) scattering-length errors."""
    if a_int_uncertainty is None:
        return None
    L = _require_positive("L", L)
    minus, plus = a_int_uncertainty
    return (2.0 * float(minus) / L, 2.0 * float(plus) / L)


def seconds_per_tau(mass: float, L: float) -> float:
    # t = 2 m L^2 tau in atomic time units
    mass = _require_positive("mass", mass)
    L = _require_positive("L", L)
    return 2.0 * mass * L * L * ATOMIC_TIME_S


def scaled_time_to_seconds(tau: float, mass: float, L: float) -> float:
    return seconds_per_tau(mass, L) * float(tau)


@lru_cache(maxsize=256)
def scaled_packet_kinetic_energy(a: float) -> float:
    """Kinetic expectation of x*exp(-a x) truncated to [0, 1], by quadrature.

    Equals a^2 for the untruncated packet; the truncation correction is below
    0.1% once a >= 5.
    """
    a = _require_positive("a", a)

    def density(x: float) -> float:
        return (x * np.exp(-a * x)) ** 2

    def slope_sq(x: float) -> float:
        return (np.exp(-a * x) * (1.0 - a * x)) ** 2

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            norm, _ = quad(density, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
            kin, _ = quad(slope_sq, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
        except IntegrationWarning as e:
            raise QuadratureAccuracyError(f"packet kinetic energy quadrature failed for a={a}: {e}") from e
    return kin / norm


def initial_kinetic_energy_physical(a: float, mass: float, L: float) -> float:
    """Initial kinetic energy of the packet in Hartree: E_scaled * hbar^2 / (2 m L^2)."""
    mass = _require_positive("mass", mass)
    L = _require_positive("L", L)
    return scaled_packet_kinetic_energy(float(a)) / (2.0 * mass * L * L)


def energy_to_nanokelvin(energy_au: float) -> float:
    return float(energy_au) * HARTREE_J / BOLTZMANN_J_PER_K * 1e9


# ===== SPECIES DATA =====


def _parse_uncertainty(raw: Any) -> Optional[Tuple[float, float]]:
    if raw is None:
        return None
    if isinstance(raw, (int, float)):
        return (float(raw), float(raw))
    if isinstance(raw, dict) and set(raw) == {"minus", "plus"}:
        return (float(raw["minus"]), float(raw["plus"]))
    raise ValueError(f"a_int_err_au must be a number or {{minus, plus}}, got {raw!r}")


def _species_path(path: Optional[str]) -> str:
    if path:
        return os.path.abspath(path)
    env = os.environ.get("QRTRAP_SPECIES_FILE")
    if env and env.strip():
        return os.path.abspath(env.strip())
    return os.path.abspath(DEFAULT_SPECIES_PATH)


@lru_cache(maxsize=8)
def _load_species_file(path: str) -> Tuple[SpeciesParams, ...]:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)

    if raw.get("schema") != "qrtrap.species":
        raise ValueError(f"{path}: not a species data file (schema={raw.get('schema')!r})")
    if int(raw.get("version", 0)) != 1:
        raise ValueError(f"{path}: unsupported species data version {raw.get('version')!r}")

    allowed = {"name", "isotope", "mass_amu", "beta4_au", "a_int_au", "a_int_err_au", "channel"}
    out: List[SpeciesParams] = []
    for row in raw.get("species") or []:
        unknown = set(row) - allowed
        if unknown:
            raise ValueError(f"{path}: unknown species fields {sorted(unknown)}")
        channel = str(row.get("channel") or "")
        if channel and channel not in {"singlet", "triplet"}:
            raise ValueError(f"{path}: channel must be singlet or triplet, got {channel!r}")
        out.append(
            SpeciesParams(
                name=str(row["name"]),
                mass=float(row["mass_amu"]) * ELECTRON_MASSES_PER_AMU,
                beta4=float(row["beta4_au"]),
                a_int=float(row["a_int_au"]),
                a_int_uncertainty=_parse_uncertainty(row.get("a_int_err_au")),
                isotope=str(row.get("isotope") or ""),
                channel=channel,
            )
        )
    LOGGER.info("Loaded %d species from %s", len(out), path)
    return tuple(out)


def load_species(path: Optional[str] = None) -> List[SpeciesParams]:
    return list(_load_species_file(_species_path(path)))


def get_species(name: str, path: Optional[str] = None) -> SpeciesParams:
    entries = load_species(path)
    key = (name or "").strip().lower()
    for sp in entries:
        if key in {sp.name.lower(), sp.isotope.lower()}:
            return sp
    raise SpeciesLookupError(name, [sp.name for sp in entries])


def scaled_params(species: SpeciesParams, L: float) -> ScaledParams:
    return ScaledParams(
        sigma=scaled_sigma(L, species.beta4),
        gamma=radial_gamma(species.a_int, L),
        trap_radius_L=float(L),
    )


def species_table(L: float, path: Optional[str] = None) -> List[Dict[str, Any]]:
    """One row per species: sigma, gamma and its propagated uncertainty at radius L."""
    rows = []
    for sp in load_species(path):
        scaled = scaled_params(sp, L)
        err = radial_gamma_uncertainty(sp.a_int_uncertainty, L)
        rows.append(
            {
                "name": sp.name,
                "isotope": sp.isotope,
                "channel": sp.channel,
                "L": float(L),
                "sigma": scaled.sigma,
                "gamma": scaled.gamma,
                "gamma_err_minus": err[0] if err else None,
                "gamma_err_plus": err[1] if err else None,
                "seconds_per_tau": seconds_per_tau(sp.mass, L),
            }
        )
    return rows
