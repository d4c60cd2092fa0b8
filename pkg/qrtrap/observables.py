"""observables.py

Diagnostics of a radial state: surviving density inside the trap, the energy
decomposition of E(tau) = i * int_0^1 psi* d_tau psi, the conserved GP energy
functional, time series of both, and collapse detection over a series.

Integrals over [0, 1] use trapezoid weights on the zero-padded grid; the last
segment is cut at x = 1 with linear interpolation when 1 is not a grid point.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO, TYPE_CHECKING, List, Optional, Tuple, Union

import numpy as np

from .errors import InvalidParameterError
from .model import GridSpec, WaveState, step_values

if TYPE_CHECKING:
    from .propagator import PropagatorConfig


LOGGER = logging.getLogger("qrtrap.observables")

SERIES_COLUMNS = ("tau", "rho_s", "e_kin", "e_pot", "e_int", "e_tot", "norm_total", "peak_density")
TRIGGERS = ("density-spike", "kinetic-spike", "fixed-point-failure", "density-cliff")

TRAP_EDGE = 1.0


@lru_cache(maxsize=32)
def _interval_weights(grid: GridSpec, upper: float = TRAP_EDGE) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoid node weights on the padded grid and per-segment fractions for [0, upper]."""
    xp = grid.padded_x
    dx = grid.dx
    frac = np.clip((upper - xp[:-1]) / dx, 0.0, 1.0)
    frac[np.isclose(frac, 1.0, rtol=0.0, atol=1e-9)] = 1.0
    frac[np.isclose(frac, 0.0, rtol=0.0, atol=1e-9)] = 0.0

    weights = np.zeros_like(xp)
    weights[:-1] += frac * dx * (2.0 - frac) / 2.0
    weights[1:] += frac ** 2 * dx / 2.0
    weights.setflags(write=False)
    frac.setflags(write=False)
    return weights, frac


@dataclass(frozen=True)
class EnergyBreakdown:
    e_kin: float
    e_pot: float
    e_int: float
    e_tot: float
    norm_inside: float
    norm_total: float
    kinetic_boundary_term: float = 0.0


@dataclass(frozen=True)
class CollapseThresholds:
    density_factor: float = 50.0
    kinetic_factor: float = 20.0
    cliff_fraction: float = 0.25
    cliff_window: float = 0.01
    cliff_focus_factor: float = 2.0


@dataclass(frozen=True)
class CollapseReport:
    collapsed: bool
    tau_collapse: Optional[float] = None
    trigger: Optional[str] = None

    def __post_init__(self) -> None:
        if self.collapsed and self.tau_collapse is None:
            raise InvalidParameterError("a collapsed report needs tau_collapse")
        if self.trigger is not None and self.trigger not in TRIGGERS:
            raise InvalidParameterError(f"unknown collapse trigger {self.trigger!r}")

    def to_dict(self) -> dict:
        return {"collapsed": self.collapsed, "tau_collapse": self.tau_collapse, "trigger": self.trigger}


def surviving_density(state: WaveState) -> float:
    """rho_S = int_0^1 |psi|^2 dx."""
    weights, _ = _interval_weights(state.grid)
    return float(np.dot(weights, np.abs(state.padded()) ** 2))


def energy_breakdown(state: WaveState, config: "PropagatorConfig") -> EnergyBreakdown:
    """Kinetic, potential and interaction parts of E(tau) over [0, 1].

    e_kin uses the density form int |psi'|^2; the difference to the
    -psi* psi'' form is the boundary term Re(psi* psi') at x = 1, reported as
    kinetic_boundary_term. The interaction carries the full gamma. The
    absorber is excluded.
    """
    grid = state.grid
    dx = grid.dx
    psi = state.padded()
    rho = np.abs(psi) ** 2
    weights, frac = _interval_weights(grid)

    slope = np.diff(psi) / dx
    e_kin = float(np.sum(frac * dx * np.abs(slope) ** 2))

    mid = grid.padded_x[:-1] + 0.5 * frac * dx
    rho_mid = 0.5 * (rho[:-1] + rho[1:])
    e_pot = float(np.sum(frac * dx * step_values(config.trap, mid) * rho_mid))

    quartic = np.zeros_like(rho)
    quartic[1:-1] = rho[1:-1] ** 2 / grid.x ** 2
    e_int = float(config.gamma * np.dot(weights, quartic))

    norm_inside = float(np.dot(weights, rho))
    norm_total = float(dx * np.sum(rho))

    return EnergyBreakdown(
        e_kin=e_kin,
        e_pot=e_pot,
        e_int=e_int,
        e_tot=e_kin + e_pot + e_int,
        norm_inside=norm_inside,
        norm_total=norm_total,
        kinetic_boundary_term=_kinetic_boundary_term(psi, grid),
    )


def _kinetic_boundary_term(psi: np.ndarray, grid: GridSpec) -> float:
    xp = grid.padded_x
    k = int(np.clip(np.rint(TRAP_EDGE / grid.dx), 1, grid.n_points))
    value = np.interp(TRAP_EDGE, xp, psi.real) + 1j * np.interp(TRAP_EDGE, xp, psi.imag)
    slope = (psi[k + 1] - psi[k - 1]) / (2.0 * grid.dx)
    return float(np.real(np.conj(value) * slope))


def conserved_energy(state: WaveState, config: "PropagatorConfig") -> float:
    """GP energy functional int (|psi'|^2 + V |psi|^2 + gamma/2 |psi|^4 / x^2) over the whole grid.

    Conserved by the midpoint-density CN step when the absorber is off.
    """
    grid = state.grid
    dx = grid.dx
    psi = state.padded()
    rho = np.abs(state.amplitudes) ** 2
    kinetic = np.sum(np.abs(np.diff(psi)) ** 2) / dx
    potential = dx * np.dot(config.potential, rho)
    interaction = 0.5 * config.gamma * dx * np.dot(rho ** 2, config.inv_x2)
    return float(kinetic + potential + interaction)


# ===== TIME SERIES =====


@dataclass(frozen=True)
class SeriesSample:
    tau: float
    rho_s: float
    e_kin: float
    e_pot: float
    e_int: float
    e_tot: float
    norm_total: float
    peak_density: float

    def as_row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in SERIES_COLUMNS)


def sample_state(state: WaveState, config: "PropagatorConfig") -> SeriesSample:
    e = energy_breakdown(state, config)
    return SeriesSample(
        tau=float(state.tau),
        rho_s=e.norm_inside,
        e_kin=e.e_kin,
        e_pot=e.e_pot,
        e_int=e.e_int,
        e_tot=e.e_tot,
        norm_total=e.norm_total,
        peak_density=float(np.max(np.abs(state.amplitudes) ** 2)),
    )


@dataclass
class ObservableSeries:
    sigma: float = 0.0
    gamma: float = 0.0
    samples: List[SeriesSample] = field(default_factory=list)
    fixed_point_failures: List[float] = field(default_factory=list)
    terminated: Optional[str] = None
    terminated_tau: Optional[float] = None
    final_state: Optional[WaveState] = None

    def append(self, sample: SeriesSample) -> None:
        self.samples.append(sample)

    def terminate(self, reason: str, tau: float) -> None:
        self.terminated = reason
        self.terminated_tau = float(tau)

    def __len__(self) -> int:
        return len(self.samples)

    def column(self, name: str) -> np.ndarray:
        if name not in SERIES_COLUMNS:
            raise KeyError(name)
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    @property
    def tau(self) -> np.ndarray:
        return self.column("tau")

    @property
    def rho_s(self) -> np.ndarray:
        return self.column("rho_s")

    @property
    def final_rho_s(self) -> float:
        return self.samples[-1].rho_s

    def to_csv(self, out: Union[str, IO[str]]) -> None:
        """Write the series with a header row and 17 significant digits."""
        if isinstance(out, str):
            with open(out, "w", encoding="utf-8", newline="") as f:
                self.to_csv(f)
            return
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SERIES_COLUMNS)
        for s in self.samples:
            writer.writerow([format(v, ".17g") for v in s.as_row()])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path: str, sigma: float = 0.0, gamma: float = 0.0) -> "ObservableSeries":
        series = cls(sigma=sigma, gamma=gamma)
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = tuple(next(reader))
            if header != SERIES_COLUMNS:
                raise InvalidParameterError(f"{path}: unexpected series header {header}")
            for row in reader:
                series.append(SeriesSample(*(float(v) for v in row)))
        return series


# ===== COLLAPSE DETECTION =====


def _first_above(tau: np.ndarray, values: np.ndarray, limit: float) -> Optional[float]:
    hits = np.nonzero(values > limit)[0]
    return float(tau[hits[0]]) if len(hits) else None


def _first_cliff(
    tau: np.ndarray, rho: np.ndarray, peak: np.ndarray, fraction: float, window: float, focus: float
) -> Optional[float]:
    # drops count only once the peak density has reached focus x its start value
    focused = np.maximum.accumulate(peak) >= focus * peak[0]
    for i in range(len(tau) - 1):
        if not focused[i]:
            continue
        j_end = int(np.searchsorted(tau, tau[i] + window, side="right"))
        later = rho[i + 1:j_end]
        drops = np.nonzero(rho[i] - later > fraction * rho[i])[0]
        if len(drops):
            return float(tau[i + 1 + drops[0]])
    return None


def detect_collapse(series: ObservableSeries, thresholds: Optional[CollapseThresholds] = None) -> CollapseReport:
    """Flag collapse when any trigger fires; reports the earliest trigger.

    Only attractive runs can self-focus, so gamma >= 0 is never flagged. The
    density cliff is gated on prior focusing (peak density above
    cliff_focus_factor x its initial value) so fast leakage alone never fires.
    """
    if len(series) < 2:
        raise InvalidParameterError("collapse detection needs at least two samples")
    if series.gamma >= 0.0:
        return CollapseReport(collapsed=False)

    th = thresholds or CollapseThresholds()
    tau = series.tau
    candidates: List[Tuple[float, str]] = []

    peak = series.column("peak_density")
    hit = _first_above(tau, peak, th.density_factor * peak[0])
    if hit is not None:
        candidates.append((hit, "density-spike"))

    e_kin = series.column("e_kin")
    hit = _first_above(tau, e_kin, th.kinetic_factor * e_kin[0])
    if hit is not None:
        candidates.append((hit, "kinetic-spike"))

    if series.fixed_point_failures:
        candidates.append((float(series.fixed_point_failures[0]), "fixed-point-failure"))

    hit = _first_cliff(tau, series.rho_s, peak, th.cliff_fraction, th.cliff_window, th.cliff_focus_factor)
    if hit is not None:
        candidates.append((hit, "density-cliff"))

    if not candidates:
        return CollapseReport(collapsed=False)

    order = {name: i for i, name in enumerate(TRIGGERS)}
    tau_c, trigger = min(candidates, key=lambda c: (c[0], order[c[1]]))
    LOGGER.info("Collapse detected at tau=%.6g (%s), gamma=%g", tau_c, trigger, series.gamma)
    return CollapseReport(collapsed=True, tau_collapse=tau_c, trigger=trigger)
