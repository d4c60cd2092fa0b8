"""model.py

Trap potential, absorbing layer, initial packet and Gaussian trial state on a
uniform radial grid.

Grid convention
- interior points x_j = j * dx, j = 1..n_points, dx = x_max / (n_points + 1)
- psi = 0 at x = 0 (radial regularity) and at x = x_max (behind the absorber)
- the discrete norm dx * sum |psi_j|^2 is the trapezoid rule on the padded grid
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidParameterError, ResolutionError


LOGGER = logging.getLogger("qrtrap.model")

# points per characteristic length below which a state counts as unresolved
MIN_POINTS_PER_WIDTH = 16
# x = 1 belongs to the outer side of the step
EDGE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    x_max: float = 8.0
    n_points: int = 7999

    def __post_init__(self) -> None:
        if not self.x_max > 1.0:
            raise InvalidParameterError(f"x_max must extend beyond the trap edge x=1, got {self.x_max!r}")
        if int(self.n_points) != self.n_points or self.n_points < 100:
            raise InvalidParameterError(f"n_points must be an integer >= 100, got {self.n_points!r}")

    @property
    def dx(self) -> float:
        return self.x_max / (self.n_points + 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = self.dx * np.arange(1, self.n_points + 1, dtype=float)
        x.setflags(write=False)
        return x

    @cached_property
    def padded_x(self) -> np.ndarray:
        x = self.dx * np.arange(0, self.n_points + 2, dtype=float)
        x[-1] = self.x_max
        x.setflags(write=False)
        return x


@dataclass(frozen=True)
class StepTrap:
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma >= 0.0:
            raise InvalidParameterError(f"sigma must be >= 0, got {self.sigma!r}")


@dataclass(frozen=True)
class AbsorberSpec:
    start: float = 2.0
    strength: float = 200.0
    exponent: int = 3

    def __post_init__(self) -> None:
        if not self.start > 1.0:
            raise InvalidParameterError(f"absorber start must lie outside the trap (> 1), got {self.start!r}")
        if not self.strength >= 0.0:
            raise InvalidParameterError(f"absorber strength must be >= 0, got {self.strength!r}")
        if self.exponent < 2:
            raise InvalidParameterError(f"absorber exponent must be >= 2, got {self.exponent!r}")


@dataclass(frozen=True, eq=False)
class WaveState:
    """Radial amplitudes psi(x_j) on the interior grid points at scaled time tau."""

    amplitudes: np.ndarray
    tau: float
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise InvalidParameterError(
                f"amplitudes have shape {amps.shape}, grid expects ({self.grid.n_points},)"
            )
        object.__setattr__(self, "amplitudes", amps)

    def padded(self) -> np.ndarray:
        """Amplitudes including the two Dirichlet boundary zeros."""
        out = np.zeros(self.grid.n_points + 2, dtype=complex)
        out[1:-1] = self.amplitudes
        return out

    def norm(self) -> float:
        return discrete_norm(self.amplitudes, self.grid)

    def with_amplitudes(self, amplitudes: np.ndarray, tau: float) -> "WaveState":
        return WaveState(amplitudes=amplitudes, tau=tau, grid=self.grid)


def discrete_norm(amplitudes: np.ndarray, grid: GridSpec) -> float:
    return float(grid.dx * np.sum(np.abs(amplitudes) ** 2))


def step_values(trap: StepTrap, x: np.ndarray) -> np.ndarray:
    """-sigma^2 * theta[x - 1], right-continuous at x = 1."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 1.0 - EDGE_TOL, -trap.sigma ** 2, 0.0)


def potential_on_grid(trap: StepTrap, grid: GridSpec) -> np.ndarray:
    return step_values(trap, grid.x)


def absorber_profile(spec: AbsorberSpec, x: np.ndarray, x_max: float) -> np.ndarray:
    """W(x) = W0 ((x - start) / (x_max - start))^p beyond start, zero before."""
    if not spec.start < x_max:
        raise InvalidParameterError(f"absorber start {spec.start} must lie inside the domain (x_max={x_max})")
    x = np.asarray(x, dtype=float)
    ramp = np.clip((x - spec.start) / (x_max - spec.start), 0.0, None)
    return spec.strength * ramp ** spec.exponent


def absorber_on_grid(spec: AbsorberSpec, grid: GridSpec) -> np.ndarray:
    return absorber_profile(spec, grid.x, grid.x_max)


def _normalized(values: np.ndarray, grid: GridSpec, tau: float = 0.0) -> WaveState:
    norm = discrete_norm(values, grid)
    if norm <= 0.0:
        raise ResolutionError("state vanishes on every grid point")
    return WaveState(amplitudes=values / np.sqrt(norm), tau=tau, grid=grid)


def initial_packet(a: float, grid: GridSpec) -> WaveState:
    """psi(x, 0) = N x exp(-a x) theta[1 - x], normalized on the grid.

    The drop to zero sits on the segment just beyond x = 1, so the kinetic
    energy over [0, 1] starts at a^2. The trapezoid rho_S then starts at
    1 - dx/2 |psi(1)|^2 when x = 1 is a node.
    """
    if not a > 0.0:
        raise InvalidParameterError(f"diffuseness a must be positive, got {a!r}")
    if (1.0 / a) / grid.dx < MIN_POINTS_PER_WIDTH:
        raise ResolutionError(
            f"packet with a={a} is unresolved: 1/a spans {1.0 / a / grid.dx:.1f} points "
            f"(need {MIN_POINTS_PER_WIDTH})"
        )
    x = grid.x
    values = np.where(x <= 1.0 + EDGE_TOL, x * np.exp(-a * x), 0.0).astype(complex)
    return _normalized(values, grid)


def gaussian_trial(alpha: float, grid: GridSpec) -> WaveState:
    """phi(x) = N x exp(-x^2 / (2 alpha^2)), normalized on the grid."""
    if not alpha > 0.0:
        raise InvalidParameterError(f"width alpha must be positive, got {alpha!r}")
    if alpha / grid.dx < MIN_POINTS_PER_WIDTH:
        raise ResolutionError(
            f"Gaussian with alpha={alpha} is unresolved: spans {alpha / grid.dx:.1f} points "
            f"(need {MIN_POINTS_PER_WIDTH})"
        )
    x = grid.x
    values = (x * np.exp(-x ** 2 / (2.0 * alpha ** 2))).astype(complex)
    return _normalized(values, grid)


def overlap(state_a: WaveState, state_b: WaveState) -> float:
    """|<a|b>|^2 on the shared grid."""
    amp = state_a.grid.dx * np.vdot(state_a.amplitudes, state_b.amplitudes)
    return float(abs(amp) ** 2)


def match_gaussian_width(a: float, grid: GridSpec, bounds: Tuple[float, float] = (0.1, 1.0)) -> float:
    """Width alpha of the Gaussian trial state with maximal overlap with the a-packet."""
    packet = initial_packet(a, grid)
    lo, hi = bounds
    if not 0.0 < lo < hi:
        raise InvalidParameterError(f"invalid alpha bounds {bounds!r}")

    res = minimize_scalar(
        lambda alpha: -overlap(gaussian_trial(alpha, grid), packet),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-6},
    )
    LOGGER.info("Matched a=%g to alpha=%.4f (overlap %.6f)", a, res.x, -res.fun)
    return float(res.x)
