"""propagator.py

Crank-Nicolson propagation of the scaled radial Gross-Pitaevskii equation

    i d/dtau psi = -psi'' - sigma^2 theta[x-1] psi + gamma |psi|^2 / x^2 psi - i W(x) psi

The cubic term is handled by a fixed-point iteration on the density inside
the CN matrices: the first pass uses |psi^n|^2, later passes the midpoint
(|psi^n|^2 + |psi^{n+1}|^2) / 2. With the midpoint density the effective
Hamiltonian is Hermitian when W = 0, so the step conserves the norm and the
gamma/2 energy functional up to the solver and iteration tolerances.
"""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg
from tqdm import tqdm

from .errors import (
    CollapseSuspectedError,
    InvalidParameterError,
    NumericalBlowupError,
    SingularSystemError,
)
from .model import AbsorberSpec, GridSpec, StepTrap, WaveState, absorber_on_grid, potential_on_grid
from .observables import ObservableSeries, sample_state


LOGGER = logging.getLogger("qrtrap.propagator")


def _progress_enabled() -> bool:
    v = os.environ.get("QRTRAP_PROGRESS")
    if v is not None:
        return v.strip().lower() in {"1", "true", "yes", "y", "on"}
    return sys.stderr.isatty()


@dataclass(frozen=True)
class PropagatorConfig:
    trap: StepTrap
    gamma: float = 0.0
    dt: float = 2.5e-6
    fixed_point_tol: float = 1e-10
    max_fixed_point_iters: int = 25
    absorber: AbsorberSpec = field(default_factory=AbsorberSpec)
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt!r}")
        if not 0.0 < self.fixed_point_tol <= 1e-3:
            raise InvalidParameterError(f"fixed_point_tol must lie in (0, 1e-3], got {self.fixed_point_tol!r}")
        if self.max_fixed_point_iters < 2:
            raise InvalidParameterError(
                f"max_fixed_point_iters must be >= 2, got {self.max_fixed_point_iters!r}"
            )
        if not np.isfinite(self.gamma):
            raise InvalidParameterError(f"gamma must be finite, got {self.gamma!r}")
        # raises if the absorber does not fit the domain
        absorber_on_grid(self.absorber, self.grid)

    @cached_property
    def potential(self) -> np.ndarray:
        return potential_on_grid(self.trap, self.grid)

    @cached_property
    def absorber_values(self) -> np.ndarray:
        return absorber_on_grid(self.absorber, self.grid)

    @cached_property
    def inv_x2(self) -> np.ndarray:
        return 1.0 / self.grid.x ** 2

    @cached_property
    def linear_diagonal(self) -> np.ndarray:
        """Main diagonal of -D2 + V - iW."""
        return 2.0 / self.grid.dx ** 2 + self.potential - 1j * self.absorber_values


@dataclass(frozen=True, eq=False)
class TridiagonalSystem:
    lower: np.ndarray  # length n - 1
    main: np.ndarray  # length n
    upper: np.ndarray  # length n - 1
    rhs: np.ndarray  # length n

    def __post_init__(self) -> None:
        n = len(self.main)
        if n == 0:
            raise InvalidParameterError("empty tridiagonal system")
        if len(self.lower) != n - 1 or len(self.upper) != n - 1 or len(self.rhs) != n:
            raise InvalidParameterError(
                f"inconsistent tridiagonal shapes: lower={len(self.lower)}, main={n}, "
                f"upper={len(self.upper)}, rhs={len(self.rhs)}"
            )

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.main * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Banded LU solve (LAPACK gtsv-style via scipy.linalg.solve_banded)."""
    n = len(system.main)
    ab = np.zeros((3, n), dtype=np.result_type(system.lower, system.main, system.upper, complex))
    ab[0, 1:] = system.upper
    ab[1, :] = system.main
    ab[2, :-1] = system.lower
    try:
        return scipy.linalg.solve_banded((1, 1), ab, np.asarray(system.rhs, dtype=ab.dtype), check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"Tridiagonal system is singular: {e}") from e


def _laplacian_neighbours(psi: np.ndarray) -> np.ndarray:
    # psi_{j-1} + psi_{j+1} with psi = 0 outside the interior
    out = np.zeros_like(psi)
    out[1:] += psi[:-1]
    out[:-1] += psi[1:]
    return out


def _apply(psi: np.ndarray, diag: np.ndarray, dx: float) -> np.ndarray:
    return diag * psi - _laplacian_neighbours(psi) / dx ** 2


def apply_hamiltonian(state: WaveState, config: PropagatorConfig, include_absorber: bool = True) -> np.ndarray:
    """(-D2 + V + gamma |psi|^2 / x^2 - iW) psi on the interior points."""
    if state.grid != config.grid:
        raise InvalidParameterError("state and propagator config live on different grids")
    psi = state.amplitudes
    diag = config.linear_diagonal + config.gamma * np.abs(psi) ** 2 * config.inv_x2
    if not include_absorber:
        diag = diag + 1j * config.absorber_values
    return _apply(psi, diag, config.grid.dx)


def _cn_system(psi_n: np.ndarray, diag: np.ndarray, config: PropagatorConfig) -> TridiagonalSystem:
    dx2 = config.grid.dx ** 2
    half = 0.5j * config.dt
    off = np.full(len(psi_n) - 1, -half / dx2, dtype=complex)
    rhs = psi_n - half * _apply(psi_n, diag, config.grid.dx)
    return TridiagonalSystem(lower=off, main=1.0 + half * diag, upper=off, rhs=rhs)


def step(state: WaveState, config: PropagatorConfig) -> WaveState:
    """Advance by one CN step dt."""
    if state.grid != config.grid:
        raise InvalidParameterError("state and propagator config live on different grids")

    psi_n = state.amplitudes
    tau_next = state.tau + config.dt
    rho_n = np.abs(psi_n) ** 2
    base = config.linear_diagonal

    if config.gamma == 0.0:
        psi_new = solve_tridiagonal(_cn_system(psi_n, base, config))
        if not np.all(np.isfinite(psi_new)):
            raise NumericalBlowupError(tau_next)
        return state.with_amplitudes(psi_new, tau_next)

    rho = rho_n
    psi_prev: Optional[np.ndarray] = None
    change = np.inf
    for it in range(1, config.max_fixed_point_iters + 1):
        diag = base + config.gamma * rho * config.inv_x2
        psi_new = solve_tridiagonal(_cn_system(psi_n, diag, config))
        if not np.all(np.isfinite(psi_new)):
            raise NumericalBlowupError(tau_next)
        if psi_prev is not None:
            scale = np.linalg.norm(psi_new)
            change = np.linalg.norm(psi_new - psi_prev) / scale if scale > 0 else 0.0
            if change < config.fixed_point_tol:
                LOGGER.debug("tau=%.6g converged after %d passes", tau_next, it)
                return state.with_amplitudes(psi_new, tau_next)
        psi_prev = psi_new
        rho = 0.5 * (rho_n + np.abs(psi_new) ** 2)

    raise CollapseSuspectedError(state.with_amplitudes(psi_new, tau_next), config.max_fixed_point_iters, change)


def evolve(
    initial: WaveState,
    config: PropagatorConfig,
    tau_end: float,
    sample_every: int = 400,
    stop_on_collapse: bool = True,
    progress: Optional[bool] = None,
) -> ObservableSeries:
    """Propagate to tau_end, sampling observables every sample_every steps.

    A fixed-point failure ends the run when stop_on_collapse is set; otherwise
    the last iterate is kept and the failure time is recorded. Non-finite
    amplitudes always end the run.
    """
    if tau_end < initial.tau:
        raise InvalidParameterError(f"tau_end={tau_end} lies before the initial time {initial.tau}")
    if sample_every < 1:
        raise InvalidParameterError(f"sample_every must be >= 1, got {sample_every!r}")

    n_steps = int(round((tau_end - initial.tau) / config.dt))
    series = ObservableSeries(sigma=config.trap.sigma, gamma=config.gamma)
    series.append(sample_state(initial, config))

    LOGGER.info(
        "evolve sigma=%g gamma=%g dt=%g steps=%d grid=%d",
        config.trap.sigma, config.gamma, config.dt, n_steps, config.grid.n_points,
    )

    if progress is None:
        progress = _progress_enabled()

    state = initial
    with tqdm(total=n_steps, disable=not progress, file=sys.stderr, mininterval=1.0,
              desc=f"sigma={config.trap.sigma:g} gamma={config.gamma:g}") as bar:
        for k in range(1, n_steps + 1):
            try:
                state = step(state, config)
            except CollapseSuspectedError as e:
                tau = e.state.tau
                series.fixed_point_failures.append(tau)
                if stop_on_collapse:
                    LOGGER.warning("Collapse suspected at tau=%.6g; stopping run", tau)
                    series.append(sample_state(e.state, config))
                    series.terminate("collapse-suspected", tau)
                    state = e.state
                    break
                LOGGER.warning("Fixed-point failure at tau=%.6g; continuing with last iterate", tau)
                state = e.state
            except NumericalBlowupError as e:
                LOGGER.error("Numerical blowup at tau=%.6g", e.tau)
                series.terminate("numerical-blowup", e.tau)
                break

            # exact tau grid independent of accumulated rounding
            state = state.with_amplitudes(state.amplitudes, initial.tau + k * config.dt)
            if k % sample_every == 0 or k == n_steps:
                series.append(sample_state(state, config))
                bar.update(k - bar.n)

    series.final_state = state
    return series
