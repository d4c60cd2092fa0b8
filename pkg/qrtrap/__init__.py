"""qrtrap: radial Gross-Pitaevskii simulation of a quantum-reflection trap."""

__version__ = "0.1.0"

from .config import RunConfig, get_default_config, load_config
from .errors import TrapError
from .experiments import (
    ResultBundle,
    SweepPlan,
    enhancement_factor,
    run_collapse_study,
    run_free_baseline,
    run_sweep,
    score_summary,
)
from .model import (
    AbsorberSpec,
    GridSpec,
    StepTrap,
    WaveState,
    gaussian_trial,
    initial_packet,
    match_gaussian_width,
)
from .observables import (
    CollapseReport,
    CollapseThresholds,
    EnergyBreakdown,
    ObservableSeries,
    conserved_energy,
    detect_collapse,
    energy_breakdown,
    surviving_density,
)
from .propagator import PropagatorConfig, apply_hamiltonian, evolve, solve_tridiagonal, step
from .units import (
    SpeciesParams,
    ScaledParams,
    get_species,
    radial_gamma,
    scaled_params,
    scaled_sigma,
    scaled_time_to_seconds,
    species_table,
)
from .variational import (
    PhaseDiagram,
    ansatz_energy_printed,
    ansatz_energy_quadrature,
    critical_gamma_dynamic,
    phase_diagram,
    running_gamma_printed,
    stationary_gamma_numeric,
)

__all__ = [
    "AbsorberSpec",
    "CollapseReport",
    "CollapseThresholds",
    "EnergyBreakdown",
    "GridSpec",
    "ObservableSeries",
    "PhaseDiagram",
    "PropagatorConfig",
    "ResultBundle",
    "RunConfig",
    "ScaledParams",
    "SpeciesParams",
    "StepTrap",
    "SweepPlan",
    "TrapError",
    "WaveState",
    "ansatz_energy_printed",
    "ansatz_energy_quadrature",
    "apply_hamiltonian",
    "conserved_energy",
    "critical_gamma_dynamic",
    "detect_collapse",
    "energy_breakdown",
    "enhancement_factor",
    "evolve",
    "gaussian_trial",
    "get_default_config",
    "get_species",
    "initial_packet",
    "load_config",
    "match_gaussian_width",
    "phase_diagram",
    "radial_gamma",
    "run_collapse_study",
    "run_free_baseline",
    "run_sweep",
    "running_gamma_printed",
    "scaled_params",
    "scaled_sigma",
    "scaled_time_to_seconds",
    "score_summary",
    "solve_tridiagonal",
    "species_table",
    "stationary_gamma_numeric",
    "step",
    "surviving_density",
]
