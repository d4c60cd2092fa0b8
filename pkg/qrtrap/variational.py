"""variational.py

Gaussian-ansatz stability analysis of the trap.

Trial state phi(x) = N x exp(-x^2 / (2 alpha^2)), N^2 = 4 / (sqrt(pi) alpha^3).

Two evaluations of H(alpha, sigma, gamma) = <phi|H|phi> live side by side:
- the closed forms as printed in the source (energy and running coupling),
- direct adaptive quadrature of <phi|H|phi>.

The printed potential term -sigma^2 (2/sqrt(pi) e^{-1/alpha^2} - alpha erfc(1/alpha))
grows like +sigma^2 alpha for large alpha, while the direct integral is bounded
below by -sigma^2 and tends to it. Stability classification uses the quadrature;
the printed values are kept and audited against it.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import erf, erfc

from .errors import (
    BracketError,
    DegenerateDerivativeError,
    InvalidParameterError,
    QuadratureAccuracyError,
)
from .model import StepTrap, initial_packet
from .observables import CollapseThresholds, detect_collapse
from .propagator import PropagatorConfig, evolve


LOGGER = logging.getLogger("qrtrap.variational")

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-12
# e^{-u^2} is below double precision beyond u = 40
TAIL_WIDTHS = 40.0
DERIVATIVE_STEP = 1e-6
PHASE_DIAGRAM_COLUMNS = ("sigma", "alpha", "gamma_printed", "gamma_numeric")
AUDIT_COLUMNS = (
    "sigma", "alpha", "gamma_printed", "gamma_numeric", "gamma_delta",
    "potential_printed", "potential_quadrature",
)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    return alpha


@dataclass(frozen=True)
class AnsatzEnergyTerms:
    kinetic: float
    potential: float
    interaction: float
    total: float


def interaction_coefficient(alpha: float) -> float:
    """h_int(alpha) = sqrt(2 / (pi alpha^6)), the interaction energy per unit gamma."""
    alpha = _check_alpha(alpha)
    return math.sqrt(2.0 / (math.pi * alpha ** 6))


# ===== PRINTED CLOSED FORMS =====


def ansatz_terms_printed(alpha: float, sigma: float, gamma: float) -> AnsatzEnergyTerms:
    alpha = _check_alpha(alpha)
    kinetic = 3.0 / (2.0 * alpha ** 2)
    inv = 1.0 / alpha
    potential = -sigma ** 2 * (2.0 / math.sqrt(math.pi) * math.exp(-inv ** 2) - alpha * erfc(inv))
    interaction = gamma * interaction_coefficient(alpha)
    return AnsatzEnergyTerms(kinetic, potential, interaction, kinetic + potential + interaction)


def ansatz_energy_printed(alpha: float, sigma: float, gamma: float) -> float:
    return ansatz_terms_printed(alpha, sigma, gamma).total


def running_gamma_printed(alpha: float, sigma: float) -> float:
    alpha = _check_alpha(alpha)
    inv = 1.0 / alpha
    bracket = (
        2.0 * alpha * sigma ** 2 * math.exp(-inv ** 2)
        + alpha ** 2 * sigma ** 2 * (1.0 - erf(inv))
        - 1.5 * math.sqrt(math.pi)
    )
    return -alpha ** 2 + alpha / math.sqrt(2.0) * bracket


# ===== QUADRATURE =====


def _quad(f: Callable[[float], float], lo: float, hi: float, what: str) -> float:
    if hi <= lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400)
        except IntegrationWarning as e:
            raise QuadratureAccuracyError(f"{what} quadrature did not converge on [{lo}, {hi}]: {e}") from e
    return float(value)


def ansatz_terms_quadrature(alpha: float, sigma: float, gamma: float) -> AnsatzEnergyTerms:
    """<phi|H|phi> term by term from the trial state and the radial Hamiltonian."""
    alpha = _check_alpha(alpha)
    n2 = 4.0 / (math.sqrt(math.pi) * alpha ** 3)
    a2 = alpha ** 2
    reach = TAIL_WIDTHS * alpha

    def density(x: float) -> float:
        return n2 * x * x * math.exp(-x * x / a2)

    def slope_sq(x: float) -> float:
        return n2 * math.exp(-x * x / a2) * (1.0 - x * x / a2) ** 2

    def quartic_over_x2(x: float) -> float:
        return n2 * n2 * x * x * math.exp(-2.0 * x * x / a2)

    kinetic = _quad(slope_sq, 0.0, reach, "kinetic")
    outside = _quad(density, 1.0, 1.0 + reach, "potential")
    per_gamma = _quad(quartic_over_x2, 0.0, reach, "interaction")

    potential = -sigma ** 2 * outside
    interaction = gamma * per_gamma
    return AnsatzEnergyTerms(kinetic, potential, interaction, kinetic + potential + interaction)


def ansatz_energy_quadrature(alpha: float, sigma: float, gamma: float) -> float:
    return ansatz_terms_quadrature(alpha, sigma, gamma).total


def potential_term_exact(alpha: float, sigma: float) -> float:
    """Closed form of the direct step-trap integral, -sigma^2 (2/(sqrt(pi) alpha) e^{-1/alpha^2} + erfc(1/alpha))."""
    alpha = _check_alpha(alpha)
    inv = 1.0 / alpha
    return -sigma ** 2 * (2.0 * inv / math.sqrt(math.pi) * math.exp(-inv ** 2) + erfc(inv))


# ===== STATIONARITY =====


def _derivative(f: Callable[[float], float], alpha: float) -> float:
    """Central difference with step 1e-6 alpha, one Richardson extrapolation."""
    h = DERIVATIVE_STEP * alpha
    coarse = (f(alpha + h) - f(alpha - h)) / (2.0 * h)
    fine = (f(alpha + h / 2) - f(alpha - h / 2)) / h
    return (4.0 * fine - coarse) / 3.0


def _bare_energy(sigma: float) -> Callable[[float], float]:
    return lambda alpha: ansatz_energy_quadrature(alpha, sigma, 0.0)


def stationary_gamma_numeric(alpha: float, sigma: float) -> float:
    """gamma with dH/dalpha = 0, using linearity of H in gamma."""
    alpha = _check_alpha(alpha)
    d_int = _derivative(interaction_coefficient, alpha)
    if abs(d_int) < 1e-30:
        raise DegenerateDerivativeError(alpha)
    return -_derivative(_bare_energy(sigma), alpha) / d_int


def stationarity_residual(alpha: float, sigma: float, gamma: float) -> Tuple[float, float]:
    """(|dH/dalpha|, |H|) at fixed gamma."""
    alpha = _check_alpha(alpha)
    bare = _bare_energy(sigma)

    def energy(a: float) -> float:
        return bare(a) + gamma * interaction_coefficient(a)

    return abs(_derivative(energy, alpha)), abs(energy(alpha))


# ===== PHASE DIAGRAM =====


@dataclass(frozen=True)
class PhaseDiagramRow:
    sigma: float
    alpha: float
    gamma_printed: float
    gamma_numeric: float
    residual: float = 0.0


@dataclass
class PhaseDiagram:
    rows: List[PhaseDiagramRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def curve(self, sigma: float) -> List[PhaseDiagramRow]:
        return [r for r in self.rows if r.sigma == sigma]

    def to_csv(self, out) -> None:
        if isinstance(out, str):
            with open(out, "w", encoding="utf-8", newline="") as f:
                self.to_csv(f)
            return
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(PHASE_DIAGRAM_COLUMNS)
        for r in self.rows:
            writer.writerow([format(getattr(r, c), ".17g") for c in PHASE_DIAGRAM_COLUMNS])


def phase_diagram(
    sigmas: Sequence[float],
    alpha_range: Tuple[float, float] = (0.05, 1.0),
    n_alpha: int = 96,
) -> PhaseDiagram:
    """Printed and numeric running coupling on the (sigma, alpha) grid."""
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise InvalidParameterError("phase diagram needs at least one sigma")
    lo, hi = (float(v) for v in alpha_range)
    if not 0.0 < lo < hi:
        raise InvalidParameterError(f"alpha range must satisfy 0 < lo < hi, got {alpha_range!r}")
    if n_alpha < 2:
        raise InvalidParameterError(f"n_alpha must be >= 2, got {n_alpha!r}")
    if any(s < 0.0 for s in sigmas):
        raise InvalidParameterError(f"sigma values must be >= 0, got {sigmas!r}")

    alphas = np.linspace(lo, hi, int(n_alpha))
    diagram = PhaseDiagram()
    worst_delta = 0.0
    for sigma in sigmas:
        for alpha in alphas:
            alpha = float(alpha)
            g_printed = running_gamma_printed(alpha, sigma)
            g_numeric = stationary_gamma_numeric(alpha, sigma)
            grad, energy = stationarity_residual(alpha, sigma, g_numeric)
            if grad > 1e-6 * (1.0 + energy):
                LOGGER.warning("Stationarity residual %.3e at sigma=%g alpha=%g", grad, sigma, alpha)
            delta = g_printed - g_numeric
            worst_delta = max(worst_delta, abs(delta))
            LOGGER.debug("sigma=%g alpha=%.5f printed=%.8g numeric=%.8g delta=%.3e",
                         sigma, alpha, g_printed, g_numeric, delta)
            diagram.rows.append(PhaseDiagramRow(sigma, alpha, g_printed, g_numeric, grad))

    if worst_delta > 1e-3:
        LOGGER.warning("Printed running coupling differs from quadrature by up to %.3g", worst_delta)
    return diagram


def discrepancy_audit(diagram: PhaseDiagram) -> List[Dict[str, float]]:
    rows = []
    for r in diagram.rows:
        rows.append(
            {
                "sigma": r.sigma,
                "alpha": r.alpha,
                "gamma_printed": r.gamma_printed,
                "gamma_numeric": r.gamma_numeric,
                "gamma_delta": r.gamma_printed - r.gamma_numeric,
                "potential_printed": ansatz_terms_printed(r.alpha, r.sigma, 0.0).potential,
                "potential_quadrature": ansatz_terms_quadrature(r.alpha, r.sigma, 0.0).potential,
            }
        )
    return rows


def large_alpha_note(sigma: float, alphas: Sequence[float] = (0.5, 1.0, 2.0, 5.0, 10.0, 50.0)) -> str:
    """Plain-text table of the printed potential term against the direct integral."""
    lines = [
        f"Potential term of the Gaussian ansatz energy, sigma = {sigma:g}",
        "",
        "The printed closed form -sigma^2 (2/sqrt(pi) exp(-1/alpha^2) - alpha erfc(1/alpha))",
        "grows like +sigma^2 alpha for large alpha. The direct integral",
        "-sigma^2 int_1^inf |phi|^2 dx is bounded below by -sigma^2 and tends to it.",
        "The printed form is reported but not used for stability classification.",
        "",
        f"{'alpha':>8} {'printed':>16} {'quadrature':>16} {'bound':>12}",
    ]
    for alpha in alphas:
        printed = ansatz_terms_printed(alpha, sigma, 0.0).potential
        numeric = ansatz_terms_quadrature(alpha, sigma, 0.0).potential
        lines.append(f"{alpha:>8.3g} {printed:>16.8g} {numeric:>16.8g} {-sigma ** 2:>12.6g}")
    return "\n".join(lines) + "\n"


def write_audit(diagram: PhaseDiagram, out_dir: str) -> Tuple[str, str]:
    """Write audit.csv and audit_notes.txt next to the phase diagram."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "audit.csv")
    notes_path = os.path.join(out_dir, "audit_notes.txt")

    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(AUDIT_COLUMNS)
        for row in discrepancy_audit(diagram):
            writer.writerow([format(row[c], ".17g") for c in AUDIT_COLUMNS])

    sigmas = sorted({r.sigma for r in diagram.rows}) or [0.0]
    with open(notes_path, "w", encoding="utf-8") as f:
        f.write("\n".join(large_alpha_note(s) for s in sigmas))
    return csv_path, notes_path


# ===== DYNAMIC CRITICAL COUPLING =====


def critical_gamma_dynamic(
    sigma: float,
    config: PropagatorConfig,
    bracket: Tuple[float, float] = (-0.70, -0.45),
    tol: float = 0.005,
    a: float = 5.0,
    horizon: float = 0.3,
    sample_every: int = 400,
    thresholds: Optional[CollapseThresholds] = None,
) -> float:
    """Bisect gamma between a collapsing and a stable full dynamical run."""
    lo, hi = (float(v) for v in bracket)
    if not lo < hi:
        raise BracketError(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
    if lo >= 0.0:
        raise BracketError(f"bracket ({lo}, {hi}) lies in gamma >= 0 where no collapse is possible")
    if not tol > 0.0:
        raise InvalidParameterError(f"tol must be positive, got {tol!r}")

    base = replace(config, trap=StepTrap(float(sigma)))
    initial = initial_packet(a, base.grid)

    def collapses(gamma: float) -> bool:
        series = evolve(initial, replace(base, gamma=gamma), horizon, sample_every, progress=False)
        if series.terminated == "numerical-blowup":
            result = True
        else:
            result = detect_collapse(series, thresholds).collapsed
        LOGGER.info("bisection sigma=%g gamma=%.6f collapsed=%s", sigma, gamma, result)
        return result

    if not collapses(lo):
        raise BracketError(f"no collapse at the lower end gamma={lo} (sigma={sigma})")
    if collapses(hi):
        raise BracketError(f"collapse already at the upper end gamma={hi} (sigma={sigma})")

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if collapses(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
