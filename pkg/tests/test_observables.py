import math

import numpy as np
import pytest

from qrtrap.errors import InvalidParameterError
from qrtrap.model import AbsorberSpec, GridSpec, StepTrap, WaveState, gaussian_trial, initial_packet
from qrtrap.observables import (
    SERIES_COLUMNS,
    CollapseReport,
    CollapseThresholds,
    ObservableSeries,
    SeriesSample,
    detect_collapse,
    energy_breakdown,
    sample_state,
    surviving_density,
)
from qrtrap.propagator import PropagatorConfig
from qrtrap.units import scaled_packet_kinetic_energy


def _config(sigma=20.0, gamma=0.0, grid=None):
    return PropagatorConfig(trap=StepTrap(sigma), gamma=gamma, grid=grid or GridSpec())


def _series(gamma, rows, failures=()):
    series = ObservableSeries(sigma=40.0, gamma=gamma, fixed_point_failures=list(failures))
    for tau, rho, e_kin, peak in rows:
        series.append(SeriesSample(tau, rho, e_kin, 0.0, 0.0, e_kin, 1.0, peak))
    return series


@pytest.mark.parametrize(
    "grid",
    [GridSpec(), GridSpec(x_max=4.0, n_points=399), GridSpec(x_max=4.0, n_points=2000), GridSpec(x_max=5.0, n_points=1233)],
)
def test_surviving_density_of_initial_packet(grid):
    # only the last occupied node loses weight: the drop to zero lies beyond x = 1
    state = initial_packet(5.0, grid)
    k = int(np.nonzero(state.amplitudes)[0][-1])
    f = (1.0 - grid.x[k]) / grid.dx
    f = 0.0 if abs(f) < 1e-9 else f
    deficit = 0.5 * grid.dx * (1.0 - f) ** 2 * abs(state.amplitudes[k]) ** 2
    assert surviving_density(state) == pytest.approx(1.0 - deficit, abs=1e-12)
    assert deficit <= 0.02 * grid.dx


def test_surviving_density_of_gaussian_matches_closed_form():
    alpha = 0.6
    inside = math.erf(1 / alpha) - 2 / (math.sqrt(math.pi) * alpha) * math.exp(-1 / alpha ** 2)
    assert surviving_density(gaussian_trial(alpha, GridSpec())) == pytest.approx(inside, abs=1e-5)


def test_surviving_density_with_trap_edge_between_nodes():
    grid = GridSpec(x_max=4.0, n_points=2000)
    alpha = 0.6
    inside = math.erf(1 / alpha) - 2 / (math.sqrt(math.pi) * alpha) * math.exp(-1 / alpha ** 2)
    assert surviving_density(gaussian_trial(alpha, grid)) == pytest.approx(inside, abs=1e-5)


def test_energy_breakdown_of_initial_packet():
    state = initial_packet(5.0, GridSpec())
    e = energy_breakdown(state, _config())
    assert e.e_pot == 0.0
    assert e.e_int == 0.0
    assert e.e_kin == pytest.approx(scaled_packet_kinetic_energy(5.0), rel=5e-3)
    assert e.e_tot == pytest.approx(e.e_kin)
    assert e.norm_total == pytest.approx(1.0)
    assert math.isfinite(e.kinetic_boundary_term)


def test_interaction_energy_is_linear_in_gamma():
    state = initial_packet(5.0, GridSpec())
    one = energy_breakdown(state, _config(gamma=1.0)).e_int
    assert one > 0.0
    assert energy_breakdown(state, _config(gamma=-2.0)).e_int == pytest.approx(-2.0 * one)


def test_potential_energy_vanishes_inside_the_trap():
    # density beyond x = 1 is outside the integration interval
    state = gaussian_trial(0.6, GridSpec())
    e = energy_breakdown(state, _config(sigma=10.0))
    assert e.norm_inside < 0.95
    assert e.e_pot == 0.0


def test_sample_state_columns():
    state = initial_packet(5.0, GridSpec())
    sample = sample_state(state, _config())
    assert len(sample.as_row()) == len(SERIES_COLUMNS)
    assert sample.peak_density == pytest.approx(np.max(np.abs(state.amplitudes) ** 2))


def test_series_csv_round_trip(tmp_path):
    series = _series(-0.5, [(0.0, 1.0, 25.0, 2.0), (0.1, 0.5, 26.0, 2.5)])
    text = series.to_csv_text()
    assert text.splitlines()[0] == "tau,rho_s,e_kin,e_pot,e_int,e_tot,norm_total,peak_density"
    assert text.endswith("\n") and "\r" not in text

    path = tmp_path / "series.csv"
    series.to_csv(str(path))
    loaded = ObservableSeries.from_csv(str(path), sigma=40.0, gamma=-0.5)
    assert loaded.samples == series.samples


def test_series_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("tau,rho\n0,1\n", encoding="utf-8")
    with pytest.raises(InvalidParameterError):
        ObservableSeries.from_csv(str(path))


def test_no_collapse_for_repulsive_or_free_runs():
    rows = [(0.0, 1.0, 25.0, 2.0), (0.1, 0.1, 2500.0, 500.0)]
    assert detect_collapse(_series(0.0, rows)) == CollapseReport(collapsed=False)
    assert detect_collapse(_series(1.0, rows)).collapsed is False


def test_density_spike_and_tie_order():
    rows = [(0.0, 1.0, 25.0, 2.0), (0.1, 0.9, 30.0, 50.0), (0.2, 0.9, 600.0, 150.0)]
    report = detect_collapse(_series(-0.7, rows))
    assert report.collapsed
    assert report.tau_collapse == pytest.approx(0.2)
    # density and kinetic spike at the same tau: density first
    assert report.trigger == "density-spike"


def test_kinetic_spike_before_density_spike():
    rows = [(0.0, 1.0, 25.0, 2.0), (0.1, 0.9, 600.0, 10.0), (0.2, 0.9, 600.0, 150.0)]
    report = detect_collapse(_series(-0.7, rows))
    assert (report.tau_collapse, report.trigger) == (pytest.approx(0.1), "kinetic-spike")


def test_density_cliff():
    rows = [(0.0, 0.5, 25.0, 2.0), (0.004, 0.45, 25.0, 5.0), (0.008, 0.3, 25.0, 5.0), (0.05, 0.29, 25.0, 5.0)]
    report = detect_collapse(_series(-0.7, rows))
    assert (report.tau_collapse, report.trigger) == (pytest.approx(0.008), "density-cliff")

    slow = [(0.0, 0.5, 25.0, 2.0), (0.02, 0.45, 25.0, 2.0), (0.04, 0.4, 25.0, 2.0), (0.06, 0.36, 25.0, 2.0)]
    assert detect_collapse(_series(-0.7, slow)).collapsed is False


def test_density_cliff_needs_prior_focusing():
    # fast leakage of a spreading packet: the peak only falls
    leaking = [(0.0, 1.0, 25.0, 2.7), (0.004, 0.7, 24.0, 1.5), (0.008, 0.45, 22.0, 0.9), (0.012, 0.3, 20.0, 0.6)]
    assert detect_collapse(_series(-0.7, leaking)) == CollapseReport(collapsed=False)

    ungated = CollapseThresholds(cliff_focus_factor=1.0)
    report = detect_collapse(_series(-0.7, leaking), ungated)
    assert (report.tau_collapse, report.trigger) == (pytest.approx(0.004), "density-cliff")


def test_fixed_point_failure_trigger_and_custom_thresholds():
    rows = [(0.0, 1.0, 25.0, 2.0), (0.1, 0.9, 30.0, 3.0)]
    report = detect_collapse(_series(-0.7, rows, failures=[0.05]))
    assert (report.tau_collapse, report.trigger) == (0.05, "fixed-point-failure")

    strict = CollapseThresholds(density_factor=1.2)
    assert detect_collapse(_series(-0.7, rows), strict).trigger == "density-spike"


def test_collapse_detection_needs_two_samples():
    with pytest.raises(InvalidParameterError):
        detect_collapse(_series(-0.7, [(0.0, 1.0, 25.0, 2.0)]))
    with pytest.raises(InvalidParameterError):
        CollapseReport(collapsed=True)
    with pytest.raises(InvalidParameterError):
        CollapseReport(collapsed=False, trigger="boom")
