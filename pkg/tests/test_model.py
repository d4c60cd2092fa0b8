import numpy as np
import pytest

from qrtrap.errors import InvalidParameterError, ResolutionError
from qrtrap.model import (
    AbsorberSpec,
    GridSpec,
    StepTrap,
    WaveState,
    absorber_profile,
    gaussian_trial,
    initial_packet,
    match_gaussian_width,
    overlap,
    potential_on_grid,
    step_values,
)


def test_default_grid_puts_trap_edge_on_a_node():
    grid = GridSpec()
    assert grid.dx == pytest.approx(1e-3, rel=1e-12)
    assert grid.x[999] == pytest.approx(1.0, rel=1e-12)
    assert len(grid.padded_x) == grid.n_points + 2
    assert grid.padded_x[-1] == grid.x_max
    assert grid.x_max == 8.0


def test_grid_validation():
    with pytest.raises(InvalidParameterError):
        GridSpec(n_points=50)
    with pytest.raises(InvalidParameterError):
        GridSpec(x_max=1.0)


def test_step_is_right_continuous():
    trap = StepTrap(20.0)
    values = step_values(trap, np.array([0.5, 0.999, 1.0, 1.5]))
    assert list(values) == [0.0, 0.0, -400.0, -400.0]
    assert potential_on_grid(StepTrap(0.0), GridSpec(n_points=399)).min() == 0.0
    with pytest.raises(InvalidParameterError):
        StepTrap(-1.0)


def test_absorber_profile():
    spec = AbsorberSpec(start=1.5, strength=50.0, exponent=2)
    w = absorber_profile(spec, np.array([1.0, 1.5, 2.75, 4.0]), 4.0)
    assert w[0] == 0.0 and w[1] == 0.0
    assert w[2] == pytest.approx(12.5)
    assert w[3] == pytest.approx(50.0)
    cubic = absorber_profile(AbsorberSpec(), np.array([2.0, 5.0, 8.0]), 8.0)
    np.testing.assert_allclose(cubic, [0.0, 25.0, 200.0])
    with pytest.raises(InvalidParameterError):
        AbsorberSpec(start=0.9)
    with pytest.raises(InvalidParameterError):
        absorber_profile(AbsorberSpec(start=4.5), np.array([1.0]), 4.0)


def test_initial_packet_is_normalized_and_confined():
    grid = GridSpec()
    state = initial_packet(5.0, grid)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)
    assert state.tau == 0.0
    assert np.all(state.amplitudes[grid.x > 1.0 + 1e-9] == 0.0)
    assert state.amplitudes[999] != 0.0


def test_unresolved_packet():
    with pytest.raises(ResolutionError):
        initial_packet(100.0, GridSpec())
    with pytest.raises(InvalidParameterError):
        initial_packet(-1.0, GridSpec())
    with pytest.raises(ResolutionError):
        gaussian_trial(0.01, GridSpec())


def test_wave_state_shape_check():
    grid = GridSpec(n_points=399)
    with pytest.raises(InvalidParameterError):
        WaveState(np.zeros(10), 0.0, grid)
    state = WaveState(np.ones(399), 0.5, grid)
    assert state.amplitudes.dtype == complex
    padded = state.padded()
    assert padded[0] == 0.0 and padded[-1] == 0.0


def test_gaussian_trial_overlap_with_itself():
    grid = GridSpec(x_max=4.0, n_points=999)
    phi = gaussian_trial(0.3, grid)
    assert phi.norm() == pytest.approx(1.0, abs=1e-12)
    assert overlap(phi, phi) == pytest.approx(1.0, abs=1e-12)


def test_match_gaussian_width_for_default_packet():
    alpha = match_gaussian_width(5.0, GridSpec(x_max=4.0, n_points=999))
    assert 0.22 < alpha < 0.36
