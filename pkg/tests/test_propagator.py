import numpy as np
import pytest

from qrtrap.errors import CollapseSuspectedError, InvalidParameterError, SingularSystemError
from qrtrap.model import AbsorberSpec, GridSpec, StepTrap, WaveState, gaussian_trial, initial_packet
from qrtrap.observables import conserved_energy
from qrtrap.propagator import (
    PropagatorConfig,
    TridiagonalSystem,
    apply_hamiltonian,
    evolve,
    solve_tridiagonal,
    step,
)

SMALL = GridSpec(x_max=4.0, n_points=399)
CLOSED = AbsorberSpec(strength=0.0)


def _config(sigma=0.0, gamma=0.0, dt=1e-4, grid=SMALL, absorber=CLOSED, **kw):
    return PropagatorConfig(trap=StepTrap(sigma), gamma=gamma, dt=dt, absorber=absorber, grid=grid, **kw)


def _box_mode(k, grid):
    j = np.arange(1, grid.n_points + 1)
    values = np.sin(np.pi * k * j / (grid.n_points + 1)).astype(complex)
    eigenvalue = (2.0 - 2.0 * np.cos(np.pi * k / (grid.n_points + 1))) / grid.dx ** 2
    return values, eigenvalue


def test_tridiagonal_solver_matches_dense_solve():
    rng = np.random.default_rng(7)
    n = 60
    lower = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    upper = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    main = 6.0 + rng.normal(size=n) + 1j * rng.normal(size=n)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    system = TridiagonalSystem(lower, main, upper, rhs)

    dense = np.diag(main) + np.diag(upper, 1) + np.diag(lower, -1)
    expected = np.linalg.solve(dense, rhs)
    got = solve_tridiagonal(system)
    assert np.max(np.abs(got - expected)) <= 1e-12 * np.max(np.abs(expected))
    np.testing.assert_allclose(system.matvec(got), rhs, atol=1e-12)


def test_tridiagonal_solver_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        TridiagonalSystem(np.zeros(3), np.ones(3), np.zeros(2), np.ones(3))
    singular = TridiagonalSystem(np.zeros(4), np.zeros(5), np.zeros(4), np.ones(5))
    with pytest.raises(SingularSystemError):
        solve_tridiagonal(singular)


def test_hamiltonian_on_box_mode():
    values, eigenvalue = _box_mode(3, SMALL)
    state = WaveState(values, 0.0, SMALL)
    np.testing.assert_allclose(apply_hamiltonian(state, _config()), eigenvalue * values, atol=1e-9)


def test_hamiltonian_matches_dense_operator():
    rng = np.random.default_rng(3)
    config = _config(sigma=20.0, gamma=-0.4, absorber=AbsorberSpec())
    psi = rng.normal(size=SMALL.n_points) + 1j * rng.normal(size=SMALL.n_points)
    state = WaveState(psi, 0.0, SMALL)

    dx = SMALL.dx
    diag = 2.0 / dx ** 2 + config.potential + config.gamma * np.abs(psi) ** 2 / SMALL.x ** 2 - 1j * config.absorber_values
    off = -np.ones(SMALL.n_points - 1) / dx ** 2
    dense = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    np.testing.assert_allclose(apply_hamiltonian(state, config), dense @ psi, rtol=1e-12, atol=1e-8)

    without = apply_hamiltonian(state, config, include_absorber=False)
    np.testing.assert_allclose(without, (dense + 1j * np.diag(config.absorber_values)) @ psi, rtol=1e-12, atol=1e-8)


def test_laplacian_is_second_order_in_dx():
    alpha = 0.3

    def error(grid):
        x = grid.x
        psi = x * np.exp(-x ** 2 / (2 * alpha ** 2))
        exact = -np.exp(-x ** 2 / (2 * alpha ** 2)) * (x ** 3 / alpha ** 4 - 3 * x / alpha ** 2)
        got = apply_hamiltonian(WaveState(psi, 0.0, grid), _config(grid=grid))
        return np.max(np.abs(got - exact))

    ratio = error(GridSpec(x_max=4.0, n_points=399)) / error(GridSpec(x_max=4.0, n_points=799))
    assert ratio == pytest.approx(4.0, rel=0.2)


def test_linear_step_is_crank_nicolson_factor():
    values, eigenvalue = _box_mode(3, SMALL)
    config = _config(dt=1e-3)
    state = step(WaveState(values, 0.0, SMALL), config)
    factor = (1 - 0.5j * config.dt * eigenvalue) / (1 + 0.5j * config.dt * eigenvalue)
    np.testing.assert_allclose(state.amplitudes, factor * values, atol=1e-12)
    assert state.tau == pytest.approx(1e-3)


def test_box_mode_phase_error_is_second_order():
    values, eigenvalue = _box_mode(3, SMALL)
    initial = WaveState(values, 0.0, SMALL)

    def error(dt):
        series = evolve(initial, _config(dt=dt), 0.5, sample_every=10 ** 6, progress=False)
        exact = np.exp(-1j * eigenvalue * 0.5) * values
        return np.max(np.abs(series.final_state.amplitudes - exact))

    assert error(1e-3) / error(5e-4) == pytest.approx(4.0, rel=0.2)


def test_norm_is_conserved_without_absorber():
    config = _config(sigma=20.0, dt=1e-4)
    series = evolve(initial_packet(5.0, SMALL), config, 0.2, sample_every=200, progress=False)
    norms = series.column("norm_total")
    assert np.max(np.abs(norms - 1.0)) <= 1e-10
    assert series.tau[-1] == pytest.approx(0.2, abs=1e-15)


def test_absorber_removes_norm():
    config = _config(sigma=0.0, dt=2e-4, absorber=AbsorberSpec())
    series = evolve(initial_packet(5.0, SMALL), config, 0.5, sample_every=500, progress=False)
    assert series.samples[-1].norm_total < 0.9


def _moving_gaussian(grid, x0=1.0, width=0.15, k=15.0):
    x = grid.x
    values = np.exp(-((x - x0) ** 2) / (4 * width ** 2) + 1j * k * x)
    return WaveState(values / np.sqrt(grid.dx * np.sum(np.abs(values) ** 2)), 0.0, grid)


def test_default_absorber_leaks_below_a_thousandth():
    # same packet on a doubled domain without absorber; nothing returns from x = 16 before tau = 0.3
    dt = 2e-4
    absorbed = _config(dt=dt, grid=GridSpec(), absorber=AbsorberSpec())
    reference = _config(dt=dt, grid=GridSpec(x_max=16.0, n_points=15999), absorber=CLOSED)
    state_a = _moving_gaussian(absorbed.grid)
    state_r = _moving_gaussian(reference.grid)
    n_front = int(np.searchsorted(absorbed.grid.x, absorbed.absorber.start, side="right"))

    worst = 0.0
    for k in range(1, 1501):
        state_a = step(state_a, absorbed)
        state_r = step(state_r, reference)
        if k % 100 == 0:
            front_a = absorbed.grid.dx * np.sum(np.abs(state_a.amplitudes[:n_front]) ** 2)
            front_r = reference.grid.dx * np.sum(np.abs(state_r.amplitudes[:n_front]) ** 2)
            worst = max(worst, abs(front_a - front_r))
    assert state_a.norm() < 0.05
    assert worst < 1e-3


@pytest.mark.slow
def test_unitarity_over_many_steps():
    config = _config(sigma=20.0, dt=1e-4)
    state = initial_packet(5.0, SMALL)
    previous = state.norm()
    worst_step = 0.0
    for _ in range(100_000):
        state = step(state, config)
        current = state.norm()
        worst_step = max(worst_step, abs(current - previous) / previous)
        previous = current
    assert worst_step <= 1e-12
    assert abs(state.norm() - 1.0) <= 1e-8


@pytest.mark.parametrize("gamma", [0.5, -0.3])
def test_gp_energy_is_conserved(gamma):
    config = _config(sigma=20.0, gamma=gamma, dt=1e-4)
    state = initial_packet(5.0, SMALL)
    e0 = conserved_energy(state, config)
    for _ in range(1000):
        state = step(state, config)
    assert abs(conserved_energy(state, config) - e0) <= 1e-6 * abs(e0)
    assert state.norm() == pytest.approx(1.0, abs=1e-9)
    assert state.tau == pytest.approx(0.1)


@pytest.mark.parametrize("gamma", [0.0, 0.5])
def test_time_step_convergence_is_second_order(gamma):
    initial = gaussian_trial(0.3, SMALL)

    def final(dt):
        config = _config(gamma=gamma, dt=dt)
        return evolve(initial, config, 0.02, sample_every=10 ** 6, progress=False).final_state.amplitudes

    reference = final(1.25e-5)
    e1 = np.linalg.norm(final(2e-4) - reference)
    e2 = np.linalg.norm(final(1e-4) - reference)
    assert e1 / e2 == pytest.approx(4.0, rel=0.2)


def test_fixed_point_failure_surfaces_last_iterate():
    config = _config(sigma=20.0, gamma=-5.0, dt=1e-3, fixed_point_tol=1e-15, max_fixed_point_iters=2)
    with pytest.raises(CollapseSuspectedError) as exc:
        step(initial_packet(5.0, SMALL), config)
    assert exc.value.state.tau == pytest.approx(1e-3)
    assert exc.value.iterations == 2


def test_evolve_stops_or_continues_on_fixed_point_failure():
    config = _config(sigma=20.0, gamma=-5.0, dt=1e-3, fixed_point_tol=1e-15, max_fixed_point_iters=2)
    initial = initial_packet(5.0, SMALL)

    stopped = evolve(initial, config, 0.01, sample_every=5, progress=False)
    assert stopped.terminated == "collapse-suspected"
    assert len(stopped) == 2
    assert stopped.fixed_point_failures == [pytest.approx(1e-3)]

    continued = evolve(initial, config, 0.01, sample_every=5, stop_on_collapse=False, progress=False)
    assert continued.terminated is None
    assert len(continued.fixed_point_failures) == 10
    assert continued.tau[-1] == pytest.approx(0.01)


def test_evolve_sampling():
    config = _config(dt=1e-3)
    initial = initial_packet(5.0, SMALL)

    empty = evolve(initial, config, 0.0, progress=False)
    assert len(empty) == 1 and empty.final_state is initial

    series = evolve(initial, config, 0.012, sample_every=5, progress=False)
    np.testing.assert_allclose(series.tau, [0.0, 0.005, 0.01, 0.012], atol=1e-15)

    with pytest.raises(InvalidParameterError):
        evolve(initial, config, -1.0)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        _config(dt=0.0)
    with pytest.raises(InvalidParameterError):
        _config(fixed_point_tol=0.1)
    with pytest.raises(InvalidParameterError):
        step(initial_packet(5.0, GridSpec()), _config())
