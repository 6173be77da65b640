import numpy
import pytest

from mqme_dissipation.bath import DiscretizedBath, discretize_drude_lorentz
from mqme_dissipation.dissipation import (
    DissipationGrid,
    DissipativePotentialTable,
    ModeDissipationRates,
    accumulate,
    bin_mode_energies,
    dissipation_density,
    dissipative_potential,
    dissipative_spectral_densities,
    dissipative_spectral_density,
    energy_conservation,
    integrate_over_frequency,
    mode_dissipation_rate_constant,
    mode_dissipation_rates,
    mode_energies,
    prepare_kernels,
    run_mqme_d,
    total_mode_rate,
)
from mqme_dissipation.exceptions import ParameterError
from mqme_dissipation.mqme import PopulationTrajectory, line_broadening_tables, rate_matrix
from mqme_dissipation.spectral_density import DrudeLorentzSpectralDensity
from mqme_dissipation.subsystem import LocalBathSubsystem

OMEGAS = numpy.linspace(0.1, 3.0, 30)


def test_mode_rates_sum_to_the_energy_released_by_transfer(dimer, beta, quad):
    kernels = prepare_kernels(dimer, beta, quad)
    rates = rate_matrix(kernels, 2, quad)
    mode_rates = mode_dissipation_rates(dimer, kernels, beta, quad)
    for donor, acceptor in [(0, 1), (1, 0)]:
        released = (dimer.energies[donor] - dimer.energies[acceptor]) * rates.rates[acceptor, donor]
        assert mode_rates.pair_total(donor, acceptor) == pytest.approx(released, rel=1e-2)


def test_degenerate_dimer_releases_no_net_energy(make_dimer, beta, quad):
    result = run_mqme_d(make_dimer(energy_gap=0.0), beta, quad, OMEGAS, [1.0, 0.0], dt=0.01, t_end=20.0)
    assert result.trajectory.final[0] < 0.9
    for grid in result.grids:
        assert numpy.all(numpy.abs(grid.steady_state) <= 1e-6)


def test_single_mode_rate_matches_the_mode_table(dimer, beta, quad):
    kernels = prepare_kernels(dimer, beta, quad)
    table = mode_dissipation_rates(dimer, kernels, beta, quad)
    tables = line_broadening_tables(dimer, beta, quad)
    single = mode_dissipation_rate_constant(dimer, 0, 1, 123, tables, quad, beta, channel=1)
    assert single == pytest.approx(table.values[1][0, 123], rel=1e-10)


def test_potential_rejects_zero_frequency(dimer, beta, quad):
    tables = line_broadening_tables(dimer, beta, quad)
    with pytest.raises(ParameterError):
        dissipative_potential(dimer, 0, 1, tables, quad, [0.0, 1.0], beta)


def test_single_pair_density_matches_the_table(dimer, beta, quad):
    tables = line_broadening_tables(dimer, beta, quad)
    potential = dissipative_potential(dimer, 0, 1, tables, quad, OMEGAS, beta)
    assert potential.converged
    densities = dissipative_spectral_densities(dimer, prepare_kernels(dimer, beta, quad), OMEGAS, beta, quad)
    index = densities.pairs.index((0, 1))
    numpy.testing.assert_allclose(
        dissipative_spectral_density(dimer, 0, 1, 0, potential), densities.values[0, index], rtol=1e-10
    )


def test_uncoupled_channel_is_rejected(drude_lorentz):
    trimer = LocalBathSubsystem([0.0, 0.0, 0.0], numpy.zeros((3, 3)), [drude_lorentz] * 3)
    potential = DissipativePotentialTable(OMEGAS, 0, 1, numpy.ones_like(OMEGAS))
    with pytest.raises(ParameterError):
        dissipative_spectral_density(trimer, 0, 1, 2, potential)


def test_identical_local_baths_dissipate_identically(dimer, beta, quad):
    densities = dissipative_spectral_densities(dimer, prepare_kernels(dimer, beta, quad), OMEGAS, beta, quad)
    trajectory = PopulationTrajectory([0.0, 1.0], [[1.0, 0.0], [0.6, 0.4]])
    first, second = dissipation_density(trajectory, densities, dimer.channel_labels)
    numpy.testing.assert_array_equal(first.rate_density, second.rate_density)
    assert first.channel == "1"


def test_density_weights_follow_the_donor_population(dimer, beta, quad):
    densities = dissipative_spectral_densities(dimer, prepare_kernels(dimer, beta, quad), OMEGAS, beta, quad)
    trajectory = PopulationTrajectory([0.0], [[0.25, 0.75]])
    grid = dissipation_density(trajectory, densities)[0]
    expected = 0.25 * densities.values[0, densities.pairs.index((0, 1))]
    expected = expected + 0.75 * densities.values[0, densities.pairs.index((1, 0))]
    numpy.testing.assert_allclose(grid.rate_density[:, 0], expected)


def test_accumulation_starts_at_zero_and_integrates_along_time():
    times = numpy.linspace(0.0, 2.0, 21)
    grid = accumulate(DissipationGrid("1", [0.5, 1.0], times, numpy.vstack([numpy.full(21, 3.0), times])))
    numpy.testing.assert_array_equal(grid.cumulative[:, 0], 0.0)
    numpy.testing.assert_allclose(grid.cumulative[0], 3.0 * times)
    assert grid.steady_state[1] == pytest.approx(2.0)


def test_grid_before_accumulation_has_no_steady_state():
    grid = DissipationGrid("1", [1.0], [0.0, 1.0], [[0.0, 1.0]])
    with pytest.raises(ParameterError):
        grid.steady_state
    assert grid.to_frame()["E"].isna().all()


def test_grid_subsampling_keeps_the_last_time():
    times = numpy.arange(7.0)
    grid = accumulate(DissipationGrid("1", [1.0], times, [numpy.ones(7)]))
    subsampled = grid.subsample(4)
    numpy.testing.assert_array_equal(subsampled.times, [0.0, 4.0, 6.0])
    assert subsampled.steady_state[0] == pytest.approx(6.0)


def test_grid_table_layout():
    grid = accumulate(DissipationGrid("1", [0.5, 1.0], [0.0, 1.0, 2.0], numpy.ones((2, 3))))
    frame = grid.to_frame()
    assert list(frame.columns) == ["omega", "t", "D", "E"]
    assert len(frame) == 6
    assert list(grid.steady_state_frame().columns) == ["omega", "E_inf"]


def test_binning_preserves_energy_inside_the_grid():
    bath = DiscretizedBath([0.2, 0.55, 0.6, 1.4, 5.0], [0.1, 0.1, 0.1, 0.1, 0.1])
    energies = numpy.array([1.0, 2.0, 3.0, 4.0, 10.0])
    omegas = numpy.array([0.5, 1.0, 1.5])
    density = bin_mode_energies(bath, energies, omegas)
    widths = numpy.array([0.5, 0.5, 0.5])
    assert (density * widths).sum() == pytest.approx(9.0)
    assert density[0] == pytest.approx(5.0 / 0.5)
    with pytest.raises(ParameterError):
        bin_mode_energies(bath, energies, [1.0])


def test_conservation_report():
    report = energy_conservation(1.97, 2.0, rule="trapezoid")
    assert report["passed"]
    assert report["relative_error"] == pytest.approx(0.015)
    assert report["rule"] == "trapezoid"
    assert not energy_conservation(1.5, 2.0)["passed"]


def test_conservation_below_the_floor_compares_absolute_values():
    report = energy_conservation(1e-8, 0.0)
    assert report["relative_error"] is None
    assert report["passed"]
    assert not energy_conservation(1e-3, 0.0)["passed"]


def test_dimer_run_conserves_energy(dimer, beta, quad):
    result = run_mqme_d(
        dimer,
        beta,
        quad,
        OMEGAS,
        [1.0, 0.0],
        dt=0.01,
        t_end=40.0,
        output_stride=10,
        mode_resolved=True,
        conservation_points=3000,
    )
    assert result.converged
    assert result.energy_loss > 0
    assert result.conservation["passed"]
    assert result.conservation["mode_sum_dissipated"] == pytest.approx(result.energy_loss, rel=1e-2)
    assert result.trajectory.times[-1] == pytest.approx(40.0)
    assert result.trajectory.times.shape[0] == 401
    assert [grid.channel for grid in result.grids] == ["1", "2"]
    assert result.grids[0].cumulative.shape == (30, 401)
    assert result.stationary.sum() == pytest.approx(1.0)


def test_spin_boson_run_conserves_energy(spin_boson, beta, spin_boson_quad):
    result = run_mqme_d(
        spin_boson,
        beta,
        spin_boson_quad,
        OMEGAS,
        [1.0, 0.0],
        dt=0.01,
        t_end=30.0,
        output_stride=10,
        mode_resolved=True,
        conservation_points=3000,
    )
    assert result.converged
    assert result.conservation["passed"]
    assert result.conservation["mode_sum_dissipated"] == pytest.approx(result.energy_loss, rel=2e-2)
    assert len(result.grids) == 1
    assert result.grids[0].channel == "sigma_z"
    assert len(result.mode_energies) == 1
    assert result.mode_energies[0].shape == (spin_boson.baths[0].n_modes,)


def test_run_without_conservation_points_skips_the_check(dimer, beta, quad):
    result = run_mqme_d(dimer, beta, quad, OMEGAS, [1.0, 0.0], dt=0.01, t_end=1.0)
    assert result.conservation is None
    assert result.mode_energies is None


def test_mode_rate_weights_each_pair_by_its_donor():
    rates = ModeDissipationRates([(0, 1), (1, 0)], [[[1.0, 2.0, 0.0], [-0.5, 0.0, 3.0]]])
    trajectory = PopulationTrajectory([0.0, 1.0], [[1.0, 0.0], [0.25, 0.75]])
    (edot,) = total_mode_rate(trajectory, rates)
    assert edot.shape == (3, 2)
    numpy.testing.assert_allclose(edot[:, 0], [1.0, 2.0, 0.0])
    numpy.testing.assert_allclose(edot[:, 1], [0.25 - 0.375, 0.5, 2.25])
    (energies,) = mode_energies(trajectory, rates)
    numpy.testing.assert_allclose(energies, 0.5 * (edot[:, 0] + edot[:, 1]))


def test_vanishing_mode_rates_dissipate_nothing():
    rates = ModeDissipationRates([(0, 1), (1, 0)], [numpy.zeros((2, 4))])
    trajectory = PopulationTrajectory([0.0, 0.5], [[1.0, 0.0], [0.9, 0.1]])
    numpy.testing.assert_array_equal(total_mode_rate(trajectory, rates)[0], 0.0)


def test_doubling_the_frequency_grid_keeps_the_dissipated_energy(dimer, beta, quad):
    kernels = prepare_kernels(dimer, beta, quad)
    totals = []
    for n_points in [59, 117]:
        omegas = numpy.linspace(0.1, 3.0, n_points)
        result = run_mqme_d(dimer, beta, quad, omegas, [1.0, 0.0], dt=0.01, t_end=40.0, kernels=kernels)
        totals.append(sum(integrate_over_frequency(omegas, grid.steady_state) for grid in result.grids))
    assert totals[0] > 0
    assert totals[1] == pytest.approx(totals[0], rel=5e-3)


def test_weak_coupling_dissipation_peaks_at_the_energy_gap(beta, quad):
    model = DrudeLorentzSpectralDensity(reorganization_energy=0.05, cutoff=0.5)
    bath = discretize_drude_lorentz(model, n_modes=400, omega_max=15.0)
    dimer = LocalBathSubsystem([2.0, 0.0], [[0.0, 0.25], [0.25, 0.0]], [model, model], baths=[bath, bath])
    omegas = numpy.linspace(0.1, 3.0, 59)
    result = run_mqme_d(dimer, beta, quad, omegas, [1.0, 0.0], dt=0.01, t_end=40.0)
    for grid in result.grids:
        assert 1.6 <= omegas[numpy.argmax(grid.steady_state)] <= 2.4


def test_binned_mode_energies_follow_the_density(dimer, beta, quad):
    omegas = numpy.linspace(0.1, 3.0, 59)
    result = run_mqme_d(dimer, beta, quad, omegas, [1.0, 0.0], dt=0.01, t_end=40.0, mode_resolved=True)
    widths = numpy.full(omegas.shape, omegas[1] - omegas[0])
    for channel, grid in enumerate(result.grids):
        binned = bin_mode_energies(dimer.baths[channel], result.mode_energies[channel], omegas)
        from_modes = numpy.cumsum(binned * widths)
        from_density = numpy.cumsum(grid.steady_state * widths)
        assert from_modes[-1] == pytest.approx(from_density[-1], rel=5e-2)
        assert numpy.max(numpy.abs(from_modes - from_density)) <= 5e-2 * from_density[-1]
